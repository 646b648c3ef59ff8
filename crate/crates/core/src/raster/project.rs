use nalgebra::{Matrix2, Matrix2x3, Vector2};

use super::camera::CameraView;
use super::RenderOptions;
use crate::splat_model::{covariance_of, Gaussian};

/// A splat mapped to the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedSplat {
    pub center_px: Vector2<f64>,
    /// Screen-space covariance in px², dilation included.
    pub cov2d: Matrix2<f64>,
    /// Camera-space z of the mean, metres.
    pub depth_cam: f64,
    /// Inclusive pixel range `[x0, x1] x [y0, y1]` the splat can reach.
    pub pixel_bounds: [usize; 4],
}

/// The Jacobian of the pinhole map `(x, y, z) -> (fx x/z + cx, fy y/z + cy)`.
pub fn pinhole_jacobian(view: &CameraView, p_cam: &nalgebra::Vector3<f64>) -> Matrix2x3<f64> {
    let k = &view.intrinsics;
    let (x, y, z) = (p_cam.x, p_cam.y, p_cam.z);
    let iz = 1.0 / z;
    Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * x * iz * iz,
        0.0,
        k.fy * iz,
        -k.fy * y * iz * iz,
    )
}

/// Distance, in standard deviations, at which `opacity * exp(-q/2)` falls
/// to `floor`. `None` when the splat can never reach the floor.
pub(crate) fn footprint_sigmas(opacity: f64, floor: f64) -> Option<f64> {
    let ratio = opacity / floor;
    (ratio > 1.0).then(|| (2.0 * ratio.ln()).sqrt())
}

/// EWA projection of one splat with the default options.
///
/// Returns `None` when the splat is culled: its mean is closer than the
/// near plane, or its footprint (the ellipse where it still clears the
/// alpha floor, about 3 sigma) misses every pixel centre.
pub fn project_gaussian(g: &Gaussian, view: &CameraView) -> Option<ProjectedSplat> {
    project_with(g, view, &RenderOptions::default())
}

pub(crate) fn project_with(g: &Gaussian, view: &CameraView, opts: &RenderOptions) -> Option<ProjectedSplat> {
    let p_cam = view.to_camera(&g.mean);
    if !(p_cam.z > opts.z_near) {
        return None;
    }
    let w = view.world_to_camera.rotation_matrix();
    let sigma = covariance_of(g).ok()?;
    let j = pinhole_jacobian(view, &p_cam);
    let t = j * w;
    let mut cov2d = t * sigma * t.transpose();
    cov2d[(0, 1)] = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
    cov2d[(1, 0)] = cov2d[(0, 1)];
    cov2d[(0, 0)] += opts.dilation;
    cov2d[(1, 1)] += opts.dilation;

    let center_px = view.project_camera_point(&p_cam);
    let reach = footprint_sigmas(g.opacity, opts.alpha_floor)?;
    let hx = reach * cov2d[(0, 0)].max(0.0).sqrt();
    let hy = reach * cov2d[(1, 1)].max(0.0).sqrt();
    let (wd, ht) = (view.width() as f64, view.height() as f64);
    let x0 = (center_px.x - hx).ceil().max(0.0);
    let x1 = (center_px.x + hx).floor().min(wd - 1.0);
    let y0 = (center_px.y - hy).ceil().max(0.0);
    let y1 = (center_px.y + hy).floor().min(ht - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return None;
    }
    Some(ProjectedSplat {
        center_px,
        cov2d,
        depth_cam: p_cam.z,
        pixel_bounds: [x0 as usize, x1 as usize, y0 as usize, y1 as usize],
    })
}
