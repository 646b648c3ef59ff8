//! CPU splat rasterizer.
//!
//! Splats are projected with the EWA approximation, binned into square
//! tiles, sorted front to back by camera depth within each tile and
//! alpha-blended per pixel. Tiles are independent and rendered in parallel;
//! each tile always blends in the same order, so buffers are bit-identical
//! for any worker count.

mod camera;
mod mask;
mod project;

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::Serialize;

pub use camera::{look_at_pose, CameraView, Intrinsics};
pub use mask::Mask;
pub use project::{pinhole_jacobian, project_gaussian, ProjectedSplat};

use crate::error::{Error, Result};
use crate::sh::eval_sh_unchecked;
use crate::splat_model::GaussianCloud;

/// Determinant below which a screen-space covariance counts as singular.
pub const SINGULAR_DET: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub tile_size: usize,
    /// Blending stops once transmittance drops below this.
    pub t_min: f64,
    pub alpha_floor: f64,
    pub alpha_clamp: f64,
    /// Added to the diagonal of every screen-space covariance, px².
    pub dilation: f64,
    pub z_near: f64,
    /// Pixels with accumulated alpha below this are background.
    pub background_alpha: f64,
    /// Size of a dedicated thread pool; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            tile_size: 16,
            t_min: 1e-4,
            alpha_floor: 1.0 / 255.0,
            alpha_clamp: 0.99,
            dilation: 0.3,
            z_near: 0.01,
            background_alpha: 0.5,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RenderStats {
    pub splats_total: usize,
    pub splats_culled: usize,
    pub splats_singular: usize,
    pub tiles_touched: usize,
}

/// Row-major image buffers of one render.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[f64; 3]>,
    /// Metres; 0 on background pixels.
    pub depth: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Sorted ids that own a plane in `object_weight`.
    pub object_ids: Vec<u32>,
    pub object_weight: Vec<Vec<f64>>,
    pub stats: RenderStats,
}

impl RenderOutput {
    pub fn weight_plane(&self, object_id: u32) -> Option<&[f64]> {
        self.object_ids
            .binary_search(&object_id)
            .ok()
            .map(|i| self.object_weight[i].as_slice())
    }

    /// Pixels whose accumulated alpha clears the background threshold.
    pub fn foreground(&self, threshold: f64) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.alpha.iter().map(|&a| a >= threshold).collect(),
        }
    }

    /// RGB quantized to 8 bits, interleaved.
    pub fn rgb8(&self) -> Vec<u8> {
        self.rgb
            .iter()
            .flat_map(|c| c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect()
    }
}

/// Everything blending needs about one visible splat.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PreparedSplat {
    pub index: usize,
    pub center: Vector2<f64>,
    /// Inverse of the screen-space covariance.
    pub conic: Matrix2<f64>,
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    pub plane: usize,
    pub bounds: [usize; 4],
}

impl PreparedSplat {
    /// Blend alpha at pixel `(x, y)`; `None` below the floor.
    #[inline]
    pub fn alpha_at(&self, x: usize, y: usize, opts: &RenderOptions) -> Option<f64> {
        let dx = x as f64 - self.center.x;
        let dy = y as f64 - self.center.y;
        let c = &self.conic;
        let q = c[(0, 0)] * dx * dx + 2.0 * c[(0, 1)] * dx * dy + c[(1, 1)] * dy * dy;
        let a = (self.opacity * (-0.5 * q).exp()).min(opts.alpha_clamp);
        (a >= opts.alpha_floor).then_some(a)
    }
}

/// Projects, colours and filters every splat of `cloud`.
pub(crate) fn prepare(
    cloud: &GaussianCloud,
    view: &CameraView,
    opts: &RenderOptions,
    object_ids: &[u32],
    stats: &mut RenderStats,
) -> Vec<PreparedSplat> {
    let eye = view.center();
    let mut out = Vec::with_capacity(cloud.len());
    for (index, (g, id)) in cloud.splats.iter().zip(&cloud.object_ids).enumerate() {
        let Some(p) = project::project_with(g, view, opts) else {
            stats.splats_culled += 1;
            continue;
        };
        if p.cov2d.determinant() < SINGULAR_DET {
            stats.splats_singular += 1;
            continue;
        }
        let Some(conic) = p.cov2d.try_inverse() else {
            stats.splats_singular += 1;
            continue;
        };
        let dir = g.mean - eye;
        let n = dir.norm();
        let dir = if n > 0.0 { dir / n } else { nalgebra::Vector3::z() };
        let color = [0, 1, 2].map(|c| (eval_sh_unchecked(&g.sh[c], &dir) + 0.5).clamp(0.0, 1.0));
        out.push(PreparedSplat {
            index,
            center: p.center_px,
            conic,
            depth: p.depth_cam,
            opacity: g.opacity,
            color,
            plane: object_ids.binary_search(id).expect("id comes from the cloud"),
            bounds: p.pixel_bounds,
        });
    }
    out
}

/// Per-pixel accumulator shared by the tiled renderer and test oracles.
#[derive(Debug, Clone)]
pub(crate) struct PixelAccum {
    pub rgb: [f64; 3],
    pub depth: f64,
    pub transmittance: f64,
    pub weights: Vec<f64>,
}

impl PixelAccum {
    pub fn new(planes: usize) -> Self {
        PixelAccum {
            rgb: [0.0; 3],
            depth: 0.0,
            transmittance: 1.0,
            weights: vec![0.0; planes],
        }
    }

    /// Blends one splat; returns false once the pixel is saturated.
    #[inline]
    pub fn blend(&mut self, s: &PreparedSplat, alpha: f64, opts: &RenderOptions) -> bool {
        let w = alpha * self.transmittance;
        for c in 0..3 {
            self.rgb[c] += s.color[c] * w;
        }
        self.depth += s.depth * w;
        self.weights[s.plane] += w;
        self.transmittance *= 1.0 - alpha;
        self.transmittance >= opts.t_min
    }

    pub fn alpha(&self) -> f64 {
        (1.0 - self.transmittance).clamp(0.0, 1.0)
    }

    pub fn final_depth(&self, opts: &RenderOptions) -> f64 {
        let a = self.alpha();
        if a >= opts.background_alpha {
            self.depth / a
        } else {
            0.0
        }
    }
}

/// Renders `cloud` from `view`.
///
/// Fails only on an invalid view or options; degenerate splats are skipped
/// and counted in [`RenderStats`].
pub fn render(cloud: &GaussianCloud, view: &CameraView, opts: &RenderOptions) -> Result<RenderOutput> {
    view.check()?;
    if opts.tile_size == 0 || !(opts.alpha_clamp > 0.0 && opts.alpha_clamp <= 1.0) {
        return Err(Error::Parameter(format!("invalid render options {opts:?}")));
    }
    match opts.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
            Ok(pool.install(|| render_tiles(cloud, view, opts)))
        }
        None => Ok(render_tiles(cloud, view, opts)),
    }
}

struct TileResult {
    rgb: Vec<[f64; 3]>,
    depth: Vec<f64>,
    alpha: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

fn render_tiles(cloud: &GaussianCloud, view: &CameraView, opts: &RenderOptions) -> RenderOutput {
    let (width, height) = (view.width(), view.height());
    let object_ids = cloud.distinct_ids();
    let planes = object_ids.len();
    let mut stats = RenderStats {
        splats_total: cloud.len(),
        ..Default::default()
    };
    let splats = prepare(cloud, view, opts, &object_ids, &mut stats);

    let ts = opts.tile_size;
    let (tiles_x, tiles_y) = (width.div_ceil(ts), height.div_ceil(ts));
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (k, s) in splats.iter().enumerate() {
        let [x0, x1, y0, y1] = s.bounds;
        for ty in y0 / ts..=y1 / ts {
            for tx in x0 / ts..=x1 / ts {
                bins[ty * tiles_x + tx].push(k as u32);
            }
        }
    }
    for bin in &mut bins {
        bin.sort_by(|&a, &b| {
            let (a, b) = (&splats[a as usize], &splats[b as usize]);
            a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index))
        });
    }
    stats.tiles_touched = bins.iter().filter(|b| !b.is_empty()).count();

    let tiles: Vec<TileResult> = bins
        .par_iter()
        .enumerate()
        .map(|(t, bin)| {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let (x0, y0) = (tx * ts, ty * ts);
            let (x1, y1) = ((x0 + ts).min(width), (y0 + ts).min(height));
            let n = (x1 - x0) * (y1 - y0);
            let mut out = TileResult {
                rgb: Vec::with_capacity(n),
                depth: Vec::with_capacity(n),
                alpha: Vec::with_capacity(n),
                weights: vec![Vec::with_capacity(n); planes],
            };
            let mut acc = PixelAccum::new(planes);
            for y in y0..y1 {
                for x in x0..x1 {
                    acc.rgb = [0.0; 3];
                    acc.depth = 0.0;
                    acc.transmittance = 1.0;
                    acc.weights.iter_mut().for_each(|w| *w = 0.0);
                    for &k in bin {
                        let s = &splats[k as usize];
                        if let Some(a) = s.alpha_at(x, y, opts) {
                            if !acc.blend(s, a, opts) {
                                break;
                            }
                        }
                    }
                    out.rgb.push(acc.rgb);
                    out.depth.push(acc.final_depth(opts));
                    out.alpha.push(acc.alpha());
                    for (p, w) in acc.weights.iter().enumerate() {
                        out.weights[p].push(*w);
                    }
                }
            }
            out
        })
        .collect();

    let mut output = RenderOutput {
        width,
        height,
        rgb: vec![[0.0; 3]; width * height],
        depth: vec![0.0; width * height],
        alpha: vec![0.0; width * height],
        object_ids,
        object_weight: vec![vec![0.0; width * height]; planes],
        stats,
    };
    for (t, tile) in tiles.into_iter().enumerate() {
        let (x0, y0) = ((t % tiles_x) * ts, (t / tiles_x) * ts);
        let tw = (x0 + ts).min(width) - x0;
        for (i, rgb) in tile.rgb.iter().enumerate() {
            let p = (y0 + i / tw) * width + x0 + i % tw;
            output.rgb[p] = *rgb;
            output.depth[p] = tile.depth[i];
            output.alpha[p] = tile.alpha[i];
            for (plane, w) in tile.weights.iter().enumerate() {
                output.object_weight[plane][p] = w[i];
            }
        }
    }
    output
}

/// Amodal silhouette of a single-object cloud.
pub fn render_silhouette(cloud: &GaussianCloud, view: &CameraView) -> Result<Mask> {
    let ids = cloud.distinct_ids();
    if ids.len() > 1 {
        return Err(Error::Precondition(format!(
            "silhouette needs a single object, got ids {ids:?}"
        )));
    }
    let opts = RenderOptions::default();
    Ok(render(cloud, view, &opts)?.foreground(opts.background_alpha))
}

/// Per-object visible pixels of a composed render.
///
/// A foreground pixel goes to the id with the strictly largest blend
/// weight; ties go to the lower id. Every id of the render gets an entry,
/// possibly empty.
pub fn visibility_masks(output: &RenderOutput) -> BTreeMap<u32, Mask> {
    let threshold = RenderOptions::default().background_alpha;
    let mut masks: Vec<Mask> = output
        .object_ids
        .iter()
        .map(|_| Mask::empty(output.width, output.height))
        .collect();
    for p in 0..output.width * output.height {
        if output.alpha[p] < threshold {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (plane, w) in output.object_weight.iter().enumerate() {
            if best.is_none_or(|(_, b)| w[p] > b) {
                best = Some((plane, w[p]));
            }
        }
        if let Some((plane, _)) = best {
            masks[plane].data[p] = true;
        }
    }
    output.object_ids.iter().copied().zip(masks).collect()
}
