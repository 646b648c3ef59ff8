//! Procedural splat assets with known geometry, used as ground truth in
//! tests and demos.

use nalgebra::{Rotation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dc_from_rgb, Gaussian, GaussianCloud};
use crate::error::{Error, Result};
use crate::geometry::knn::mean_nn_spacing;

/// Tangential splat size relative to the mean nearest-neighbour spacing.
pub const SPACING_FACTOR: f64 = 0.7;
/// Thickness of a surface splat along its normal, relative to its
/// tangential size.
pub const SURFEL_THICKNESS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetKind {
    /// `extent[0]` is the radius.
    Sphere,
    /// `extent` holds the full side lengths.
    Box,
    /// Axis-aligned rectangle `extent[0] x extent[1]` in the plane `z = center.z`.
    Plane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetParams {
    pub extent: [f64; 3],
    pub count: usize,
    pub color: [f64; 3],
    #[serde(default)]
    pub center: [f64; 3],
    #[serde(default = "default_opacity")]
    pub opacity: f64,
}

fn default_opacity() -> f64 {
    0.9
}

impl AssetParams {
    pub fn new(extent: [f64; 3], count: usize, color: [f64; 3]) -> Self {
        AssetParams {
            extent,
            count,
            color,
            center: [0.0; 3],
            opacity: default_opacity(),
        }
    }

    pub fn centered_at(mut self, center: [f64; 3]) -> Self {
        self.center = center;
        self
    }
}

/// Builds a surface-sampled splat cloud of the requested shape.
///
/// Means lie exactly on the surface; each splat is a flat disc aligned with
/// the local surface. Output is a pure function of `(kind, params, seed)`.
pub fn generate_test_asset(kind: AssetKind, params: &AssetParams, seed: u64) -> Result<GaussianCloud> {
    let used = match kind {
        AssetKind::Sphere => &params.extent[..1],
        AssetKind::Box => &params.extent[..],
        AssetKind::Plane => &params.extent[..2],
    };
    if used.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
        return Err(Error::Parameter(format!(
            "extent must be positive, got {:?}",
            params.extent
        )));
    }
    if !(0.0..=1.0).contains(&params.opacity) || params.color.iter().any(|c| !c.is_finite()) {
        return Err(Error::Parameter("opacity must lie in [0, 1] and color be finite".into()));
    }
    if params.count == 0 {
        return Ok(GaussianCloud::default());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = Vector3::from(params.center);
    let samples: Vec<(Vector3<f64>, Vector3<f64>)> = match kind {
        AssetKind::Sphere => sphere_samples(params.extent[0], params.count, &mut rng),
        AssetKind::Box => box_samples(Vector3::from(params.extent), params.count, &mut rng),
        AssetKind::Plane => {
            let offset = (rng.random::<f64>(), rng.random::<f64>());
            r2_sequence(params.count, offset)
                .map(|(u, v)| {
                    (
                        Vector3::new(
                            (u - 0.5) * params.extent[0],
                            (v - 0.5) * params.extent[1],
                            0.0,
                        ),
                        Vector3::z(),
                    )
                })
                .collect()
        }
    };
    let means: Vec<Vector3<f64>> = samples.iter().map(|(p, _)| p + center).collect();
    let spacing = mean_nn_spacing(&means);
    let tangential = if spacing > 0.0 {
        SPACING_FACTOR * spacing
    } else {
        SPACING_FACTOR * used.iter().cloned().fold(0.0, f64::max)
    };
    let scale = Vector3::new(tangential, tangential, tangential * SURFEL_THICKNESS);
    let sh = dc_from_rgb(params.color);
    let splats = samples
        .iter()
        .zip(means)
        .map(|((_, normal), mean)| Gaussian {
            mean,
            scale,
            orientation: orient_z_to(normal),
            opacity: params.opacity,
            sh,
        })
        .collect();
    Ok(GaussianCloud::new(splats, 0))
}

fn orient_z_to(normal: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::rotation_between(&Vector3::z(), normal).unwrap_or_else(|| {
        // Antiparallel: half turn about x.
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
    })
}

/// Additive recurrence with the plastic number; well spread for any `n`.
fn r2_sequence(n: usize, offset: (f64, f64)) -> impl Iterator<Item = (f64, f64)> {
    const G: f64 = 1.324_717_957_244_746;
    let a1 = 1.0 / G;
    let a2 = 1.0 / (G * G);
    (0..n).map(move |i| {
        let i = i as f64 + 1.0;
        ((offset.0 + a1 * i).fract(), (offset.1 + a2 * i).fract())
    })
}

fn sphere_samples(radius: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let axis = Vector3::new(
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
    );
    let angle = rng.random::<f64>() * std::f64::consts::TAU;
    let spin = Unit::try_new(axis, 1e-9)
        .map(|a| Rotation3::from_axis_angle(&a, angle))
        .unwrap_or_else(Rotation3::identity);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            let dir = spin * Vector3::new(r * phi.cos(), r * phi.sin(), z);
            let dir = dir.normalize();
            (dir * radius, dir)
        })
        .collect()
}

fn box_samples(size: Vector3<f64>, n: usize, rng: &mut ChaCha8Rng) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    // Faces as (normal axis, sign); tangent axes are the other two.
    let faces: Vec<(usize, f64)> = (0..3).flat_map(|a| [(a, 1.0), (a, -1.0)]).collect();
    let area = |axis: usize| {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        size[u] * size[v]
    };
    let total: f64 = faces.iter().map(|&(a, _)| area(a)).sum();
    // Largest-remainder apportionment so the counts sum to n.
    let quotas: Vec<f64> = faces.iter().map(|&(a, _)| n as f64 * area(a) / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..faces.len()).collect();
    order.sort_by(|&i, &j| {
        (quotas[j] - quotas[j].floor())
            .total_cmp(&(quotas[i] - quotas[i].floor()))
            .then(i.cmp(&j))
    });
    let short = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }

    let half = size / 2.0;
    let mut out = Vec::with_capacity(n);
    for (&(axis, sign), &count) in faces.iter().zip(&counts) {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let offset = (rng.random::<f64>(), rng.random::<f64>());
        for (a, b) in r2_sequence(count, offset) {
            let mut p = Vector3::zeros();
            p[axis] = sign * half[axis];
            p[u] = (a - 0.5) * size[u];
            p[v] = (b - 0.5) * size[v];
            let mut normal = Vector3::zeros();
            normal[axis] = sign;
            out.push((p, normal));
        }
    }
    out
}
