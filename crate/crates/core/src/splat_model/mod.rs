//! Gaussian splat data model, the trained-splat PLY layout and procedural
//! test assets.

mod ply;
mod synthetic;

pub use ply::{load_splat_ply, save_splat_ply, SaveReport, PLY_FLOAT_PROPERTIES};
pub use synthetic::{generate_test_asset, AssetKind, AssetParams};

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Spherical-harmonic degree carried by every splat.
pub const SH_DEGREE: usize = 3;
/// Coefficients per colour channel, `(SH_DEGREE + 1)^2`.
pub const SH_COEFFS: usize = (SH_DEGREE + 1) * (SH_DEGREE + 1);

/// SH coefficients of one colour channel, band-major.
pub type ShCoeffs = [f64; SH_COEFFS];

/// Object label of the environment part of a scene.
pub const ENVIRONMENT_ID: u32 = 0;

/// One anisotropic 3D Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    /// Centre in metres.
    pub mean: Vector3<f64>,
    /// Per-axis standard deviations in metres.
    pub scale: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub opacity: f64,
    /// Colour coefficients, one row per RGB channel.
    pub sh: [ShCoeffs; 3],
}

impl Gaussian {
    /// An isotropic splat whose colour is carried by band 0 only.
    pub fn isotropic(mean: Vector3<f64>, sigma: f64, opacity: f64, rgb: [f64; 3]) -> Self {
        Gaussian {
            mean,
            scale: Vector3::repeat(sigma),
            orientation: UnitQuaternion::identity(),
            opacity,
            sh: dc_from_rgb(rgb),
        }
    }

    pub fn check(&self) -> Result<()> {
        let finite = self.mean.iter().all(|v| v.is_finite())
            && self.scale.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.opacity.is_finite()
            && self.sh.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidAsset("non-finite splat field".into()));
        }
        if self.scale.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidAsset(format!(
                "scale must be strictly positive, got {:?}",
                self.scale.as_slice()
            )));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::InvalidAsset(format!(
                "opacity {} outside [0, 1]",
                self.opacity
            )));
        }
        if (self.orientation.coords.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidAsset("orientation is not a unit quaternion".into()));
        }
        Ok(())
    }

    /// Band-0 colour, `clamp(C0 * dc + 0.5)` per channel.
    pub fn base_color(&self) -> [f64; 3] {
        std::array::from_fn(|c| (crate::sh::SH_C0 * self.sh[c][0] + 0.5).clamp(0.0, 1.0))
    }
}

/// SH rows that decode to `rgb` at every viewing direction.
pub fn dc_from_rgb(rgb: [f64; 3]) -> [ShCoeffs; 3] {
    let mut sh = [[0.0; SH_COEFFS]; 3];
    for (row, v) in sh.iter_mut().zip(rgb) {
        row[0] = (v - 0.5) / crate::sh::SH_C0;
    }
    sh
}

/// World-space covariance `R S S^T R^T`.
pub fn covariance_of(g: &Gaussian) -> Result<Matrix3<f64>> {
    if !(g.scale.iter().all(|v| v.is_finite()) && g.orientation.coords.iter().all(|v| v.is_finite())) {
        return Err(Error::InvalidAsset("non-finite scale or orientation".into()));
    }
    let r = g.orientation.to_rotation_matrix().into_inner();
    let rs = r * Matrix3::from_diagonal(&g.scale);
    let sigma = rs * rs.transpose();
    // Symmetrize so the result is symmetric to the last bit.
    Ok((sigma + sigma.transpose()) * 0.5)
}

/// A set of splats with a per-splat object label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianCloud {
    pub splats: Vec<Gaussian>,
    /// Object label of each splat, parallel to `splats`.
    pub object_ids: Vec<u32>,
    pub source_path: Option<String>,
}

impl GaussianCloud {
    pub fn new(splats: Vec<Gaussian>, object_id: u32) -> Self {
        let object_ids = vec![object_id; splats.len()];
        GaussianCloud {
            splats,
            object_ids,
            source_path: None,
        }
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    /// Relabels every splat.
    pub fn with_object_id(mut self, object_id: u32) -> Self {
        self.object_ids.clear();
        self.object_ids.resize(self.splats.len(), object_id);
        self
    }

    /// Sorted distinct labels present in the cloud.
    pub fn distinct_ids(&self) -> Vec<u32> {
        let mut ids = self.object_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Splats carrying `object_id`, as a cloud of their own.
    pub fn select(&self, object_id: u32) -> GaussianCloud {
        let splats = self
            .splats
            .iter()
            .zip(&self.object_ids)
            .filter(|(_, &id)| id == object_id)
            .map(|(g, _)| g.clone())
            .collect();
        GaussianCloud::new(splats, object_id)
    }

    pub fn check(&self) -> Result<()> {
        if self.object_ids.len() != self.splats.len() {
            return Err(Error::InvalidAsset(format!(
                "{} splats but {} object labels",
                self.splats.len(),
                self.object_ids.len()
            )));
        }
        for (i, g) in self.splats.iter().enumerate() {
            g.check()
                .map_err(|e| Error::InvalidAsset(format!("splat {i}: {e}")))?;
        }
        Ok(())
    }

    /// Axis-aligned bounds of the splat means, `None` when empty.
    pub fn mean_bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = self.splats.first()?.mean;
        Some(self.splats.iter().fold((first, first), |(lo, hi), g| {
            (lo.inf(&g.mean), hi.sup(&g.mean))
        }))
    }
}
