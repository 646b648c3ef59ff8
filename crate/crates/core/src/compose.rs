//! Rigid transformation and merging of splat clouds.

use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh::{rotate_sh, sh_rotation_unchecked};
use crate::splat_model::GaussianCloud;

/// A proper rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RigidTransformRepr", into = "RigidTransformRepr")]
pub struct RigidTransform {
    pub rotation: UnitQuaternion<f64>,
    /// Metres.
    pub translation: Vector3<f64>,
}

/// JSON form: `{"q": [w, x, y, z], "t": [x, y, z]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigidTransformRepr {
    q: [f64; 4],
    t: [f64; 3],
}

impl From<RigidTransformRepr> for RigidTransform {
    fn from(r: RigidTransformRepr) -> Self {
        let q = nalgebra::Quaternion::new(r.q[0], r.q[1], r.q[2], r.q[3]);
        RigidTransform::new(UnitQuaternion::from_quaternion(q), Vector3::from(r.t))
    }
}

impl From<RigidTransform> for RigidTransformRepr {
    fn from(t: RigidTransform) -> Self {
        let q = t.rotation.quaternion();
        RigidTransformRepr {
            q: [q.w, q.i, q.j, q.k],
            t: t.translation.into(),
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let inv = self.rotation.inverse();
        RigidTransform::new(inv, -(inv * self.translation))
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        RigidTransform::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.coords.iter().chain(self.translation.iter()).all(|v| v.is_finite())
    }
}

/// Shifts every mean by `t`; nothing else changes.
pub fn translate_cloud(cloud: &GaussianCloud, t: &Vector3<f64>) -> GaussianCloud {
    let mut out = cloud.clone();
    for g in &mut out.splats {
        g.mean += t;
    }
    out
}

/// Applies `transform` to means, orientations and SH coefficients.
/// Opacities and scales are untouched.
pub fn transform_cloud(cloud: &GaussianCloud, transform: &RigidTransform) -> GaussianCloud {
    let rot = transform.rotation_matrix();
    let op = sh_rotation_unchecked(&rot);
    let mut out = cloud.clone();
    for g in &mut out.splats {
        g.mean = rot * g.mean + transform.translation;
        g.orientation = transform.rotation * g.orientation;
        for row in &mut g.sh {
            *row = rotate_sh(row, &op);
        }
    }
    out
}

/// Concatenates `parts` in order, labelling every splat with its part's id.
pub fn merge_clouds(parts: &[(GaussianCloud, u32)]) -> Result<GaussianCloud> {
    let mut seen = std::collections::BTreeSet::new();
    for (_, id) in parts {
        if !seen.insert(*id) {
            return Err(Error::Config(format!("duplicate object id {id} in merge")));
        }
    }
    let total = parts.iter().map(|(c, _)| c.len()).sum();
    let mut merged = GaussianCloud {
        splats: Vec::with_capacity(total),
        object_ids: Vec::with_capacity(total),
        source_path: None,
    };
    for (cloud, id) in parts {
        merged.splats.extend(cloud.splats.iter().cloned());
        merged.object_ids.extend(std::iter::repeat(*id).take(cloud.len()));
    }
    Ok(merged)
}
