//! Real spherical harmonics up to degree 3 and band-wise coefficient
//! rotation.
//!
//! The basis, ordering and signs are those used by Gaussian-splatting
//! trainers: band-major, `m` running from `-l` to `l`, with
//! `Y_1 = C1 * (-y, z, -x)`.
//!
//! Rotating coefficients with [`sh_rotation_from`]`(R)` produces a function
//! `g` with `g(d) = f(R^T d)`, i.e. the lobe pattern is carried along by `R`.
//! Each band is rotated by its own orthogonal block, built from the 3x3
//! band-1 block with the Ivanic-Ruedenberg recurrence.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::splat_model::{ShCoeffs, SH_COEFFS};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// First coefficient index of each band.
const BAND_START: [usize; 4] = [0, 1, 4, 9];

/// The 16 basis functions at `dir`. `dir` is assumed unit length.
pub fn sh_basis(dir: &Vector3<f64>) -> ShCoeffs {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * x * y,
        SH_C2[1] * y * z,
        SH_C2[2] * (2.0 * zz - xx - yy),
        SH_C2[3] * x * z,
        SH_C2[4] * (xx - yy),
        SH_C3[0] * y * (3.0 * xx - yy),
        SH_C3[1] * x * y * z,
        SH_C3[2] * y * (4.0 * zz - xx - yy),
        SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        SH_C3[4] * x * (4.0 * zz - xx - yy),
        SH_C3[5] * z * (xx - yy),
        SH_C3[6] * x * (xx - 3.0 * yy),
    ]
}

pub(crate) fn eval_sh_unchecked(coeffs: &ShCoeffs, dir: &Vector3<f64>) -> f64 {
    sh_basis(dir)
        .iter()
        .zip(coeffs)
        .map(|(y, c)| y * c)
        .sum()
}

/// Evaluates `sum_k coeffs[k] * Y_k(dir)`.
pub fn eval_sh(coeffs: &ShCoeffs, dir: &Vector3<f64>) -> Result<f64> {
    let n = dir.norm();
    if !((n - 1.0).abs() <= 1e-9) {
        return Err(Error::Precondition(format!(
            "SH direction must be unit length, |dir| = {n}"
        )));
    }
    Ok(eval_sh_unchecked(coeffs, dir))
}

/// Block-diagonal rotation operator on degree-3 SH coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ShRotation {
    blocks: [DMatrix<f64>; 4],
}

impl ShRotation {
    pub fn identity() -> Self {
        ShRotation {
            blocks: std::array::from_fn(|l| DMatrix::identity(2 * l + 1, 2 * l + 1)),
        }
    }

    /// The `(2l+1) x (2l+1)` block acting on band `l`.
    pub fn block(&self, l: usize) -> &DMatrix<f64> {
        &self.blocks[l]
    }
}

#[inline]
fn centered(m: &DMatrix<f64>, i: i32, j: i32) -> f64 {
    let o = (m.nrows() as i32 - 1) / 2;
    m[((i + o) as usize, (j + o) as usize)]
}

fn p_term(i: i32, a: i32, b: i32, l: i32, r1: &DMatrix<f64>, prev: &DMatrix<f64>) -> f64 {
    if b == l {
        centered(r1, i, 1) * centered(prev, a, l - 1) - centered(r1, i, -1) * centered(prev, a, -l + 1)
    } else if b == -l {
        centered(r1, i, 1) * centered(prev, a, -l + 1) + centered(r1, i, -1) * centered(prev, a, l - 1)
    } else {
        centered(r1, i, 0) * centered(prev, a, b)
    }
}

fn band_block(l: i32, r1: &DMatrix<f64>, prev: &DMatrix<f64>) -> DMatrix<f64> {
    let size = (2 * l + 1) as usize;
    let mut out = DMatrix::zeros(size, size);
    let p = |i, a, b| p_term(i, a, b, l, r1, prev);
    for m in -l..=l {
        for n in -l..=l {
            let d = if m == 0 { 1.0 } else { 0.0 };
            let denom = if n.abs() == l {
                (2 * l * (2 * l - 1)) as f64
            } else {
                ((l + n) * (l - n)) as f64
            };
            let am = m.abs();
            let u = (((l + m) * (l - m)) as f64 / denom).sqrt();
            let v = 0.5 * ((1.0 + d) * ((l + am - 1) * (l + am)) as f64 / denom).sqrt() * (1.0 - 2.0 * d);
            let w = -0.5 * (((l - am - 1) * (l - am)) as f64 / denom).sqrt() * (1.0 - d);

            let mut value = 0.0;
            if u != 0.0 {
                value += u * p(0, m, n);
            }
            if v != 0.0 {
                let vt = if m == 0 {
                    p(1, 1, n) + p(-1, -1, n)
                } else if m > 0 {
                    let d1: f64 = if m == 1 { 1.0 } else { 0.0 };
                    p(1, m - 1, n) * (1.0 + d1).sqrt() - p(-1, -m + 1, n) * (1.0 - d1)
                } else {
                    let d1: f64 = if m == -1 { 1.0 } else { 0.0 };
                    p(1, m + 1, n) * (1.0 - d1) + p(-1, -m - 1, n) * (1.0 + d1).sqrt()
                };
                value += v * vt;
            }
            if w != 0.0 {
                let wt = if m > 0 {
                    p(1, m + 1, n) + p(-1, -m - 1, n)
                } else {
                    p(1, m - 1, n) - p(-1, -m + 1, n)
                };
                value += w * wt;
            }
            out[((m + l) as usize, (n + l) as usize)] = value;
        }
    }
    out
}

/// Builds the SH rotation operator for the rotation matrix `r`.
pub fn sh_rotation_from(r: &Matrix3<f64>) -> Result<ShRotation> {
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = r.determinant();
    if !(ortho <= 1e-9 && (det - 1.0).abs() <= 1e-9) {
        return Err(Error::Precondition(format!(
            "not a rotation: |R^T R - I| = {ortho:e}, det = {det}"
        )));
    }
    Ok(sh_rotation_unchecked(r))
}

pub(crate) fn sh_rotation_unchecked(r: &Matrix3<f64>) -> ShRotation {
    // Band 1 acts on (-y, z, -x); permute and sign-flip R accordingly.
    #[rustfmt::skip]
    let r1 = DMatrix::from_row_slice(3, 3, &[
         r[(1, 1)], -r[(1, 2)],  r[(1, 0)],
        -r[(2, 1)],  r[(2, 2)], -r[(2, 0)],
         r[(0, 1)], -r[(0, 2)],  r[(0, 0)],
    ]);
    let r2 = band_block(2, &r1, &r1);
    let r3 = band_block(3, &r1, &r2);
    ShRotation {
        blocks: [DMatrix::identity(1, 1), r1, r2, r3],
    }
}

/// Applies `op` band by band.
pub fn rotate_sh(coeffs: &ShCoeffs, op: &ShRotation) -> ShCoeffs {
    let mut out = [0.0; SH_COEFFS];
    out[0] = coeffs[0] * op.blocks[0][(0, 0)];
    for l in 1..4 {
        let start = BAND_START[l];
        let block = &op.blocks[l];
        let size = 2 * l + 1;
        for i in 0..size {
            let mut acc = 0.0;
            for j in 0..size {
                acc += block[(i, j)] * coeffs[start + j];
            }
            out[start + i] = acc;
        }
    }
    out
}

/// Euclidean norm of each band of `coeffs`.
pub fn band_norms(coeffs: &ShCoeffs) -> [f64; 4] {
    std::array::from_fn(|l| {
        let start = BAND_START[l];
        coeffs[start..start + 2 * l + 1]
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, UnitQuaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            if v.norm() > 1e-6 {
                return v.normalize();
            }
        }
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let q = nalgebra::Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
    }

    fn random_coeffs(rng: &mut ChaCha8Rng) -> ShCoeffs {
        std::array::from_fn(|_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn dc_basis_is_c0() {
        let mut c = [0.0; 16];
        c[0] = 1.0;
        let d = Vector3::new(0.3, -0.4, 0.5).normalize();
        assert!((eval_sh(&c, &d).unwrap() - 0.282_094_791_8).abs() < 1e-10);
        assert_eq!(eval_sh(&[0.0; 16], &d).unwrap(), 0.0);
    }

    #[test]
    fn non_unit_direction_rejected() {
        let err = eval_sh(&[0.0; 16], &Vector3::new(0.0, 0.0, 2.0));
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn basis_is_orthonormal_on_sphere_sample() {
        // Oracle: the integral of Y_j Y_k over the sphere, estimated on a
        // 1e5-point Fibonacci sphere sample, must be the identity.
        let n = 100_000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let mut gram = [[0.0f64; 16]; 16];
        for i in 0..n {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let y = sh_basis(&Vector3::new(r * phi.cos(), r * phi.sin(), z));
            for j in 0..16 {
                for k in 0..16 {
                    gram[j][k] += y[j] * y[k];
                }
            }
        }
        let area = 4.0 * std::f64::consts::PI / n as f64;
        for j in 0..16 {
            for k in 0..16 {
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((gram[j][k] * area - expected).abs() < 1e-3, "({j},{k})");
            }
        }
        // One-hot coefficients at the pole reproduce the basis value.
        let pole = Vector3::z();
        for k in 0..16 {
            let mut c = [0.0; 16];
            c[k] = 1.0;
            assert_eq!(eval_sh(&c, &pole).unwrap(), sh_basis(&pole)[k]);
        }
    }

    #[test]
    fn identity_rotation_has_identity_blocks() {
        let op = sh_rotation_from(&Matrix3::identity()).unwrap();
        for l in 0..4 {
            assert!((op.block(l) - DMatrix::identity(2 * l + 1, 2 * l + 1)).abs().max() < 1e-15);
        }
        let c: ShCoeffs = std::array::from_fn(|k| k as f64 * 0.1 - 0.4);
        assert_eq!(rotate_sh(&c, &ShRotation::identity()), c);
    }

    #[test]
    fn rejects_reflection() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(sh_rotation_from(&m), Err(Error::Precondition(_))));
    }

    #[test]
    fn evaluation_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let r = random_rotation(&mut rng);
            let c = random_coeffs(&mut rng);
            let op = sh_rotation_from(&r).unwrap();
            assert_eq!(op.block(0)[(0, 0)], 1.0);
            let rc = rotate_sh(&c, &op);
            for _ in 0..100 {
                let d = random_unit(&mut rng);
                let lhs = eval_sh(&rc, &d).unwrap();
                let rhs = eval_sh(&c, &(r.transpose() * d)).unwrap();
                assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
            }
            for l in 0..4 {
                let b = op.block(l);
                let err = (b.transpose() * b - DMatrix::identity(2 * l + 1, 2 * l + 1)).abs().max();
                assert!(err < 1e-10, "band {l}: {err}");
            }
        }
    }

    #[test]
    fn axis_rotations() {
        // Simple rotations exercise individual recurrence branches.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for axis in [Vector3::x_axis(), Vector3::y_axis(), Vector3::z_axis()] {
            for angle in [0.3, std::f64::consts::FRAC_PI_2, std::f64::consts::PI] {
                let r = Rotation3::from_axis_angle(&axis, angle).into_inner();
                let c = random_coeffs(&mut rng);
                let rc = rotate_sh(&c, &sh_rotation_from(&r).unwrap());
                let d = random_unit(&mut rng);
                let lhs = eval_sh(&rc, &d).unwrap();
                let rhs = eval_sh(&c, &(r.transpose() * d)).unwrap();
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_round_trip_and_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            let c = random_coeffs(&mut rng);
            let rc = rotate_sh(&c, &sh_rotation_from(&r).unwrap());
            let back = rotate_sh(&rc, &sh_rotation_from(&r.transpose()).unwrap());
            for k in 0..16 {
                assert!((back[k] - c[k]).abs() < 1e-9);
            }
            for (a, b) in band_norms(&c).iter().zip(band_norms(&rc)) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
