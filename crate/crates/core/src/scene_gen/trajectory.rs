use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;

use crate::compose::RigidTransform;
use crate::error::{Error, Result};
use crate::geometry::icosphere;
use crate::raster::{look_at_pose, CameraView, Intrinsics};

/// Cameras on a hemisphere around `target`, all looking at it.
///
/// Directions are icosphere vertices whose elevation lies in
/// `elevation_deg`; the sphere is refined until at least `count` of them
/// qualify, then `count` are taken evenly from the list ordered by
/// elevation and azimuth.
pub fn hemisphere_poses(
    target: Vector3<f64>,
    radius: f64,
    elevation_deg: [f64; 2],
    count: usize,
) -> Result<Vec<RigidTransform>> {
    let [lo, hi] = elevation_deg;
    if !(radius > 0.0) || count == 0 || !(lo <= hi) || lo < -90.0 || hi > 90.0 {
        return Err(Error::Config(format!(
            "hemisphere needs radius > 0, count >= 1 and -90 <= elevation lo <= hi <= 90; got radius {radius}, count {count}, elevation {elevation_deg:?}"
        )));
    }
    // Elevation is measured from the xy plane; straight up is 90.
    for level in 0..8 {
        let mut dirs: Vec<(f64, f64, Vector3<f64>)> = icosphere(level, 1.0)
            .vertices
            .into_iter()
            .filter_map(|d| {
                let elev = d.z.clamp(-1.0, 1.0).asin().to_degrees();
                (elev >= lo - 1e-9 && elev <= hi + 1e-9).then(|| (elev, d.y.atan2(d.x), d))
            })
            .collect();
        if dirs.len() < count {
            continue;
        }
        dirs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let poses = (0..count)
            .map(|i| {
                let d = dirs[i * dirs.len() / count].2;
                let up = if d.z.abs() > 1.0 - 1e-9 { Vector3::y() } else { Vector3::z() };
                look_at_pose(target + d * radius, target, up)
            })
            .collect();
        return Ok(poses);
    }
    Err(Error::Config(format!(
        "elevation band {elevation_deg:?} is too narrow to hold {count} camera directions"
    )))
}

fn camera_center(pose: &RigidTransform) -> Vector3<f64> {
    pose.inverse().translation
}

/// Spherical interpolation between two orientations, falling back to the
/// normalized linear blend when they nearly coincide.
pub fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, t: f64) -> UnitQuaternion<f64> {
    a.try_slerp(b, t, 1e-12).unwrap_or_else(|| a.nlerp(b, t))
}

/// Camera path through `k_keys` poses drawn from `pose_set`.
///
/// The keys are drawn without replacement and chained by nearest camera
/// centre from a random first key. Frames are evenly spaced in arc length
/// along the polyline of centres; orientations follow by slerp within each
/// segment. When all keys share a centre, frames are evenly spaced in the
/// segment index instead.
pub fn sample_trajectory<R: Rng>(
    pose_set: &[RigidTransform],
    intrinsics: &Intrinsics,
    k_keys: usize,
    n_frames: usize,
    rng: &mut R,
) -> Result<Vec<CameraView>> {
    if pose_set.len() < 2 || k_keys < 2 || k_keys > pose_set.len() || n_frames < k_keys {
        return Err(Error::Config(format!(
            "trajectory needs 2 <= k_keys <= poses and frames >= k_keys; got {} poses, k_keys {k_keys}, {n_frames} frames",
            pose_set.len()
        )));
    }
    let mut left: Vec<usize> = rand::seq::index::sample(rng, pose_set.len(), k_keys).into_vec();
    let first = left.swap_remove(rng.random_range(0..left.len()));
    let mut keys = vec![pose_set[first]];
    while !left.is_empty() {
        let here = camera_center(keys.last().expect("non-empty"));
        let (pos, _) = left
            .iter()
            .enumerate()
            .map(|(i, &k)| (i, (camera_center(&pose_set[k]) - here).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("non-empty");
        keys.push(pose_set[left.remove(pos)]);
    }

    let centers: Vec<Vector3<f64>> = keys.iter().map(camera_center).collect();
    let cam_rot: Vec<UnitQuaternion<f64>> = keys.iter().map(|k| k.rotation.inverse()).collect();
    let mut cum = vec![0.0];
    for w in centers.windows(2) {
        cum.push(cum.last().expect("non-empty") + (w[1] - w[0]).norm());
    }
    let total = *cum.last().expect("non-empty");
    let segments = keys.len() - 1;

    let frames = (0..n_frames)
        .map(|i| {
            let u = i as f64 / (n_frames - 1) as f64;
            // (segment, local parameter)
            let (j, t) = if total > 0.0 {
                let s = u * total;
                let j = (0..segments).find(|&j| s <= cum[j + 1]).unwrap_or(segments - 1);
                let len = cum[j + 1] - cum[j];
                (j, if len > 0.0 { ((s - cum[j]) / len).clamp(0.0, 1.0) } else { 0.0 })
            } else {
                let x = u * segments as f64;
                let j = (x.floor() as usize).min(segments - 1);
                (j, x - j as f64)
            };
            let pose = if t == 0.0 {
                keys[j]
            } else if t == 1.0 {
                keys[j + 1]
            } else {
                let c = centers[j] + (centers[j + 1] - centers[j]) * t;
                let r = slerp(&cam_rot[j], &cam_rot[j + 1], t).inverse();
                RigidTransform::new(r, -(r * c))
            };
            CameraView::new(*intrinsics, pose)
        })
        .collect();
    Ok(frames)
}
