//! Collision geometry from splat clouds: point extraction, outlier removal,
//! α-shape surface reconstruction, smoothing and decimation.

mod alpha;
pub(crate) mod delaunay;
pub(crate) mod knn;
mod mesh;

use std::collections::HashMap;

use log::warn;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use alpha::{alpha_shape, convex_hull};
pub use mesh::{read_mesh, read_obj, read_stl, write_mesh, write_obj, write_stl, TriangleMesh, MIN_TRIANGLE_AREA};

use crate::error::{Error, Result};
use crate::sh::SH_C0;
use crate::splat_model::GaussianCloud;
use mesh::bounds_of;

/// Splat centres with their view-independent colour.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet {
    pub points: Vec<Vector3<f64>>,
    pub colors: Vec<[f64; 3]>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One point per splat at its mean, coloured from the band-0 coefficients.
pub fn extract_points(cloud: &GaussianCloud) -> PointSet {
    PointSet {
        points: cloud.splats.iter().map(|g| g.mean).collect(),
        colors: cloud
            .splats
            .iter()
            .map(|g| [0, 1, 2].map(|c| (SH_C0 * g.sh[c][0] + 0.5).clamp(0.0, 1.0)))
            .collect(),
    }
}

/// Statistical outlier filter: drops points whose mean distance to their
/// `k` nearest neighbours exceeds the global mean of that quantity by more
/// than `sigma_mult` standard deviations.
pub fn remove_outliers(points: &PointSet, k: usize, sigma_mult: f64) -> PointSet {
    if points.len() <= k || k == 0 {
        warn!("outlier removal needs more than {k} points, got {}; skipped", points.len());
        return points.clone();
    }
    let grid = knn::KnnGrid::new(&points.points);
    let mean_d: Vec<f64> = (0..points.len())
        .map(|i| grid.nearest(i, k).iter().map(|(d, _)| d).sum::<f64>() / k as f64)
        .collect();
    let n = mean_d.len() as f64;
    let mu = mean_d.iter().sum::<f64>() / n;
    let sd = (mean_d.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n).sqrt();
    // The relative slack keeps rounding noise from splitting equal values.
    let limit = mu + sigma_mult * sd + 1e-12 * mu;
    let keep = |i: usize| mean_d[i] <= limit;
    PointSet {
        points: (0..points.len()).filter(|&i| keep(i)).map(|i| points.points[i]).collect(),
        colors: (0..points.len()).filter(|&i| keep(i)).map(|i| points.colors[i]).collect(),
    }
}

/// Default α: three times the median nearest-neighbour spacing.
pub fn default_alpha(points: &[Vector3<f64>]) -> f64 {
    3.0 * knn::median_nn_spacing(points)
}

/// Uniform umbrella smoothing, `v += lambda * (mean(neighbours) - v)`,
/// applied `iterations` times to all vertices simultaneously.
pub fn laplacian_smooth(mesh: &TriangleMesh, iterations: usize, lambda: f64) -> TriangleMesh {
    let adj = mesh.neighbors();
    let mut out = mesh.clone();
    for _ in 0..iterations {
        let prev = out.vertices.clone();
        for (i, nb) in adj.iter().enumerate() {
            if nb.is_empty() {
                continue;
            }
            let avg = nb.iter().map(|&j| prev[j as usize]).sum::<Vector3<f64>>() / nb.len() as f64;
            out.vertices[i] = prev[i] + lambda * (avg - prev[i]);
        }
    }
    out
}

/// Vertex-clustering decimation on a grid anchored at the bounding-box
/// minimum. The cell grows by 20% until at most `target_triangles` remain.
/// If that opens a closed input, nearby cell sizes and a half-cell grid
/// shift are tried for a closed result.
/// Each cluster is represented by one of its own vertices, preferring one
/// that attains the bounding box, so the box survives decimation.
pub fn decimate(mesh: &TriangleMesh, target_triangles: usize) -> Result<TriangleMesh> {
    if target_triangles < 4 {
        return Err(Error::Parameter(format!("decimation target must be at least 4, got {target_triangles}")));
    }
    if mesh.triangles.len() <= target_triangles {
        return Ok(mesh.clone());
    }
    let (lo, hi) = bounds_of(&mesh.vertices).expect("mesh with triangles has vertices");
    let diag = (hi - lo).norm();
    let extreme: Vec<bool> = mesh
        .vertices
        .iter()
        .map(|v| (0..3).any(|a| v[a] == lo[a] || v[a] == hi[a]))
        .collect();
    let mut cell = diag * 1e-3;
    let out = loop {
        let out = cluster(mesh, lo, cell, &extreme);
        if out.triangles.len() <= target_triangles {
            break out;
        }
        cell *= 1.2;
    };
    if out.triangles.len() < 4 {
        return convex_hull(&out.vertices).or(Ok(out));
    }
    // Clustering can pinch a closed surface into non-manifold edges. Try
    // slightly larger cells and a half-cell grid shift before giving up.
    if mesh.is_watertight() && !out.is_watertight() {
        for k in 0..=CLOSING_TRIES {
            let c = cell * 1.02f64.powi(k as i32);
            for shift in [0.0, 0.5] {
                let alt = cluster(mesh, lo - Vector3::repeat(shift * c), c, &extreme);
                if alt.triangles.len() >= 4 && alt.triangles.len() <= target_triangles && alt.is_watertight() {
                    return Ok(alt);
                }
            }
        }
        warn!("decimated mesh is not closed");
    }
    Ok(out)
}

/// Extra cell sizes tried when clustering opens a closed mesh.
const CLOSING_TRIES: usize = 40;

fn cluster(mesh: &TriangleMesh, origin: Vector3<f64>, cell: f64, extreme: &[bool]) -> TriangleMesh {
    let key = |v: &Vector3<f64>| {
        let q = (v - origin) / cell;
        (q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64)
    };
    let mut members: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
    let mut cell_of = Vec::with_capacity(mesh.vertices.len());
    for (i, v) in mesh.vertices.iter().enumerate() {
        let k = key(v);
        members.entry(k).or_default().push(i as u32);
        cell_of.push(k);
    }
    let mut rep: HashMap<(i64, i64, i64), u32> = HashMap::with_capacity(members.len());
    for (k, ids) in &members {
        let chosen = ids.iter().copied().find(|&i| extreme[i as usize]).unwrap_or_else(|| {
            let mean = ids.iter().map(|&i| mesh.vertices[i as usize]).sum::<Vector3<f64>>() / ids.len() as f64;
            *ids
                .iter()
                .min_by(|&&a, &&b| {
                    let da = (mesh.vertices[a as usize] - mean).norm_squared();
                    let db = (mesh.vertices[b as usize] - mean).norm_squared();
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .unwrap()
        });
        rep.insert(*k, chosen);
    }
    let mut seen = HashMap::new();
    let mut tris = Vec::new();
    for t in &mesh.triangles {
        let r = t.map(|i| rep[&cell_of[i as usize]]);
        if r[0] == r[1] || r[1] == r[2] || r[0] == r[2] {
            continue;
        }
        let mut s = r;
        s.sort_unstable();
        if seen.insert(s, ()).is_some() {
            continue;
        }
        let [a, b, c] = r.map(|i| mesh.vertices[i as usize]);
        if 0.5 * (b - a).cross(&(c - a)).norm() > MIN_TRIANGLE_AREA {
            tris.push(r);
        }
    }
    TriangleMesh {
        vertices: mesh.vertices.clone(),
        triangles: tris,
        colors: mesh.colors.clone(),
    }
    .compact()
}

/// Convex polygon of coplanar points, fan-triangulated, wound so its
/// normal has a non-negative z component.
pub fn planar_hull(points: &[Vector3<f64>]) -> Result<TriangleMesh> {
    let fail = |reason: &str| Error::Reconstruction {
        stage: "planar_hull",
        reason: reason.to_string(),
    };
    let first = *points.first().ok_or_else(|| fail("no points"))?;
    let far = points
        .iter()
        .max_by(|a, b| (*a - first).norm_squared().total_cmp(&(*b - first).norm_squared()))
        .unwrap();
    let u = (far - first).try_normalize(0.0).ok_or_else(|| fail("points coincide"))?;
    let normal = points
        .iter()
        .map(|p| u.cross(&(p - first)))
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
        .and_then(|n| n.try_normalize(0.0))
        .ok_or_else(|| fail("points are collinear"))?;
    let v = normal.cross(&u);
    let mut idx: Vec<usize> = (0..points.len()).collect();
    let uv = |i: usize| {
        let d = points[i] - first;
        (d.dot(&u), d.dot(&v))
    };
    idx.sort_by(|&a, &b| {
        let (pa, pb) = (uv(a), uv(b));
        pa.0.total_cmp(&pb.0).then(pa.1.total_cmp(&pb.1))
    });
    let cross = |o: usize, a: usize, b: usize| {
        let (o, a, b) = (uv(o), uv(a), uv(b));
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    // Andrew's monotone chain, counter-clockwise in (u, v).
    let mut hull: Vec<usize> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 { Box::new(idx.iter()) } else { Box::new(idx.iter().rev()) };
        for &i in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(fail("points are collinear"));
    }
    let vertices: Vec<Vector3<f64>> = hull.iter().map(|&i| points[i]).collect();
    let flip = normal.z < 0.0;
    let triangles = (1..vertices.len() as u32 - 1)
        .map(|k| if flip { [0, k + 1, k] } else { [0, k, k + 1] })
        .collect();
    Ok(TriangleMesh::new(vertices, triangles))
}

/// Icosahedron subdivided `subdivisions` times and projected onto the
/// sphere of `radius` about the origin.
pub fn icosphere(subdivisions: usize, radius: f64) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vector3::from(*v).normalize())
    .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vector3<f64>>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    TriangleMesh::new(vertices, triangles)
}

/// Settings for turning a splat cloud into a collision mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshParams {
    /// α in metres; `None` picks [`default_alpha`].
    pub alpha: Option<f64>,
    pub outlier_k: usize,
    pub outlier_sigma: f64,
    pub smooth_iterations: usize,
    pub smooth_lambda: f64,
    pub target_triangles: usize,
}

impl Default for MeshParams {
    fn default() -> Self {
        MeshParams {
            alpha: None,
            outlier_k: 16,
            outlier_sigma: 2.0,
            smooth_iterations: 10,
            smooth_lambda: 0.5,
            target_triangles: 500,
        }
    }
}

/// Full pipeline: extract, filter, reconstruct, smooth, decimate.
pub fn mesh_from_cloud(cloud: &GaussianCloud, params: &MeshParams) -> Result<TriangleMesh> {
    let points = extract_points(cloud);
    if points.is_empty() {
        return Err(Error::Reconstruction {
            stage: "extract",
            reason: "cloud has no splats".into(),
        });
    }
    let clean = remove_outliers(&points, params.outlier_k, params.outlier_sigma);
    let alpha = params.alpha.unwrap_or_else(|| default_alpha(&clean.points));
    let mesh = match alpha_shape(&clean.points, alpha) {
        Err(Error::Reconstruction { reason, .. }) if reason.contains("coplanar") => {
            warn!("splat means are coplanar; using their planar hull");
            return planar_hull(&clean.points);
        }
        other => other?,
    };
    if mesh.triangles.is_empty() {
        return Err(Error::Reconstruction {
            stage: "alpha_shape",
            reason: format!("alpha {alpha} m produced an empty surface"),
        });
    }
    let smooth = laplacian_smooth(&mesh, params.smooth_iterations, params.smooth_lambda);
    decimate(&smooth, params.target_triangles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splat_model::{generate_test_asset, AssetKind, AssetParams};

    fn grid(n: usize) -> PointSet {
        let mut ps = PointSet::default();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    ps.points.push(Vector3::new(i as f64, j as f64, k as f64) * 0.01);
                    ps.colors.push([0.5; 3]);
                }
            }
        }
        ps
    }

    #[test]
    fn far_point_is_removed() {
        let mut ps = grid(8);
        ps.points.push(Vector3::repeat(1.0));
        ps.colors.push([0.0; 3]);
        let out = remove_outliers(&ps, 16, 2.0);
        assert_eq!(out.len(), ps.len() - 1);
        assert!(!out.points.contains(&Vector3::repeat(1.0)));
    }

    #[test]
    fn too_few_points_unchanged() {
        let ps = grid(2);
        assert_eq!(remove_outliers(&ps, 16, 2.0), ps);
    }

    #[test]
    fn extract_colors_from_dc() {
        let cloud = generate_test_asset(AssetKind::Sphere, &AssetParams::new([0.05; 3], 50, [0.2, 0.4, 0.9]), 1).unwrap();
        let ps = extract_points(&cloud);
        assert_eq!(ps.len(), 50);
        for c in &ps.colors {
            assert!((c[0] - 0.2).abs() < 1e-12 && (c[2] - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_identity_cases() {
        let m = convex_hull(&[
            Vector3::zeros(),
            Vector3::x(),
            Vector3::y(),
            Vector3::z(),
        ])
        .unwrap();
        assert_eq!(laplacian_smooth(&m, 5, 0.0), m);
        // Every vertex of a tetrahedron has the other three as neighbours,
        // so the centroid is the only fixed configuration; a regular one
        // contracts uniformly instead.
        let mut iso = m.clone();
        iso.vertices.push(Vector3::repeat(9.0));
        let s = laplacian_smooth(&iso, 3, 0.5);
        assert_eq!(s.vertices[4], Vector3::repeat(9.0));
    }

    #[test]
    fn flat_cloud_becomes_planar_hull() {
        let cloud = generate_test_asset(AssetKind::Plane, &AssetParams::new([1.0, 0.5, 0.0], 400, [0.5; 3]), 3).unwrap();
        let m = mesh_from_cloud(&cloud, &MeshParams::default()).unwrap();
        assert!(m.check().is_ok());
        // Samples sit about half a spacing inside the rectangle.
        assert!(m.area() > 0.42 && m.area() <= 0.5, "{}", m.area());
        for t in &m.triangles {
            let [a, b, c] = m.corners(t);
            assert!((b - a).cross(&(c - a)).z > 0.0);
        }
    }

    #[test]
    fn icosphere_is_closed_and_outward() {
        for n in 0..3 {
            let m = icosphere(n, 2.0);
            assert_eq!(m.triangles.len(), 20 * 4usize.pow(n as u32));
            assert!(m.is_watertight());
            assert!(m.volume() > 0.0 && m.volume() < 4.0 / 3.0 * std::f64::consts::PI * 8.0);
            assert!(m.vertices.iter().all(|v| (v.norm() - 2.0).abs() < 1e-12));
        }
    }

    #[test]
    fn decimate_rejects_tiny_target_and_keeps_small_mesh() {
        let m = convex_hull(&[Vector3::zeros(), Vector3::x(), Vector3::y(), Vector3::z()]).unwrap();
        assert!(decimate(&m, 3).is_err());
        assert_eq!(decimate(&m, 4).unwrap(), m);
    }
}
