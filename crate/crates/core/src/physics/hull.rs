use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{convex_hull, TriangleMesh};

/// A planar face of a hull, counter-clockwise seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct HullFace {
    pub vertices: Vec<u32>,
    pub normal: Vector3<f64>,
}

/// Convex collision shape in body coordinates (origin at the centre of
/// mass) with unit-density mass properties.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHull {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<HullFace>,
    /// Hull centroid in the model frame the input points were given in.
    pub model_com: Vector3<f64>,
    pub volume: f64,
    /// Inertia tensor about the centroid for density 1.
    pub unit_inertia: Matrix3<f64>,
    /// Largest vertex distance from the centroid.
    pub radius: f64,
}

impl ConvexHull {
    /// Hull of `points` (model frame).
    pub fn from_points(points: &[Vector3<f64>]) -> Result<Self> {
        let mesh = convex_hull(points)?;
        Self::from_convex_mesh(&mesh)
    }

    /// Hull of a mesh's vertices; the mesh itself need not be convex.
    pub fn from_mesh(mesh: &TriangleMesh) -> Result<Self> {
        Self::from_points(&mesh.vertices)
    }

    fn from_convex_mesh(mesh: &TriangleMesh) -> Result<Self> {
        let (volume, com, cov) = volume_moments(mesh);
        if !(volume > 0.0) {
            return Err(Error::InvalidAsset("collision hull has no volume".into()));
        }
        let cov_c = cov - volume * com * com.transpose();
        let unit_inertia = Matrix3::identity() * cov_c.trace() - cov_c;
        let vertices: Vec<Vector3<f64>> = mesh.vertices.iter().map(|v| v - com).collect();
        let radius = vertices.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let faces = merge_coplanar(mesh);
        Ok(ConvexHull {
            vertices,
            faces,
            model_com: com,
            volume,
            unit_inertia,
            radius,
        })
    }

    pub fn support(&self, dir: &Vector3<f64>) -> usize {
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (i, v) in self.vertices.iter().enumerate() {
            let d = v.dot(dir);
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Body-frame inertia for the given mass.
    pub fn inertia(&self, mass: f64) -> Matrix3<f64> {
        self.unit_inertia * (mass / self.volume)
    }
}

/// Volume, centroid and second moment `∫ x xᵀ dV` of a closed,
/// outward-wound mesh.
pub(crate) fn volume_moments(mesh: &TriangleMesh) -> (f64, Vector3<f64>, Matrix3<f64>) {
    let mut vol = 0.0;
    let mut first = Vector3::zeros();
    let mut second = Matrix3::zeros();
    for t in &mesh.triangles {
        let [a, b, c] = mesh.corners(t);
        let det = a.dot(&b.cross(&c));
        vol += det / 6.0;
        first += det / 24.0 * (a + b + c);
        let s = a + b + c;
        second += det / 120.0 * (a * a.transpose() + b * b.transpose() + c * c.transpose() + s * s.transpose());
    }
    let com = if vol != 0.0 { first / vol } else { Vector3::zeros() };
    (vol, com, second)
}

/// Groups edge-adjacent hull triangles with parallel normals into polygons.
fn merge_coplanar(mesh: &TriangleMesh) -> Vec<HullFace> {
    let normals: Vec<Vector3<f64>> = mesh
        .triangles
        .iter()
        .map(|t| {
            let [a, b, c] = mesh.corners(t);
            (b - a).cross(&(c - a)).normalize()
        })
        .collect();
    let mut edge_owner: HashMap<(u32, u32), usize> = HashMap::new();
    for (k, t) in mesh.triangles.iter().enumerate() {
        for e in 0..3 {
            edge_owner.insert((t[e], t[(e + 1) % 3]), k);
        }
    }
    let mut parent: Vec<usize> = (0..mesh.triangles.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (k, t) in mesh.triangles.iter().enumerate() {
        for e in 0..3 {
            if let Some(&o) = edge_owner.get(&(t[(e + 1) % 3], t[e])) {
                if normals[k].dot(&normals[o]) > 1.0 - 1e-9 {
                    let (a, b) = (find(&mut parent, k), find(&mut parent, o));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for k in 0..mesh.triangles.len() {
        let r = find(&mut parent, k);
        let i = *slot.entry(r).or_insert_with(|| {
            groups.push((r, Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(k);
    }
    groups
        .into_iter()
        .map(|(_, tris)| {
            let mut next: HashMap<u32, u32> = HashMap::new();
            let inside: std::collections::HashSet<(u32, u32)> = tris
                .iter()
                .flat_map(|&k| {
                    let t = mesh.triangles[k];
                    (0..3).map(move |e| (t[e], t[(e + 1) % 3]))
                })
                .collect();
            for &(a, b) in &inside {
                if !inside.contains(&(b, a)) {
                    next.insert(a, b);
                }
            }
            let start = *next.keys().min().unwrap();
            let mut loop_ = vec![start];
            let mut cur = next[&start];
            while cur != start && loop_.len() <= next.len() {
                loop_.push(cur);
                cur = next[&cur];
            }
            let normal = tris.iter().map(|&k| normals[k]).sum::<Vector3<f64>>().normalize();
            HullFace { vertices: loop_, normal }
        })
        .collect()
}
