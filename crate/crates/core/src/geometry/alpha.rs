use std::collections::{HashMap, VecDeque};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::delaunay::{circumcircle, circumsphere, initial_simplex, Delaunay, FACES, INF};
use super::mesh::{bounds_of, TriangleMesh, MIN_TRIANGLE_AREA};
use crate::error::{Error, Result};

const JITTER_SEED: u64 = 0x5eed_a1fa;
const JITTER_SCALE: f64 = 1e-9;

/// Boundary of the α-complex of `points`.
///
/// Tetrahedra with circumradius at most `alpha` are solid; triangles whose
/// smallest circumsphere has radius at most `alpha` and is empty also
/// belong to the complex, so thin sheets and cospherical samples still
/// produce a surface. `f64::INFINITY` yields the convex hull. Output
/// vertices are a subset of the input points, wound outward.
pub fn alpha_shape(points: &[Vector3<f64>], alpha: f64) -> Result<TriangleMesh> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    if points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
        return Err(Error::Parameter("non-finite point".into()));
    }
    let (unique, original) = dedup(points);
    // Jitter would hide flat input, so reject it beforehand.
    initial_simplex(&unique)?;
    let diag = bounds_of(&unique).map_or(0.0, |(lo, hi)| (hi - lo).norm());
    let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED);
    let jittered: Vec<Vector3<f64>> = unique
        .iter()
        .map(|p| {
            let d = Vector3::new(
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
            );
            p + d * (JITTER_SCALE * diag)
        })
        .collect();
    let dt = Delaunay::build(jittered)?;

    let kept: Vec<bool> = dt
        .tets
        .iter()
        .map(|t| {
            t.alive && !t.is_ghost() && {
                let [a, b, c, d] = t.v.map(|v| dt.points[v as usize]);
                alpha.is_infinite() || circumsphere(&a, &b, &c, &d).1 <= alpha
            }
        })
        .collect();

    let mut regular = Vec::new();
    let mut singular = Vec::new();
    for (ti, t) in dt.tets.iter().enumerate() {
        if !t.alive {
            continue;
        }
        for i in 0..4 {
            let nb = t.n[i] as usize;
            let face = FACES[i].map(|k| t.v[k]);
            if kept[ti] {
                if !kept[nb] {
                    regular.push(face);
                }
                continue;
            }
            if kept[nb] || alpha.is_infinite() || face.contains(&INF) {
                continue;
            }
            // Visit each face between two unkept tetrahedra once.
            let nb_ghost = dt.tets[nb].is_ghost();
            if t.is_ghost() || !(ti < nb || nb_ghost) {
                continue;
            }
            let [a, b, c] = face.map(|v| dt.points[v as usize]);
            let (center, r) = circumcircle(&a, &b, &c);
            if r > alpha {
                continue;
            }
            let apexes = [t.v[i], opposite(&dt.tets[nb].v, &face)];
            let gabriel = apexes
                .iter()
                .filter(|&&v| v != INF)
                .all(|&v| (dt.points[v as usize] - center).norm() >= r);
            if gabriel {
                singular.push(face);
            }
        }
    }

    let n_regular = regular.len();
    let mut tris = regular;
    tris.extend(singular);
    let vertices: Vec<Vector3<f64>> = original;
    tris.retain(|t| {
        let [a, b, c] = t.map(|i| vertices[i as usize]);
        0.5 * (b - a).cross(&(c - a)).norm() > MIN_TRIANGLE_AREA
    });
    let n_regular = n_regular.min(tris.len());
    orient_components(&vertices, &mut tris, n_regular);
    Ok(TriangleMesh::new(vertices, tris).compact())
}

/// Convex hull of `points` as an outward-wound mesh.
pub fn convex_hull(points: &[Vector3<f64>]) -> Result<TriangleMesh> {
    alpha_shape(points, f64::INFINITY)
}

fn opposite(v: &[u32; 4], face: &[u32; 3]) -> u32 {
    *v.iter().find(|x| !face.contains(x)).unwrap()
}

/// Distinct points in first-seen order, returned twice: the copy that gets
/// triangulated and the copy whose coordinates end up in the mesh.
fn dedup(points: &[Vector3<f64>]) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    let mut seen: HashMap<[u64; 3], ()> = HashMap::with_capacity(points.len());
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let key = [p.x, p.y, p.z].map(|x| (x + 0.0).to_bits());
        if seen.insert(key, ()).is_none() {
            out.push(*p);
        }
    }
    (out.clone(), out)
}

/// Makes winding consistent across manifold edges. Components seeded by a
/// regular face (index `< n_regular`) keep that face's winding; the others
/// are flipped if their enclosed volume comes out negative.
fn orient_components(vertices: &[Vector3<f64>], tris: &mut [[u32; 3]], n_regular: usize) {
    let mut by_edge: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    for (k, t) in tris.iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push(k);
        }
    }
    let has_directed = |t: &[u32; 3], a: u32, b: u32| (0..3).any(|e| t[e] == a && t[(e + 1) % 3] == b);
    let mut done = vec![false; tris.len()];
    for seed in 0..tris.len() {
        if done[seed] {
            continue;
        }
        done[seed] = true;
        let mut component = vec![seed];
        let mut queue = VecDeque::from([seed]);
        while let Some(k) = queue.pop_front() {
            let t = tris[k];
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                let users = &by_edge[&(a.min(b), a.max(b))];
                if users.len() != 2 {
                    continue;
                }
                let other = if users[0] == k { users[1] } else { users[0] };
                if done[other] {
                    continue;
                }
                if has_directed(&tris[other], a, b) {
                    tris[other].swap(1, 2);
                }
                done[other] = true;
                component.push(other);
                queue.push_back(other);
            }
        }
        if seed >= n_regular {
            let vol: f64 = component
                .iter()
                .map(|&k| {
                    let [a, b, c] = tris[k].map(|i| vertices[i as usize]);
                    a.dot(&b.cross(&c))
                })
                .sum();
            if vol < 0.0 {
                for &k in &component {
                    tris[k].swap(1, 2);
                }
            }
        }
    }
}
