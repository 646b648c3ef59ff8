//! GJK distance and EPA penetration for convex shapes given by support
//! functions.

use nalgebra::Vector3;

pub trait Support {
    /// Farthest point of the shape along `dir`.
    fn support(&self, dir: &Vector3<f64>) -> Vector3<f64>;
    /// Any interior (or boundary) point.
    fn center(&self) -> Vector3<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct SupportPoint {
    /// `a - b`, a point of the Minkowski difference.
    pub w: Vector3<f64>,
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
}

fn support_pair<A: Support, B: Support>(a: &A, b: &B, dir: &Vector3<f64>) -> SupportPoint {
    let pa = a.support(dir);
    let pb = b.support(&-dir);
    SupportPoint { w: pa - pb, a: pa, b: pb }
}

#[derive(Debug, Clone)]
pub enum Gjk {
    Separated {
        distance: f64,
        point_a: Vector3<f64>,
        point_b: Vector3<f64>,
    },
    Overlapping(Vec<SupportPoint>),
}

const MAX_ITER: usize = 64;

/// Closest points between `a` and `b`, or the simplex proving overlap.
pub fn gjk<A: Support, B: Support>(a: &A, b: &B) -> Gjk {
    let mut dir = a.center() - b.center();
    if dir.norm_squared() < 1e-24 {
        dir = Vector3::x();
    }
    let mut simplex = vec![support_pair(a, b, &-dir)];
    let mut weights = vec![1.0];
    let mut v = simplex[0].w;
    for _ in 0..MAX_ITER {
        let vv = v.norm_squared();
        if vv < 1e-24 {
            return Gjk::Overlapping(simplex);
        }
        let w = support_pair(a, b, &-v);
        if vv - v.dot(&w.w) <= 1e-12 * vv.max(1e-12) || simplex.iter().any(|s| (s.w - w.w).norm_squared() < 1e-24) {
            break;
        }
        simplex.push(w);
        let (nv, kept) = closest_on_simplex(&simplex);
        match kept {
            None => return Gjk::Overlapping(simplex),
            Some(kw) => {
                simplex = kw.iter().map(|&(i, _)| simplex[i]).collect();
                weights = kw.iter().map(|&(_, l)| l).collect();
            }
        }
        if nv.norm_squared() >= vv {
            // No progress: numerical floor reached.
            v = nv;
            break;
        }
        v = nv;
    }
    let point_a = simplex.iter().zip(&weights).map(|(s, l)| s.a * *l).sum();
    let point_b = simplex.iter().zip(&weights).map(|(s, l)| s.b * *l).sum();
    Gjk::Separated {
        distance: v.norm(),
        point_a,
        point_b,
    }
}

/// Closest point of the simplex to the origin with the supporting vertices
/// and their barycentric weights; `None` when a tetrahedron contains the
/// origin.
#[allow(clippy::type_complexity)]
fn closest_on_simplex(s: &[SupportPoint]) -> (Vector3<f64>, Option<Vec<(usize, f64)>>) {
    match s.len() {
        1 => (s[0].w, Some(vec![(0, 1.0)])),
        2 => {
            let (p, k) = closest_segment(s[0].w, s[1].w);
            (p, Some(k.into_iter().map(|(i, l)| ([0, 1][i], l)).collect()))
        }
        3 => {
            let (p, k) = closest_triangle(s[0].w, s[1].w, s[2].w);
            (p, Some(k))
        }
        _ => {
            let w: Vec<Vector3<f64>> = s.iter().map(|p| p.w).collect();
            let mut best: Option<(f64, Vector3<f64>, Vec<(usize, f64)>)> = None;
            let faces = [[1, 2, 3, 0], [0, 2, 3, 1], [0, 1, 3, 2], [0, 1, 2, 3]];
            let mut outside_any = false;
            for f in faces {
                let n = (w[f[1]] - w[f[0]]).cross(&(w[f[2]] - w[f[0]]));
                let s_origin = -n.dot(&w[f[0]]);
                let s_opp = n.dot(&(w[f[3]] - w[f[0]]));
                let flat = s_opp.abs() <= 1e-14 * n.norm() * (w[f[3]] - w[f[0]]).norm().max(1e-300);
                if flat || s_origin * s_opp < 0.0 {
                    outside_any = true;
                    let (p, k) = closest_triangle(w[f[0]], w[f[1]], w[f[2]]);
                    let d = p.norm_squared();
                    if best.as_ref().is_none_or(|b| d < b.0) {
                        best = Some((d, p, k.into_iter().map(|(i, l)| (f[i], l)).collect()));
                    }
                }
            }
            if !outside_any {
                return (Vector3::zeros(), None);
            }
            let (_, p, k) = best.unwrap();
            (p, Some(k))
        }
    }
}

fn closest_segment(a: Vector3<f64>, b: Vector3<f64>) -> (Vector3<f64>, Vec<(usize, f64)>) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (a, vec![(0, 1.0)]);
    }
    let t = -a.dot(&ab) / len2;
    if t <= 0.0 {
        (a, vec![(0, 1.0)])
    } else if t >= 1.0 {
        (b, vec![(1, 1.0)])
    } else {
        (a + ab * t, vec![(0, 1.0 - t), (1, t)])
    }
}

/// Closest point of triangle `abc` to the origin (Voronoi-region walk).
pub(crate) fn closest_triangle(a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>) -> (Vector3<f64>, Vec<(usize, f64)>) {
    let ab = b - a;
    let ac = c - a;
    let ap = -a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, vec![(0, 1.0)]);
    }
    let bp = -b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, vec![(1, 1.0)]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, vec![(0, 1.0 - v), (1, v)]);
    }
    let cp = -c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, vec![(2, 1.0)]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, vec![(0, 1.0 - w), (2, w)]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, vec![(1, 1.0 - w), (2, w)]);
    }
    let denom = va + vb + vc;
    if denom == 0.0 {
        // Degenerate triangle: fall back to its edges.
        let cands = [closest_segment(a, b), closest_segment(b, c), closest_segment(a, c)];
        let maps = [[0, 1], [1, 2], [0, 2]];
        let (k, (p, bw)) = cands
            .into_iter()
            .enumerate()
            .min_by(|x, y| x.1 .0.norm_squared().total_cmp(&y.1 .0.norm_squared()))
            .unwrap();
        return (p, bw.into_iter().map(|(i, l)| (maps[k][i], l)).collect());
    }
    let v = vb / denom;
    let w = vc / denom;
    (a + ab * v + ac * w, vec![(0, 1.0 - v - w), (1, v), (2, w)])
}

/// Penetration found by EPA.
#[derive(Debug, Clone, Copy)]
pub struct Penetration {
    /// Unit direction from `a` towards `b`; moving `b` by `depth * normal`
    /// separates the shapes.
    pub normal: Vector3<f64>,
    pub depth: f64,
    pub point_a: Vector3<f64>,
    pub point_b: Vector3<f64>,
}

/// Expanding polytope on an overlapping GJK simplex. `None` if the
/// polytope cannot be grown to a full-dimensional start.
pub fn epa<A: Support, B: Support>(a: &A, b: &B, simplex: &[SupportPoint]) -> Option<Penetration> {
    let mut verts: Vec<SupportPoint> = simplex.to_vec();
    grow_to_tetrahedron(a, b, &mut verts)?;
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for f in [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]] {
        faces.push(f);
    }
    // Orient faces outward (away from the opposite vertex).
    let centroid = verts.iter().map(|v| v.w).sum::<Vector3<f64>>() / 4.0;
    for f in &mut faces {
        let n = (verts[f[1]].w - verts[f[0]].w).cross(&(verts[f[2]].w - verts[f[0]].w));
        if n.dot(&(verts[f[0]].w - centroid)) < 0.0 {
            f.swap(1, 2);
        }
    }
    let plane = |verts: &[SupportPoint], f: &[usize; 3]| {
        let n = (verts[f[1]].w - verts[f[0]].w).cross(&(verts[f[2]].w - verts[f[0]].w));
        let n = n.try_normalize(1e-300)?;
        Some((n, n.dot(&verts[f[0]].w)))
    };
    let mut best = None;
    for _ in 0..128 {
        let mut closest: Option<(usize, Vector3<f64>, f64)> = None;
        for (k, f) in faces.iter().enumerate() {
            if let Some((n, d)) = plane(&verts, f) {
                if closest.is_none_or(|c| d < c.2) {
                    closest = Some((k, n, d));
                }
            }
        }
        let (k, n, d) = closest?;
        best = Some((faces[k], n, d));
        let w = support_pair(a, b, &n);
        if n.dot(&w.w) - d <= 1e-10 + 1e-9 * d.abs() || verts.iter().any(|v| (v.w - w.w).norm_squared() < 1e-24) {
            break;
        }
        let wi = verts.len();
        verts.push(w);
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        let mut kept = Vec::with_capacity(faces.len());
        for f in faces.drain(..) {
            let visible = plane(&verts, &f).is_none_or(|(fn_, fd)| fn_.dot(&w.w) - fd > 0.0);
            if visible {
                for e in 0..3 {
                    let edge = (f[e], f[(e + 1) % 3]);
                    if let Some(pos) = horizon.iter().position(|&h| h == (edge.1, edge.0)) {
                        horizon.swap_remove(pos);
                    } else {
                        horizon.push(edge);
                    }
                }
            } else {
                kept.push(f);
            }
        }
        faces = kept;
        for (p, q) in horizon {
            faces.push([p, q, wi]);
        }
    }
    let (f, n, d) = best?;
    // Barycentric coordinates of the origin's projection on the face.
    let p = n * d;
    let [va, vb, vc] = f.map(|i| verts[i]);
    let (bary_p, bw) = closest_triangle(va.w - p, vb.w - p, vc.w - p);
    let _ = bary_p;
    let pts = [va, vb, vc];
    let point_a = bw.iter().map(|&(i, l)| pts[i].a * l).sum();
    let point_b = bw.iter().map(|&(i, l)| pts[i].b * l).sum();
    Some(Penetration {
        normal: n,
        depth: d.max(0.0),
        point_a,
        point_b,
    })
}

fn grow_to_tetrahedron<A: Support, B: Support>(a: &A, b: &B, verts: &mut Vec<SupportPoint>) -> Option<()> {
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    let distinct = |v: &[SupportPoint], w: &SupportPoint| v.iter().all(|s| (s.w - w.w).norm_squared() > 1e-24);
    if verts.len() == 1 {
        for ax in axes.iter().flat_map(|x| [*x, -x]) {
            let w = support_pair(a, b, &ax);
            if distinct(verts, &w) {
                verts.push(w);
                break;
            }
        }
    }
    if verts.len() == 2 {
        let d = verts[1].w - verts[0].w;
        let least = if d.x.abs() <= d.y.abs() && d.x.abs() <= d.z.abs() {
            Vector3::x()
        } else if d.y.abs() <= d.z.abs() {
            Vector3::y()
        } else {
            Vector3::z()
        };
        let e1 = d.cross(&least).normalize();
        let e2 = d.cross(&e1).normalize();
        for dir in [e1, -e1, e2, -e2] {
            let w = support_pair(a, b, &dir);
            if (w.w - verts[0].w).cross(&d).norm_squared() > 1e-24 * d.norm_squared() {
                verts.push(w);
                break;
            }
        }
    }
    if verts.len() == 3 {
        let n = (verts[1].w - verts[0].w).cross(&(verts[2].w - verts[0].w));
        for dir in [n, -n] {
            let w = support_pair(a, b, &dir);
            if (w.w - verts[0].w).dot(&n).abs() > 1e-14 * n.norm() {
                verts.push(w);
                break;
            }
        }
    }
    if verts.len() != 4 {
        return None;
    }
    let vol = (verts[1].w - verts[0].w)
        .cross(&(verts[2].w - verts[0].w))
        .dot(&(verts[3].w - verts[0].w));
    (vol.abs() > 1e-30).then_some(())
}
