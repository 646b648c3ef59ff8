use std::collections::BTreeSet;

use nalgebra::{Matrix3, Vector3};
use splatgen::raster::{CameraView, RenderOptions};
use splatgen::GaussianCloud;

/// Hull vertices by exhaustive facet enumeration: a point is on the hull
/// iff it belongs to a triangle with every other point on one closed side.
pub fn brute_force_hull_vertices(points: &[Vector3<f64>]) -> BTreeSet<usize> {
    let n = points.len();
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let nrm = (points[j] - points[i]).cross(&(points[k] - points[i]));
                if nrm.norm() < 1e-12 {
                    continue;
                }
                let (mut pos, mut neg) = (false, false);
                for (m, p) in points.iter().enumerate() {
                    if m == i || m == j || m == k {
                        continue;
                    }
                    let s = nrm.dot(&(p - points[i]));
                    pos |= s > 1e-12;
                    neg |= s < -1e-12;
                }
                if !(pos && neg) {
                    out.extend([i, j, k]);
                }
            }
        }
    }
    out
}

/// Evenly spread points on a sphere (golden-angle spiral).
pub fn fibonacci_sphere(n: usize, radius: f64) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            Vector3::new(r * th.cos(), r * th.sin(), z) * radius
        })
        .collect()
}

/// Root-mean-square distance of `points` from the sphere of `radius` about
/// the origin.
pub fn rms_to_sphere(points: &[Vector3<f64>], radius: f64) -> f64 {
    (points.iter().map(|p| (p.norm() - radius).powi(2)).sum::<f64>() / points.len() as f64).sqrt()
}

/// Supporting planes of a point set by exhaustive search: unit normals of
/// every vertex triple with all points on its closed negative side.
pub fn brute_force_facet_normals(points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let n = points.len();
    let mut out: Vec<Vector3<f64>> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let nrm = (points[j] - points[i]).cross(&(points[k] - points[i]));
                let len = nrm.norm();
                if len < 1e-12 {
                    continue;
                }
                let nrm = nrm / len;
                let side: Vec<f64> = points.iter().map(|p| nrm.dot(&(p - points[i]))).collect();
                let tol = 1e-9;
                if side.iter().all(|&s| s <= tol) {
                    out.push(nrm);
                } else if side.iter().all(|&s| s >= -tol) {
                    out.push(-nrm);
                }
            }
        }
    }
    out.sort_by(|a, b| a.iter().map(|x| (x * 1e6).round() as i64).cmp(b.iter().map(|x| (x * 1e6).round() as i64)));
    out.dedup_by(|a, b| (*a - *b).norm() < 1e-9);
    out
}

fn edge_directions(points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if let Some(d) = (points[j] - points[i]).try_normalize(1e-12) {
                out.push(d);
            }
        }
    }
    out
}

/// Separating-axis penetration depth of two convex point sets: the
/// smallest overlap over facet normals of both and cross products of
/// their vertex-pair directions. Negative means separated by that gap.
pub fn sat_penetration(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    let mut axes = brute_force_facet_normals(a);
    axes.extend(brute_force_facet_normals(b));
    let ea = edge_directions(a);
    let eb = edge_directions(b);
    for x in &ea {
        for y in &eb {
            if let Some(c) = x.cross(y).try_normalize(1e-9) {
                axes.push(c);
            }
        }
    }
    let mut best = f64::INFINITY;
    for d in axes {
        let (amin, amax) = a.iter().map(|p| p.dot(&d)).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
        let (bmin, bmax) = b.iter().map(|p| p.dot(&d)).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
        let overlap = (amax - bmin).min(bmax - amin);
        best = best.min(overlap);
    }
    best
}

/// Real SH basis up to degree 3 in the reference 3DGS sign convention.
fn sh16(d: &Vector3<f64>) -> [f64; 16] {
    let (x, y, z) = (d.x, d.y, d.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let c0 = 0.5 / std::f64::consts::PI.sqrt();
    let c1 = (3.0 / (4.0 * std::f64::consts::PI)).sqrt();
    [
        c0,
        -c1 * y,
        c1 * z,
        -c1 * x,
        1.0925484305920792 * x * y,
        -1.0925484305920792 * y * z,
        0.31539156525252005 * (2.0 * zz - xx - yy),
        -1.0925484305920792 * x * z,
        0.5462742152960396 * (xx - yy),
        -0.5900435899266435 * y * (3.0 * xx - yy),
        2.890611442640554 * x * y * z,
        -0.4570457994644658 * y * (4.0 * zz - xx - yy),
        0.3731763325901154 * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        -0.4570457994644658 * x * (4.0 * zz - xx - yy),
        1.445305721320277 * z * (xx - yy),
        -0.5900435899266435 * x * (xx - 3.0 * yy),
    ]
}

fn quat_matrix(q: &nalgebra::UnitQuaternion<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Per-pixel image of the reference renderer.
pub struct ReferenceImage {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Brute-force splatting: every splat is projected on its own, all of them
/// are sorted front to back once, and every pixel walks the full list.
pub fn reference_render(cloud: &GaussianCloud, view: &CameraView, opts: &RenderOptions) -> ReferenceImage {
    let k = view.intrinsics;
    let w2c = view.world_to_camera.rotation_matrix();
    let t = view.world_to_camera.translation;
    let eye = -(w2c.transpose() * t);
    struct S {
        u: f64,
        v: f64,
        conic: [f64; 3],
        z: f64,
        o: f64,
        c: [f64; 3],
        i: usize,
    }
    let mut list = Vec::new();
    for (i, g) in cloud.splats.iter().enumerate() {
        let p = w2c * g.mean + t;
        if p.z <= opts.z_near {
            continue;
        }
        let r = quat_matrix(&g.orientation);
        let m = r * Matrix3::from_diagonal(&g.scale);
        let sigma = m * m.transpose();
        let j = nalgebra::Matrix2x3::new(k.fx / p.z, 0.0, -k.fx * p.x / (p.z * p.z), 0.0, k.fy / p.z, -k.fy * p.y / (p.z * p.z));
        let a = j * w2c;
        let c = a * sigma * a.transpose();
        let (sxx, sxy, syy) = (c[(0, 0)] + opts.dilation, 0.5 * (c[(0, 1)] + c[(1, 0)]), c[(1, 1)] + opts.dilation);
        let det = sxx * syy - sxy * sxy;
        if det < 1e-12 {
            continue;
        }
        let dir = (g.mean - eye).normalize();
        let basis = sh16(&dir);
        let col = [0, 1, 2].map(|ch| {
            let v: f64 = basis.iter().zip(&g.sh[ch]).map(|(b, s)| b * s).sum();
            (v + 0.5).clamp(0.0, 1.0)
        });
        list.push(S {
            u: k.fx * p.x / p.z + k.cx,
            v: k.fy * p.y / p.z + k.cy,
            conic: [syy / det, -sxy / det, sxx / det],
            z: p.z,
            o: g.opacity,
            c: col,
            i,
        });
    }
    list.sort_by(|a, b| a.z.total_cmp(&b.z).then(a.i.cmp(&b.i)));

    let (wd, ht) = (view.width(), view.height());
    let mut img = ReferenceImage {
        width: wd,
        height: ht,
        rgb: vec![[0.0; 3]; wd * ht],
        depth: vec![0.0; wd * ht],
        alpha: vec![0.0; wd * ht],
    };
    for y in 0..ht {
        for x in 0..wd {
            let (mut rgb, mut d, mut tr) = ([0.0; 3], 0.0, 1.0);
            for s in &list {
                let (dx, dy) = (x as f64 - s.u, y as f64 - s.v);
                let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
                let a = (s.o * (-0.5 * q).exp()).min(opts.alpha_clamp);
                if a < opts.alpha_floor {
                    continue;
                }
                let wgt = a * tr;
                for ch in 0..3 {
                    rgb[ch] += s.c[ch] * wgt;
                }
                d += s.z * wgt;
                tr *= 1.0 - a;
                if tr < opts.t_min {
                    break;
                }
            }
            let alpha = 1.0 - tr;
            let p = y * wd + x;
            img.rgb[p] = rgb;
            img.alpha[p] = alpha;
            img.depth[p] = if alpha >= opts.background_alpha { d / alpha } else { 0.0 };
        }
    }
    img
}
