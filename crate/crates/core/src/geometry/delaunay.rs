//! Incremental 3D Delaunay tetrahedralization (Bowyer-Watson).
//!
//! The triangulation is closed with ghost tetrahedra that share the
//! infinite vertex [`INF`], so every finite tetrahedron has four neighbours
//! and hull insertion needs no special casing. Orientation and in-sphere
//! tests use exact adaptive predicates.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use robust::Coord3D;

use crate::error::{Error, Result};

pub(crate) const INF: u32 = u32::MAX;
const NONE: u32 = u32::MAX;

/// Outward vertex order of the face opposite vertex `i` of a positively
/// oriented tetrahedron.
pub(crate) const FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tet {
    pub v: [u32; 4],
    /// `n[i]` is the tetrahedron across the face opposite `v[i]`.
    pub n: [u32; 4],
    pub alive: bool,
}

impl Tet {
    pub fn is_ghost(&self) -> bool {
        self.v.contains(&INF)
    }

    fn face(&self, i: usize) -> [u32; 3] {
        FACES[i].map(|k| self.v[k])
    }
}

fn c3(p: &Vector3<f64>) -> Coord3D<f64> {
    Coord3D { x: p.x, y: p.y, z: p.z }
}

/// Positive when `d` lies on the side of the plane `abc` that
/// `(b - a) x (c - a)` points to.
pub(crate) fn orient(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>, d: &Vector3<f64>) -> f64 {
    -robust::orient3d(c3(a), c3(b), c3(c), c3(d))
}

/// Positive when `e` is strictly inside the sphere through a positively
/// oriented `abcd`.
pub(crate) fn in_sphere(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
    d: &Vector3<f64>,
    e: &Vector3<f64>,
) -> f64 {
    -robust::insphere(c3(a), c3(b), c3(c), c3(d), c3(e))
}

pub(crate) struct Delaunay {
    pub points: Vec<Vector3<f64>>,
    pub tets: Vec<Tet>,
    free: Vec<u32>,
    last: u32,
    rng: u64,
    /// Points that could not be inserted (exact duplicates).
    pub skipped: Vec<u32>,
}

impl Delaunay {
    /// Triangulates `points`, which must hold no exact duplicates.
    pub fn build(points: Vec<Vector3<f64>>) -> Result<Self> {
        let seed = initial_simplex(&points)?;
        let mut dt = Delaunay {
            points,
            tets: Vec::new(),
            free: Vec::new(),
            last: 0,
            rng: 0x9e37_79b9_7f4a_7c15,
            skipped: Vec::new(),
        };
        dt.bootstrap(seed);
        let mut order: Vec<u32> = (0..dt.points.len() as u32).filter(|i| !seed.contains(i)).collect();
        sort_morton(&dt.points, &mut order);
        for p in order {
            if !dt.insert(p) {
                dt.skipped.push(p);
            }
        }
        Ok(dt)
    }

    #[cfg(test)]
    pub fn finite_tets(&self) -> impl Iterator<Item = (usize, &Tet)> {
        self.tets
            .iter()
            .enumerate()
            .filter(|(_, t)| t.alive && !t.is_ghost())
    }

    pub fn pt(&self, v: u32) -> &Vector3<f64> {
        &self.points[v as usize]
    }

    fn bootstrap(&mut self, s: [u32; 4]) {
        let [a, b, c, d] = s;
        let v = if orient(self.pt(a), self.pt(b), self.pt(c), self.pt(d)) > 0.0 {
            [a, b, c, d]
        } else {
            [b, a, c, d]
        };
        let mut ids = vec![self.alloc(Tet { v, n: [NONE; 4], alive: true })];
        for i in 0..4 {
            let f = FACES[i].map(|k| v[k]);
            ids.push(self.alloc(Tet {
                v: [f[0], f[1], f[2], INF],
                n: [NONE; 4],
                alive: true,
            }));
        }
        self.link(&ids);
        self.last = ids[0];
    }

    fn alloc(&mut self, t: Tet) -> u32 {
        if let Some(i) = self.free.pop() {
            self.tets[i as usize] = t;
            i
        } else {
            self.tets.push(t);
            (self.tets.len() - 1) as u32
        }
    }

    /// Connects the mutually adjacent faces of `ids`.
    fn link(&mut self, ids: &[u32]) {
        let mut open: HashMap<[u32; 3], (u32, usize)> = HashMap::with_capacity(ids.len() * 2);
        for &t in ids {
            for i in 0..4 {
                if self.tets[t as usize].n[i] != NONE {
                    continue;
                }
                let mut key = self.tets[t as usize].face(i);
                key.sort_unstable();
                if let Some((u, j)) = open.remove(&key) {
                    self.tets[t as usize].n[i] = u;
                    self.tets[u as usize].n[j] = t;
                } else {
                    open.insert(key, (t, i));
                }
            }
        }
        debug_assert!(open.is_empty(), "unmatched faces");
    }

    fn next_rand(&mut self) -> u64 {
        self.rng ^= self.rng << 13;
        self.rng ^= self.rng >> 7;
        self.rng ^= self.rng << 17;
        self.rng
    }

    /// Whether `p` lies in the open circumball of tetrahedron `t`, with the
    /// infinite vertex treated as a point beyond its hull face.
    fn conflicts(&self, t: u32, p: u32) -> bool {
        let tet = &self.tets[t as usize];
        let q = self.pt(p);
        if let Some(k) = tet.v.iter().position(|&v| v == INF) {
            let mut w = tet.v.map(|v| if v == INF { *q } else { self.points[v as usize] });
            let o = orient(&w[0], &w[1], &w[2], &w[3]);
            if o != 0.0 {
                return o > 0.0;
            }
            // On the hull plane: conflict iff inside the face's circumcircle.
            // Any sphere through the face meets the plane in that circle.
            let f: Vec<Vector3<f64>> = (0..4).filter(|&i| i != k).map(|i| w[i]).collect();
            let n = (f[1] - f[0]).cross(&(f[2] - f[0]));
            w[k] = (f[0] + f[1] + f[2]) / 3.0 + n;
            let lift = orient(&w[0], &w[1], &w[2], &w[3]);
            if lift == 0.0 {
                return false;
            }
            let s = -robust::insphere(c3(&w[0]), c3(&w[1]), c3(&w[2]), c3(&w[3]), c3(q));
            return s * lift.signum() > 0.0;
        }
        let [a, b, c, d] = tet.v.map(|v| self.points[v as usize]);
        in_sphere(&a, &b, &c, &d, q) > 0.0
    }

    fn locate(&mut self, p: u32) -> u32 {
        let q = *self.pt(p);
        let mut t = self.last;
        if !self.tets[t as usize].alive {
            t = self.tets.iter().position(|t| t.alive && !t.is_ghost()).unwrap() as u32;
        }
        if self.tets[t as usize].is_ghost() {
            let k = self.tets[t as usize].v.iter().position(|&v| v == INF).unwrap();
            t = self.tets[t as usize].n[k];
        }
        let limit = 4 * self.tets.len() + 64;
        'walk: for _ in 0..limit {
            let tet = self.tets[t as usize];
            if tet.is_ghost() {
                return t;
            }
            let start = (self.next_rand() % 4) as usize;
            for s in 0..4 {
                let i = (start + s) % 4;
                let [a, b, c] = tet.face(i).map(|v| self.points[v as usize]);
                if orient(&a, &b, &c, &q) > 0.0 {
                    t = tet.n[i];
                    continue 'walk;
                }
            }
            return t;
        }
        t
    }

    fn insert(&mut self, p: u32) -> bool {
        let mut seed = self.locate(p);
        if !self.conflicts(seed, p) {
            match (0..self.tets.len() as u32).find(|&t| self.tets[t as usize].alive && self.conflicts(t, p)) {
                Some(t) => seed = t,
                None => return false,
            }
        }
        let mut dead = vec![seed];
        let mut in_cavity: HashMap<u32, ()> = HashMap::new();
        in_cavity.insert(seed, ());
        let mut boundary: Vec<([u32; 3], u32)> = Vec::new();
        let mut k = 0;
        while k < dead.len() {
            let t = dead[k];
            k += 1;
            let tet = self.tets[t as usize];
            for i in 0..4 {
                let nb = tet.n[i];
                if in_cavity.contains_key(&nb) {
                    continue;
                }
                if self.conflicts(nb, p) {
                    in_cavity.insert(nb, ());
                    dead.push(nb);
                } else {
                    boundary.push((tet.face(i), nb));
                }
            }
        }
        // A neighbour may have been classified as boundary before it joined
        // the cavity through another tetrahedron.
        boundary.retain(|(_, nb)| !in_cavity.contains_key(nb));
        for &t in &dead {
            self.tets[t as usize].alive = false;
        }
        let mut created = Vec::with_capacity(boundary.len());
        for (f, nb) in boundary {
            let dead_side = self.tets[nb as usize]
                .n
                .iter()
                .position(|x| in_cavity.contains_key(x) && self.shares_face(nb, *x, &f))
                .expect("boundary neighbour points into the cavity");
            let id = self.alloc(Tet {
                v: [f[0], f[2], f[1], p],
                n: [NONE, NONE, NONE, nb],
                alive: true,
            });
            self.tets[nb as usize].n[dead_side] = id;
            created.push(id);
        }
        self.free.extend(dead);
        self.link(&created);
        self.last = *created.first().unwrap_or(&self.last);
        true
    }

    fn shares_face(&self, t: u32, other: u32, f: &[u32; 3]) -> bool {
        let a = &self.tets[t as usize].v;
        let b = &self.tets[other as usize].v;
        f.iter().all(|v| a.contains(v) && b.contains(v))
    }
}

/// Four affinely independent points, spread as far as possible.
pub(crate) fn initial_simplex(points: &[Vector3<f64>]) -> Result<[u32; 4]> {
    let fail = |reason: &str| Error::Reconstruction {
        stage: "delaunay",
        reason: reason.to_string(),
    };
    if points.len() < 4 {
        return Err(fail("fewer than 4 distinct points"));
    }
    let argmax = |f: &dyn Fn(&Vector3<f64>) -> f64| {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, p) in points.iter().enumerate() {
            let v = f(p);
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    };
    let a = argmax(&|p| p.x).0;
    let pa = points[a];
    let (b, db) = argmax(&|p| (p - pa).norm_squared());
    if db <= 0.0 {
        return Err(fail("all points coincide"));
    }
    let pb = points[b];
    let (c, dc) = argmax(&|p| (pb - pa).cross(&(p - pa)).norm_squared());
    if dc <= 0.0 {
        return Err(fail("points are collinear"));
    }
    let pc = points[c];
    let (d, dd) = argmax(&|p| orient(&pa, &pb, &pc, p).abs());
    if dd <= 0.0 {
        return Err(fail("points are coplanar"));
    }
    Ok([a as u32, b as u32, c as u32, d as u32])
}

fn sort_morton(points: &[Vector3<f64>], order: &mut [u32]) {
    let (lo, hi) = points.iter().fold(
        (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let ext = (hi - lo).max().max(1e-300);
    let spread = |x: u64| {
        let mut x = x & 0x1f_ffff;
        x = (x | x << 32) & 0x1f00000000ffff;
        x = (x | x << 16) & 0x1f0000ff0000ff;
        x = (x | x << 8) & 0x100f00f00f00f00f;
        x = (x | x << 4) & 0x10c30c30c30c30c3;
        (x | x << 2) & 0x1249249249249249
    };
    let code = |i: u32| {
        let q = (points[i as usize] - lo) / ext * 2_097_151.0;
        spread(q.x as u64) | spread(q.y as u64) << 1 | spread(q.z as u64) << 2
    };
    order.sort_by_key(|&i| (code(i), i));
}

/// Circumcentre and circumradius of a tetrahedron; radius is infinite for
/// a flat one.
pub(crate) fn circumsphere(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>, d: &Vector3<f64>) -> (Vector3<f64>, f64) {
    let m = Matrix3::from_rows(&[(b - a).transpose(), (c - a).transpose(), (d - a).transpose()]);
    let rhs = 0.5 * Vector3::new((b - a).norm_squared(), (c - a).norm_squared(), (d - a).norm_squared());
    match m.lu().solve(&rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => (a + x, x.norm()),
        _ => (Vector3::zeros(), f64::INFINITY),
    }
}

/// Centre and radius of the smallest sphere through a triangle.
pub(crate) fn circumcircle(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> (Vector3<f64>, f64) {
    let ab = b - a;
    let ac = c - a;
    let n = ab.cross(&ac);
    let nn = n.norm_squared();
    if nn == 0.0 {
        return (Vector3::zeros(), f64::INFINITY);
    }
    let x = (ac.norm_squared() * n.cross(&ab) + ab.norm_squared() * ac.cross(&n)) / (2.0 * nn);
    (a + x, x.norm())
}
