//! Narrowphase: contact manifolds from GJK/EPA normals and reference-face
//! clipping.

use nalgebra::{Matrix3, Vector3};

use super::gjk::{epa, gjk, Gjk, Support};
use super::hull::ConvexHull;

/// A hull at a world pose.
pub(crate) struct PlacedHull<'a> {
    pub hull: &'a ConvexHull,
    pub rot: Matrix3<f64>,
    pub pos: Vector3<f64>,
}

impl Support for PlacedHull<'_> {
    fn support(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        let local = self.rot.transpose() * dir;
        self.rot * self.hull.vertices[self.hull.support(&local)] + self.pos
    }

    fn center(&self) -> Vector3<f64> {
        self.pos
    }
}

/// A static, one-sided triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Triangle {
    pub v: [Vector3<f64>; 3],
    pub normal: Vector3<f64>,
}

impl Triangle {
    pub fn new(v: [Vector3<f64>; 3]) -> Option<Self> {
        let normal = (v[1] - v[0]).cross(&(v[2] - v[0])).try_normalize(1e-300)?;
        Some(Triangle { v, normal })
    }
}

impl Support for Triangle {
    fn support(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        let d = self.v.map(|p| p.dot(dir));
        let i = if d[0] >= d[1] && d[0] >= d[2] {
            0
        } else if d[1] >= d[2] {
            1
        } else {
            2
        };
        self.v[i]
    }

    fn center(&self) -> Vector3<f64> {
        (self.v[0] + self.v[1] + self.v[2]) / 3.0
    }
}

/// Shapes that can offer the face best aligned with a direction.
pub(crate) trait Faces {
    /// Counter-clockwise polygon and outward normal of the face whose
    /// normal is closest to `dir`.
    fn best_face(&self, dir: &Vector3<f64>) -> (Vec<Vector3<f64>>, Vector3<f64>);
}

impl Faces for PlacedHull<'_> {
    fn best_face(&self, dir: &Vector3<f64>) -> (Vec<Vector3<f64>>, Vector3<f64>) {
        let local = self.rot.transpose() * dir;
        let f = self
            .hull
            .faces
            .iter()
            .max_by(|a, b| a.normal.dot(&local).total_cmp(&b.normal.dot(&local)))
            .expect("hull has faces");
        let poly = f
            .vertices
            .iter()
            .map(|&i| self.rot * self.hull.vertices[i as usize] + self.pos)
            .collect();
        (poly, self.rot * f.normal)
    }
}

impl Faces for Triangle {
    fn best_face(&self, dir: &Vector3<f64>) -> (Vec<Vector3<f64>>, Vector3<f64>) {
        if self.normal.dot(dir) >= 0.0 {
            (self.v.to_vec(), self.normal)
        } else {
            (vec![self.v[0], self.v[2], self.v[1]], -self.normal)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ContactPoint {
    pub point: Vector3<f64>,
    /// Unit normal from the first shape towards the second.
    pub normal: Vector3<f64>,
    /// Signed gap; negative when penetrating.
    pub separation: f64,
}

pub(crate) const MAX_MANIFOLD: usize = 4;

/// Contacts between `a` and `b` closer than `margin`. With `one_sided`,
/// `a` only pushes along that normal's side.
pub(crate) fn manifold<A, B>(a: &A, b: &B, margin: f64, one_sided: Option<Vector3<f64>>) -> Vec<ContactPoint>
where
    A: Support + Faces,
    B: Support + Faces,
{
    let (mut normal, sep, pa, pb) = match gjk(a, b) {
        Gjk::Separated { distance, point_a, point_b } if distance > 1e-9 => {
            if distance > margin {
                return Vec::new();
            }
            ((point_b - point_a) / distance, distance, point_a, point_b)
        }
        Gjk::Separated { point_a, point_b, .. } => {
            let n = one_sided.unwrap_or_else(|| (b.center() - a.center()).try_normalize(1e-300).unwrap_or(Vector3::z()));
            (n, 0.0, point_a, point_b)
        }
        Gjk::Overlapping(simplex) => match epa(a, b, &simplex) {
            Some(p) => (p.normal, -p.depth, p.point_a, p.point_b),
            None => {
                let n = one_sided.unwrap_or_else(|| (b.center() - a.center()).try_normalize(1e-300).unwrap_or(Vector3::z()));
                let mid = (a.center() + b.center()) * 0.5;
                (n, 0.0, mid, mid)
            }
        },
    };
    if let Some(tn) = one_sided {
        if normal.dot(&tn) < 0.0 {
            if sep > 0.0 {
                return Vec::new();
            }
            normal = tn;
        }
    }

    let (poly_a, na) = a.best_face(&normal);
    let (poly_b, nb) = b.best_face(&-normal);
    let align_a = na.dot(&normal);
    let align_b = -nb.dot(&normal);
    let single = || {
        vec![ContactPoint {
            point: (pa + pb) * 0.5,
            normal,
            separation: sep,
        }]
    };
    if align_a.max(align_b) < 0.7 {
        return single();
    }
    let (ref_poly, ref_n, inc_poly, flip) = if align_a >= 0.98 * align_b {
        (poly_a, na, poly_b, false)
    } else {
        (poly_b, nb, poly_a, true)
    };
    let clipped = clip_polygon(&inc_poly, &ref_poly, &ref_n);
    let out_normal = if flip { -ref_n } else { ref_n };
    let mut pts: Vec<ContactPoint> = clipped
        .into_iter()
        .filter_map(|x| {
            let s = (x - ref_poly[0]).dot(&ref_n);
            (s <= margin).then(|| ContactPoint {
                point: x - ref_n * (0.5 * s),
                normal: out_normal,
                separation: s,
            })
        })
        .collect();
    if pts.is_empty() {
        return single();
    }
    reduce(&mut pts);
    pts
}

/// Sutherland-Hodgman clip of `poly` to the prism over `reference`.
fn clip_polygon(poly: &[Vector3<f64>], reference: &[Vector3<f64>], ref_n: &Vector3<f64>) -> Vec<Vector3<f64>> {
    let mut out = poly.to_vec();
    for i in 0..reference.len() {
        if out.is_empty() {
            break;
        }
        let p = reference[i];
        let q = reference[(i + 1) % reference.len()];
        let inward = ref_n.cross(&(q - p));
        let input = std::mem::take(&mut out);
        for k in 0..input.len() {
            let cur = input[k];
            let prev = input[(k + input.len() - 1) % input.len()];
            let dc = (cur - p).dot(&inward);
            let dp = (prev - p).dot(&inward);
            if dc >= 0.0 {
                if dp < 0.0 {
                    out.push(prev + (cur - prev) * (dp / (dp - dc)));
                }
                out.push(cur);
            } else if dp >= 0.0 {
                out.push(prev + (cur - prev) * (dp / (dp - dc)));
            }
        }
    }
    out
}

/// Keeps at most [`MAX_MANIFOLD`] points spanning the largest area.
fn reduce(pts: &mut Vec<ContactPoint>) {
    if pts.len() <= MAX_MANIFOLD {
        return;
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(MAX_MANIFOLD);
    let deepest = (0..pts.len())
        .min_by(|&i, &j| pts[i].separation.total_cmp(&pts[j].separation))
        .unwrap();
    chosen.push(deepest);
    let score = |i: usize, chosen: &[usize]| -> f64 {
        let p = pts[i].point;
        match chosen.len() {
            1 => (p - pts[chosen[0]].point).norm_squared(),
            2 => (pts[chosen[1]].point - pts[chosen[0]].point)
                .cross(&(p - pts[chosen[0]].point))
                .norm_squared(),
            _ => chosen.iter().map(|&c| (p - pts[c].point).norm()).sum(),
        }
    };
    while chosen.len() < MAX_MANIFOLD {
        let next = (0..pts.len())
            .filter(|i| !chosen.contains(i))
            .max_by(|&i, &j| score(i, &chosen).total_cmp(&score(j, &chosen)).then(j.cmp(&i)))
            .unwrap();
        chosen.push(next);
    }
    chosen.sort_unstable();
    *pts = chosen.into_iter().map(|i| pts[i]).collect();
}
