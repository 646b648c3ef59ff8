use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Smallest triangle area kept in a mesh, m².
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// An indexed triangle mesh. Closed meshes are wound counter-clockwise
/// seen from outside.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub colors: Option<Vec<[f64; 3]>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Self {
        TriangleMesh {
            vertices,
            triangles,
            colors: None,
        }
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: &[u32; 3]) -> [Vector3<f64>; 3] {
        t.map(|i| self.vertices[i as usize])
    }

    pub fn triangle_area(&self, t: &[u32; 3]) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        if let Some(c) = &self.colors {
            if c.len() != self.vertices.len() {
                return Err(Error::InvalidAsset("mesh colour count differs from vertex count".into()));
            }
        }
        if self.vertices.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidAsset("non-finite mesh vertex".into()));
        }
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::InvalidAsset(format!("triangle {k} indexes past {n} vertices")));
            }
            if self.triangle_area(t) <= MIN_TRIANGLE_AREA {
                return Err(Error::InvalidAsset(format!("triangle {k} is degenerate")));
            }
        }
        Ok(())
    }

    /// Number of triangles using each undirected edge.
    pub fn edge_use(&self) -> HashMap<(u32, u32), usize> {
        let mut m = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        m
    }

    /// Every edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        !self.triangles.is_empty() && self.edge_use().values().all(|&c| c == 2)
    }

    /// Signed enclosed volume, m³ (positive for outward winding).
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.dot(&b.cross(&c))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| self.triangle_area(t)).sum()
    }

    pub fn bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        bounds_of(&self.vertices)
    }

    /// Drops vertices no triangle references.
    pub fn compact(mut self) -> Self {
        let mut map = vec![u32::MAX; self.vertices.len()];
        let mut verts = Vec::new();
        let mut colors = Vec::new();
        for t in &mut self.triangles {
            for i in t.iter_mut() {
                if map[*i as usize] == u32::MAX {
                    map[*i as usize] = verts.len() as u32;
                    verts.push(self.vertices[*i as usize]);
                    if let Some(c) = &self.colors {
                        colors.push(c[*i as usize]);
                    }
                }
                *i = map[*i as usize];
            }
        }
        self.vertices = verts;
        if self.colors.is_some() {
            self.colors = Some(colors);
        }
        self
    }

    /// Vertex adjacency lists, sorted.
    pub fn neighbors(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                adj[a as usize].push(b);
                adj[b as usize].push(a);
            }
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        adj
    }
}

pub(crate) fn bounds_of(points: &[Vector3<f64>]) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let first = points.first()?;
    Some(points.iter().fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
}

/// Writes a binary STL (single precision, as the format requires).
pub fn write_stl(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(84 + 50 * mesh.triangles.len());
    let mut header = [0u8; 80];
    header[..8].copy_from_slice(b"splatgen");
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(mesh.triangles.len() as u32).to_le_bytes());
    for t in &mesh.triangles {
        let [a, b, c] = mesh.corners(t);
        let n = (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or_else(Vector3::zeros);
        for v in [n, a, b, c] {
            for x in v.iter() {
                buf.extend_from_slice(&(*x as f32).to_le_bytes());
            }
        }
        buf.extend_from_slice(&[0, 0]);
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a binary STL, merging bitwise-identical corners into shared
/// vertices.
pub fn read_stl(path: &Path) -> Result<TriangleMesh> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::InvalidAsset(format!("{}: {m}", path.display()));
    if bytes.len() < 84 {
        return Err(bad("truncated STL header"));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    if bytes.len() != 84 + 50 * count {
        return Err(bad("STL size does not match its triangle count (ASCII STL is not supported)"));
    }
    let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let mut index: HashMap<[u32; 3], u32> = HashMap::new();
    let mut mesh = TriangleMesh::default();
    for k in 0..count {
        let base = 84 + 50 * k + 12;
        let mut tri = [0u32; 3];
        for (c, slot) in tri.iter_mut().enumerate() {
            let o = base + 12 * c;
            let v = [f(o), f(o + 4), f(o + 8)];
            let key = v.map(f32::to_bits);
            *slot = *index.entry(key).or_insert_with(|| {
                mesh.vertices.push(Vector3::new(v[0] as f64, v[1] as f64, v[2] as f64));
                (mesh.vertices.len() - 1) as u32
            });
        }
        mesh.triangles.push(tri);
    }
    Ok(mesh)
}

/// Writes vertices and faces (1-based) as Wavefront OBJ.
pub fn write_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for v in &mesh.vertices {
        writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z).unwrap();
    }
    for t in &mesh.triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads the `v` and `f` records of an OBJ file; polygons are fanned.
pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, m: &str| Error::InvalidAsset(format!("{}:{line}: {m}", path.display()));
    let mut mesh = TriangleMesh::default();
    for (ln, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse().map_err(|_| bad(ln + 1, "bad vertex coordinate")))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(bad(ln + 1, "vertex needs 3 coordinates"));
                }
                mesh.vertices.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|_| bad(ln + 1, "bad face index"))?;
                        let n = mesh.vertices.len() as i64;
                        let i = if i < 0 { n + i } else { i - 1 };
                        if !(0..n).contains(&i) {
                            return Err(bad(ln + 1, "face index out of range"));
                        }
                        Ok(i as u32)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(bad(ln + 1, "face needs 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}

/// Reads `.stl` or `.obj` by extension.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("stl") => read_stl(path),
        Some("obj") => read_obj(path),
        _ => Err(Error::InvalidAsset(format!("{}: unknown mesh format", path.display()))),
    }
}

/// Writes `.stl` or `.obj` by extension.
pub fn write_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("stl") => write_stl(mesh, path),
        Some("obj") => write_obj(mesh, path),
        _ => Err(Error::Parameter(format!("{}: unknown mesh format", path.display()))),
    }
}
