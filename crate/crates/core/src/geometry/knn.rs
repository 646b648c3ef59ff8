//! Exact k-nearest-neighbour queries on a uniform hash grid.

use std::collections::HashMap;

use nalgebra::Vector3;

type Cell = (i64, i64, i64);

pub(crate) struct KnnGrid<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    origin: Vector3<f64>,
    buckets: HashMap<Cell, Vec<u32>>,
    max_ring: i64,
}

impl<'a> KnnGrid<'a> {
    pub(crate) fn new(points: &'a [Vector3<f64>]) -> Self {
        let (lo, hi) = points.iter().fold(
            (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        );
        let diag = if points.is_empty() { 0.0 } else { (hi - lo).norm() };
        // Sized for surface-like samples; queries stay exact for any size.
        let cell = (diag / (points.len().max(1) as f64).sqrt()).max(1e-9);
        let origin = if points.is_empty() { Vector3::zeros() } else { lo };
        let mut buckets: HashMap<Cell, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets
                .entry(Self::key(origin, cell, p))
                .or_default()
                .push(i as u32);
        }
        let max_ring = (diag / cell).ceil() as i64 + 1;
        KnnGrid {
            points,
            cell,
            origin,
            buckets,
            max_ring,
        }
    }

    fn key(origin: Vector3<f64>, cell: f64, p: &Vector3<f64>) -> Cell {
        let q = (p - origin) / cell;
        (q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64)
    }

    /// The `k` nearest points to `points[index]`, excluding itself, as
    /// `(distance, index)` sorted by distance then index.
    pub(crate) fn nearest(&self, index: usize, k: usize) -> Vec<(f64, u32)> {
        let q = self.points[index];
        let (cx, cy, cz) = Self::key(self.origin, self.cell, &q);
        let mut best: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
        for ring in 0..=self.max_ring {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let Some(bucket) = self.buckets.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for &j in bucket {
                            if j as usize == index {
                                continue;
                            }
                            let d = (self.points[j as usize] - q).norm();
                            insert_sorted(&mut best, (d, j), k);
                        }
                    }
                }
            }
            if best.len() == k && best[k - 1].0 <= ring as f64 * self.cell {
                break;
            }
        }
        best
    }
}

fn insert_sorted(best: &mut Vec<(f64, u32)>, item: (f64, u32), k: usize) {
    if k == 0 {
        return;
    }
    if best.len() == k {
        let last = best[k - 1];
        if (item.0, item.1) >= (last.0, last.1) {
            return;
        }
        best.pop();
    }
    let pos = best.partition_point(|&(d, j)| (d, j) < (item.0, item.1));
    best.insert(pos, item);
}

/// Mean distance from each point to its nearest neighbour.
pub(crate) fn mean_nn_spacing(points: &[Vector3<f64>]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let grid = KnnGrid::new(points);
    let total: f64 = (0..points.len()).map(|i| grid.nearest(i, 1)[0].0).sum();
    total / points.len() as f64
}

/// Median distance from each point to its nearest neighbour.
pub(crate) fn median_nn_spacing(points: &[Vector3<f64>]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let grid = KnnGrid::new(points);
    let mut d: Vec<f64> = (0..points.len()).map(|i| grid.nearest(i, 1)[0].0).collect();
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}
