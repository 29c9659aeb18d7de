//! Scattered-to-grid projection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridField, GridSpec, ScatteredField, ScatteredPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Projection {
    Nearest,
    /// Inverse-distance weighting of the `neighbors` closest points with
    /// weights `d^-power`.
    InverseDistance { power: f64, neighbors: usize },
}

impl Default for Projection {
    fn default() -> Self {
        Projection::InverseDistance {
            power: 2.0,
            neighbors: 4,
        }
    }
}

pub fn project_scattered(
    data: &ScatteredField,
    spec: &GridSpec,
    method: Projection,
) -> Result<GridField> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::NoData);
    }
    let k = match method {
        Projection::Nearest => 1,
        Projection::InverseDistance { power, neighbors } => {
            if !(power > 0.0 && power.is_finite()) || neighbors == 0 {
                return Err(Error::InvalidArgument(format!(
                    "inverse-distance needs power > 0 and neighbors >= 1, got p={power} k={neighbors}"
                )));
            }
            neighbors.min(data.len())
        }
    };

    let index = BucketIndex::new(&data.points);
    let (lo_x, hi_x) = (index.min_x - spec.dx, index.max_x + spec.dx);
    let (lo_y, hi_y) = (index.min_y - spec.dy, index.max_y + spec.dy);
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let (x, y) = (spec.x(i), spec.y(j));
            if x < lo_x || x > hi_x || y < lo_y || y > hi_y {
                return Err(Error::Extrapolation { i, j });
            }
        }
    }

    let values: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map(|n| {
            let (x, y) = (spec.x(n % spec.nx), spec.y(n / spec.nx));
            let nearest = index.k_nearest(x, y, k);
            match method {
                Projection::Nearest => data.points[nearest[0].1].value,
                Projection::InverseDistance { power, .. } => {
                    idw(&data.points, &nearest, power)
                }
            }
        })
        .collect();
    GridField::new(*spec, values)
}

fn idw(points: &[ScatteredPoint], nearest: &[(f64, usize)], power: f64) -> f64 {
    let coincident: Vec<f64> = nearest
        .iter()
        .filter(|(d2, _)| *d2 == 0.0)
        .map(|&(_, k)| points[k].value)
        .collect();
    if !coincident.is_empty() {
        return coincident.iter().sum::<f64>() / coincident.len() as f64;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(d2, k) in nearest {
        let w = d2.powf(-0.5 * power);
        num += w * points[k].value;
        den += w;
    }
    num / den
}

/// Uniform bucket grid over the point cloud for k-nearest queries.
struct BucketIndex<'a> {
    points: &'a [ScatteredPoint],
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> BucketIndex<'a> {
    fn new(points: &'a [ScatteredPoint]) -> Self {
        let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            min_x = min_x.min(p.x);
            max_x = max_x.max(p.x);
            min_y = min_y.min(p.y);
            max_y = max_y.max(p.y);
        }
        let (w, h) = (max_x - min_x, max_y - min_y);
        // about two points per bucket
        let mut cell = (2.0 * w.max(f64::MIN_POSITIVE) * h.max(f64::MIN_POSITIVE)
            / points.len() as f64)
            .sqrt();
        if !(cell > 0.0 && cell.is_finite()) || w == 0.0 || h == 0.0 {
            cell = (w.max(h) / (points.len() as f64).sqrt()).max(1e-12);
        }
        let cols = ((w / cell).floor() as usize + 1).min(4096);
        let rows = ((h / cell).floor() as usize + 1).min(4096);
        let cell = cell.max(w / cols as f64).max(h / rows as f64);
        let mut buckets = vec![Vec::new(); cols * rows];
        let mut index = BucketIndex {
            points,
            min_x,
            max_x,
            min_y,
            max_y,
            cell,
            cols,
            rows,
            buckets: Vec::new(),
        };
        for (k, p) in points.iter().enumerate() {
            let (c, r) = index.cell_of(p.x, p.y);
            buckets[r * cols + c].push(k);
        }
        index.buckets = buckets;
        index
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let c = ((x - self.min_x) / self.cell).floor().max(0.0) as usize;
        let r = ((y - self.min_y) / self.cell).floor().max(0.0) as usize;
        (c.min(self.cols - 1), r.min(self.rows - 1))
    }

    /// The `k` closest points as `(squared distance, index)`, ordered by
    /// distance then index.
    fn k_nearest(&self, x: f64, y: f64, k: usize) -> Vec<(f64, usize)> {
        let (c0, r0) = self.cell_of(x, y);
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        let max_ring = self.cols.max(self.rows);
        for ring in 0..=max_ring {
            let (c0, r0, ring_i) = (c0 as isize, r0 as isize, ring as isize);
            for r in (r0 - ring_i)..=(r0 + ring_i) {
                for c in (c0 - ring_i)..=(c0 + ring_i) {
                    let on_ring = (r - r0).abs() == ring_i || (c - c0).abs() == ring_i;
                    if !on_ring || r < 0 || c < 0 {
                        continue;
                    }
                    let (r, c) = (r as usize, c as usize);
                    if r >= self.rows || c >= self.cols {
                        continue;
                    }
                    for &idx in &self.buckets[r * self.cols + c] {
                        let p = &self.points[idx];
                        let d2 = (p.x - x).powi(2) + (p.y - y).powi(2);
                        insert_sorted(&mut best, (d2, idx), k);
                    }
                }
            }
            if best.len() == k {
                let reach = ring as f64 * self.cell;
                if best[k - 1].0 <= reach * reach {
                    break;
                }
            }
        }
        best
    }
}

fn insert_sorted(best: &mut Vec<(f64, usize)>, item: (f64, usize), k: usize) {
    let pos = best.partition_point(|e| e.0 < item.0 || (e.0 == item.0 && e.1 < item.1));
    if pos < k {
        best.insert(pos, item);
        best.truncate(k);
    }
}
