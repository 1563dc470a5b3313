//! Set matching between queries and ground truth.

use serde::{Deserialize, Serialize};

use super::losses::{box_target, focal_terms};
use crate::decoder::BOX_DIM;
use crate::geometry::BevGrid;
use crate::scenesim::Box3D;
use crate::{Error, Result};

/// Loss and matching weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub cls: f64,
    pub bbox: f64,
    pub heatmap: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            cls: 1.0,
            bbox: 0.25,
            heatmap: 1.0,
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

/// Dense `rows x cols` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} entries for a {rows}x{cols} cost matrix", data.len())));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn transposed(&self) -> CostMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        CostMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Ground-truth index per query, `None` when unmatched.
    pub assignment: Vec<Option<usize>>,
    /// Sum of the assigned entries in query order.
    pub total_cost: f64,
}

impl MatchResult {
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map(|j| (i, j)))
            .collect()
    }

    pub fn num_matched(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_some()).count()
    }
}

/// `cost[i, j] = w.cls * focal class cost of gt j's class under query i
/// + w.bbox * L1 between the first eight normalized box components`
/// (center in cells, log sizes, sin/cos yaw). `logits` is `N x K`, `boxes`
/// is `N x 10`.
pub fn matching_cost(logits: &[f64], boxes: &[f64], gts: &[Box3D], grid: &BevGrid, w: &LossWeights) -> Result<CostMatrix> {
    let n = boxes.len() / BOX_DIM;
    if boxes.len() != n * BOX_DIM || n == 0 || logits.len() % n != 0 {
        return Err(Error::Shape(format!("{} logits / {} box values", logits.len(), boxes.len())));
    }
    let k = logits.len() / n;
    if let Some(b) = gts.iter().find(|b| b.class_id >= k) {
        return Err(Error::OutOfRange(format!("gt class {} with {k} classes", b.class_id)));
    }
    let targets: Vec<[f64; BOX_DIM]> = gts.iter().map(|b| box_target(b, grid)).collect();
    let scale = super::losses::box_scale(grid);
    let mut data = Vec::with_capacity(n * gts.len());
    for i in 0..n {
        let pb = &boxes[i * BOX_DIM..(i + 1) * BOX_DIM];
        for (b, t) in gts.iter().zip(&targets) {
            let (pos, neg) = focal_terms(logits[i * k + b.class_id], w.alpha, w.gamma);
            let l1: f64 = (0..8).map(|d| (pb[d] * scale[d] - t[d]).abs()).sum();
            data.push(w.cls * (pos - neg) + w.bbox * l1);
        }
    }
    CostMatrix::new(n, gts.len(), data)
}

/// Minimum-cost assignment (Kuhn-Munkres with potentials). Every row is
/// matched when `rows <= cols`, otherwise every column.
pub fn hungarian(cost: &CostMatrix) -> Result<MatchResult> {
    if let Some(x) = cost.data.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("cost matrix entry {x}")));
    }
    if cost.rows == 0 || cost.cols == 0 {
        return Ok(MatchResult {
            assignment: vec![None; cost.rows],
            total_cost: 0.0,
        });
    }
    let assignment = if cost.rows <= cost.cols {
        solve(cost)
    } else {
        let by_col = solve(&cost.transposed());
        let mut a = vec![None; cost.rows];
        for (j, i) in by_col.into_iter().enumerate() {
            if let Some(i) = i {
                a[i] = Some(j);
            }
        }
        a
    };
    let total_cost = assignment
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|j| cost.get(i, j)))
        .sum();
    Ok(MatchResult { assignment, total_cost })
}

/// Assigns each row to a distinct column; requires `rows <= cols`.
fn solve(a: &CostMatrix) -> Vec<Option<usize>> {
    let (n, m) = (a.rows, a.cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: row (1-based) matched to column j; column 0 is a sentinel
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}
