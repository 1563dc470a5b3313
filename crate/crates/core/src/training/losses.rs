//! Classification, box and heatmap losses.

use super::matching::{hungarian, matching_cost, LossWeights, MatchResult};
use super::model::ForwardOutput;
use crate::decoder::{encode_box, BOX_DIM};
use crate::geometry::{bev_index, BevGrid};
use crate::numerics::{sigmoid, Graph, Tensor, Var};
use crate::scenesim::Box3D;
use crate::{Error, Result};

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Positive and negative focal terms of one logit:
/// `alpha (1-p)^gamma (-ln p)` and `(1-alpha) p^gamma (-ln(1-p))`.
pub fn focal_terms(x: f64, alpha: f64, gamma: f64) -> (f64, f64) {
    let p = sigmoid(x);
    (
        alpha * (1.0 - p).powf(gamma) * softplus(-x),
        (1.0 - alpha) * p.powf(gamma) * softplus(x),
    )
}

fn focal_grad(x: f64, positive: bool, alpha: f64, gamma: f64) -> f64 {
    let p = sigmoid(x);
    if positive {
        alpha * (1.0 - p).powf(gamma) * (-gamma * p * softplus(-x) - (1.0 - p))
    } else {
        (1.0 - alpha) * p.powf(gamma) * (p + gamma * (1.0 - p) * softplus(x))
    }
}

/// Focal loss of one query summed over its `K` class logits; `target` is
/// the positive class, if any.
pub fn focal_loss(logits: &[f64], target: Option<usize>, alpha: f64, gamma: f64) -> f64 {
    logits
        .iter()
        .enumerate()
        .map(|(c, &x)| {
            let (pos, neg) = focal_terms(x, alpha, gamma);
            if target == Some(c) {
                pos
            } else {
                neg
            }
        })
        .sum()
}

/// Mean absolute difference over the ten box components.
pub fn l1_box_loss(pred: &[f64], gt: &[f64]) -> f64 {
    pred.iter().zip(gt).map(|(a, b)| (a - b).abs()).sum::<f64>() / BOX_DIM as f64
}

/// Multiplier from a box vector to regression space: center in cells.
pub fn box_scale(grid: &BevGrid) -> [f64; BOX_DIM] {
    let (dy, dx) = grid.cell_size();
    let mut s = [1.0; BOX_DIM];
    s[0] = 1.0 / dx;
    s[1] = 1.0 / dy;
    s
}

/// Ground truth in regression space.
pub fn box_target(b: &Box3D, grid: &BevGrid) -> [f64; BOX_DIM] {
    let mut v = encode_box(b);
    for (x, s) in v.iter_mut().zip(box_scale(grid)) {
        *x *= s;
    }
    v
}

/// Gaussian splats of the ground-truth centers, `[H*W, K]`, exactly 1 at
/// each center cell. The radius in cells is half the longer footprint side,
/// at least one; sigma is a sixth of the window.
pub fn heatmap_target(boxes: &[Box3D], grid: &BevGrid, num_classes: usize) -> Vec<f64> {
    let (dy, dx) = grid.cell_size();
    let mut y = vec![0.0f64; grid.num_cells() * num_classes];
    for b in boxes {
        let cell = bev_index(b.center[0], b.center[1], grid);
        if !cell.valid || b.class_id >= num_classes {
            continue;
        }
        let r = (0.5 * b.size[0].max(b.size[1]) / dx.min(dy)).floor().max(1.0) as isize;
        let sigma = (2 * r + 1) as f64 / 6.0;
        for i in -r..=r {
            for j in -r..=r {
                let (rr, cc) = (cell.row as isize + i, cell.col as isize + j);
                if rr < 0 || cc < 0 || rr >= grid.h as isize || cc >= grid.w as isize {
                    continue;
                }
                let v = (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp();
                let idx = grid.flat(rr as usize, cc as usize) * num_classes + b.class_id;
                y[idx] = y[idx].max(v);
            }
        }
    }
    y
}

/// Penalty-reduced focal loss (exponents 2 and 4) normalized by the number
/// of center cells.
pub fn penalty_focal_loss(logits: &[f64], target: &[f64]) -> f64 {
    let pos = target.iter().filter(|&&t| t == 1.0).count().max(1) as f64;
    logits
        .iter()
        .zip(target)
        .map(|(&x, &t)| {
            let p = sigmoid(x);
            if t == 1.0 {
                (1.0 - p).powi(2) * softplus(-x)
            } else {
                (1.0 - t).powi(4) * p.powi(2) * softplus(x)
            }
        })
        .sum::<f64>()
        / pos
}

impl Graph {
    /// Sum of focal terms; `targets` holds 1 for positives, 0 otherwise.
    pub fn sigmoid_focal(&mut self, logits: Var, targets: &[f64], alpha: f64, gamma: f64) -> Result<Var> {
        if targets.len() != self.value(logits).len() {
            return Err(Error::Shape("sigmoid_focal targets".into()));
        }
        let s: f64 = self
            .data(logits)
            .iter()
            .zip(targets)
            .map(|(&x, &t)| {
                let (pos, neg) = focal_terms(x, alpha, gamma);
                if t == 1.0 {
                    pos
                } else {
                    neg
                }
            })
            .sum();
        let targets = targets.to_vec();
        Ok(self.push(
            Tensor::scalar(s),
            vec![logits],
            Box::new(move |ctx| {
                let g0 = ctx.out_grad[0];
                let x = ctx.inputs[0].data();
                vec![Some(
                    x.iter()
                        .zip(&targets)
                        .map(|(&x, &t)| g0 * focal_grad(x, t == 1.0, alpha, gamma))
                        .collect(),
                )]
            }),
        ))
    }

    /// [`penalty_focal_loss`] on the tape.
    pub fn penalty_focal(&mut self, logits: Var, target: &[f64]) -> Result<Var> {
        if target.len() != self.value(logits).len() {
            return Err(Error::Shape("penalty_focal target".into()));
        }
        let s = penalty_focal_loss(self.data(logits), target);
        let target = target.to_vec();
        let pos = target.iter().filter(|&&t| t == 1.0).count().max(1) as f64;
        Ok(self.push(
            Tensor::scalar(s),
            vec![logits],
            Box::new(move |ctx| {
                let g0 = ctx.out_grad[0] / pos;
                let x = ctx.inputs[0].data();
                vec![Some(
                    x.iter()
                        .zip(&target)
                        .map(|(&x, &t)| {
                            let p = sigmoid(x);
                            let d = if t == 1.0 {
                                (1.0 - p).powi(2) * (-2.0 * p * softplus(-x) - (1.0 - p))
                            } else {
                                (1.0 - t).powi(4) * p.powi(2) * (p + 2.0 * (1.0 - p) * softplus(x))
                            };
                            g0 * d
                        })
                        .collect(),
                )]
            }),
        ))
    }
}

/// Loss of one decoder layer after matching.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerLoss {
    pub cls: f64,
    pub bbox: f64,
    pub matched: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub heatmap: f64,
    pub layers: Vec<LayerLoss>,
    /// Gradient norm before clipping; zero until a step has run.
    pub grad_norm: f64,
}

/// Matches one layer's predictions to the ground truth.
pub fn match_layer(logits: &Tensor, boxes: &Tensor, gts: &[Box3D], grid: &BevGrid, w: &LossWeights) -> Result<MatchResult> {
    let cost = matching_cost(logits.data(), boxes.data(), gts, grid, w)?;
    hungarian(&cost)
}

/// Loss of one layer from plain values, the reference for the tape version.
pub fn layer_loss(logits: &Tensor, boxes: &Tensor, gts: &[Box3D], grid: &BevGrid, w: &LossWeights) -> Result<LayerLoss> {
    let m = match_layer(logits, boxes, gts, grid, w)?;
    let k = logits.last_dim();
    let norm = m.num_matched().max(1) as f64;
    let scale = box_scale(grid);
    let mut cls = 0.0;
    let mut bbox = 0.0;
    for (i, a) in m.assignment.iter().enumerate() {
        let l = &logits.data()[i * k..(i + 1) * k];
        cls += focal_loss(l, a.map(|j| gts[j].class_id), w.alpha, w.gamma);
        if let Some(j) = a {
            let p: Vec<f64> = boxes.row(i).iter().zip(scale).map(|(x, s)| x * s).collect();
            bbox += l1_box_loss(&p, &box_target(&gts[*j], grid));
        }
    }
    Ok(LayerLoss {
        cls: cls / norm,
        bbox: bbox / norm,
        matched: m.num_matched(),
    })
}

/// Deep-supervised loss of one forward pass: the heatmap loss plus, for
/// every decoder layer, `cls + bbox` after its own matching.
pub fn scene_loss(
    g: &mut Graph,
    out: &ForwardOutput,
    gts: &[Box3D],
    grid: &BevGrid,
    num_classes: usize,
    w: &LossWeights,
) -> Result<(Var, LossBreakdown)> {
    let target = heatmap_target(gts, grid, num_classes);
    let heat = g.penalty_focal(out.heat, &target)?;
    let heat_value = g.value(heat).item();
    let mut terms = vec![g.scale(heat, w.heatmap)];
    let mut layers = Vec::with_capacity(out.layers.len());
    let scale = box_scale(grid);
    for layer in &out.layers {
        let logits = g.value(layer.logits).clone();
        let boxes = g.value(layer.boxes).clone();
        let m = match_layer(&logits, &boxes, gts, grid, w)?;
        let norm = m.num_matched().max(1) as f64;
        let k = logits.last_dim();
        let mut t = vec![0.0; logits.len()];
        for (i, j) in m.pairs() {
            t[i * k + gts[j].class_id] = 1.0;
        }
        let cls = g.sigmoid_focal(layer.logits, &t, w.alpha, w.gamma)?;
        let cls = g.scale(cls, 1.0 / norm);
        let cls_value = g.value(cls).item();
        terms.push(g.scale(cls, w.cls));
        let mut bbox_value = 0.0;
        let pairs = m.pairs();
        if !pairs.is_empty() {
            let rows: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let picked = g.gather_rows(layer.boxes, &rows)?;
            let s: Vec<f64> = scale.iter().copied().cycle().take(rows.len() * BOX_DIM).collect();
            let picked = g.mul_const(picked, &s)?;
            let tgt: Vec<f64> = pairs.iter().flat_map(|&(_, j)| box_target(&gts[j], grid)).collect();
            let l1 = g.l1_sum(picked, &tgt)?;
            let l1 = g.scale(l1, 1.0 / (BOX_DIM as f64 * norm));
            bbox_value = g.value(l1).item();
            terms.push(g.scale(l1, w.bbox));
        }
        layers.push(LayerLoss {
            cls: cls_value,
            bbox: bbox_value,
            matched: m.num_matched(),
        });
    }
    let total = g.add_n(&terms)?;
    let total_value = g.value(total).item();
    if !total_value.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok((
        total,
        LossBreakdown {
            total: total_value,
            heatmap: heat_value,
            layers,
            grad_norm: 0.0,
        },
    ))
}
