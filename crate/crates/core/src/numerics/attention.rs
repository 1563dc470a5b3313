//! Scaled dot-product multi-head attention kernels.
//!
//! Two differentiable forms share the same math but not the same indexing:
//! [`Graph::batched_attention`] works on dense `[G, L, C]` blocks with an
//! optional boolean mask, [`Graph::ragged_attention`] takes a per-query list
//! of key rows. Queries with no admissible key produce a zero vector and
//! masked keys get exactly zero weight.

use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub heads: usize,
    pub model_dim: usize,
}

impl AttentionConfig {
    pub fn new(heads: usize, model_dim: usize) -> Result<Self> {
        let cfg = AttentionConfig { heads, model_dim };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.model_dim == 0 || self.model_dim % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "model dim {} is not divisible into {} heads",
                self.model_dim, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }
}

/// Attention of one query row against a set of key/value rows for one head.
/// Writes the head's output slice and returns the weights (empty if no keys).
fn attend_head(
    q: &[f64],
    keys: &[&[f64]],
    values: &[&[f64]],
    out: &mut [f64],
    scale: f64,
) -> Vec<f64> {
    if keys.is_empty() {
        return Vec::new();
    }
    let scores: Vec<f64> = keys
        .iter()
        .map(|k| q.iter().zip(k.iter()).map(|(a, b)| a * b).sum::<f64>() * scale)
        .collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    for (wj, v) in w.iter().zip(values) {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += wj * x;
        }
    }
    w
}

/// Backward of [`attend_head`]: accumulates into dq, dk[j], dv[j].
#[allow(clippy::too_many_arguments)]
fn attend_head_backward(
    q: &[f64],
    keys: &[&[f64]],
    values: &[&[f64]],
    w: &[f64],
    gout: &[f64],
    scale: f64,
    dq: &mut [f64],
    mut dk: impl FnMut(usize, usize, f64),
    mut dv: impl FnMut(usize, usize, f64),
) {
    let dw: Vec<f64> = values
        .iter()
        .map(|v| v.iter().zip(gout).map(|(a, b)| a * b).sum())
        .collect();
    let s: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
    for j in 0..keys.len() {
        let ds = w[j] * (dw[j] - s) * scale;
        for t in 0..q.len() {
            dq[t] += ds * keys[j][t];
            dk(j, t, ds * q[t]);
            dv(j, t, w[j] * gout[t]);
        }
    }
}

impl Graph {
    /// Dense multi-head attention over `G` independent blocks.
    ///
    /// `q: [G, Lq, C]`, `k, v: [G, Lk, C]`, `mask` (if given) has `G*Lq*Lk`
    /// entries, `true` meaning the key is admissible.
    pub fn batched_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        mask: Option<&[bool]>,
        heads: usize,
    ) -> Result<Var> {
        let (g, lq, c) = match self.shape(q) {
            [g, l, c] => (*g, *l, *c),
            s => return Err(Error::Shape(format!("batched_attention q {s:?}"))),
        };
        let lk = match (self.shape(k), self.shape(v)) {
            ([gk, lk, ck], [gv, lv, cv]) if *gk == g && *gv == g && lk == lv && *ck == c && *cv == c => *lk,
            (sk, sv) => {
                return Err(Error::Shape(format!(
                    "batched_attention q {:?} k {sk:?} v {sv:?}",
                    [g, lq, c]
                )))
            }
        };
        let cfg = AttentionConfig::new(heads, c)?;
        if let Some(m) = mask {
            if m.len() != g * lq * lk {
                return Err(Error::Shape(format!("mask has {} entries, need {}", m.len(), g * lq * lk)));
            }
        }
        let mask: Option<Vec<bool>> = mask.map(|m| m.to_vec());
        let d = cfg.head_dim();
        let scale = 1.0 / (d as f64).sqrt();
        let (qd, kd, vd) = (self.data(q), self.data(k), self.data(v));
        let mut out = vec![0.0; g * lq * c];
        // For every (block, query, head): admissible key indices and weights.
        let mut saved: Vec<(Vec<usize>, Vec<f64>)> = Vec::with_capacity(g * lq * heads);
        for b in 0..g {
            for i in 0..lq {
                let adm: Vec<usize> = (0..lk)
                    .filter(|&j| mask.as_ref().map_or(true, |m| m[(b * lq + i) * lk + j]))
                    .collect();
                for h in 0..heads {
                    let hs = h * d..(h + 1) * d;
                    let qrow = &qd[(b * lq + i) * c..][hs.clone()];
                    let keys: Vec<&[f64]> = adm.iter().map(|&j| &kd[(b * lk + j) * c..][hs.clone()]).collect();
                    let vals: Vec<&[f64]> = adm.iter().map(|&j| &vd[(b * lk + j) * c..][hs.clone()]).collect();
                    let o = &mut out[(b * lq + i) * c..][hs.clone()];
                    let w = attend_head(qrow, &keys, &vals, o, scale);
                    saved.push((adm.clone(), w));
                }
            }
        }
        let t = Tensor::new(&[g, lq, c], out)?;
        Ok(self.push(
            t,
            vec![q, k, v],
            Box::new(move |ctx| {
                let (qd, kd, vd) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.inputs[2].data());
                let mut gq = vec![0.0; qd.len()];
                let mut gk = vec![0.0; kd.len()];
                let mut gv = vec![0.0; vd.len()];
                let mut s = 0;
                for b in 0..g {
                    for i in 0..lq {
                        for h in 0..heads {
                            let (adm, w) = &saved[s];
                            s += 1;
                            if adm.is_empty() {
                                continue;
                            }
                            let hs = h * d..(h + 1) * d;
                            let qrow = &qd[(b * lq + i) * c..][hs.clone()];
                            let keys: Vec<&[f64]> = adm.iter().map(|&j| &kd[(b * lk + j) * c..][hs.clone()]).collect();
                            let vals: Vec<&[f64]> = adm.iter().map(|&j| &vd[(b * lk + j) * c..][hs.clone()]).collect();
                            let gout = &ctx.out_grad[(b * lq + i) * c..][hs.clone()];
                            let dq = &mut gq[(b * lq + i) * c..][hs.clone()];
                            attend_head_backward(
                                qrow,
                                &keys,
                                &vals,
                                w,
                                gout,
                                scale,
                                dq,
                                |j, t, x| gk[(b * lk + adm[j]) * c + h * d + t] += x,
                                |j, t, x| gv[(b * lk + adm[j]) * c + h * d + t] += x,
                            );
                        }
                    }
                }
                vec![Some(gq), Some(gk), Some(gv)]
            }),
        ))
    }

    /// Multi-head attention where query `i` attends to key rows `neighbors[i]`.
    ///
    /// `q: [Nq, C]`, `k, v: [Nk, C]`. This is the unbatched reference form.
    pub fn ragged_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        neighbors: &[Vec<usize>],
        heads: usize,
    ) -> Result<Var> {
        let (nq, c) = match self.shape(q) {
            [n, c] => (*n, *c),
            s => return Err(Error::Shape(format!("ragged_attention q {s:?}"))),
        };
        let nk = match (self.shape(k), self.shape(v)) {
            ([nk, ck], [nv, cv]) if nk == nv && *ck == c && *cv == c => *nk,
            (sk, sv) => return Err(Error::Shape(format!("ragged_attention k {sk:?} v {sv:?}"))),
        };
        if neighbors.len() != nq {
            return Err(Error::Shape(format!("{} neighbor lists for {nq} queries", neighbors.len())));
        }
        if neighbors.iter().flatten().any(|&j| j >= nk) {
            return Err(Error::OutOfRange(format!("neighbor index beyond {nk} keys")));
        }
        let cfg = AttentionConfig::new(heads, c)?;
        let d = cfg.head_dim();
        let scale = 1.0 / (d as f64).sqrt();
        let (qd, kd, vd) = (self.data(q), self.data(k), self.data(v));
        let mut out = vec![0.0; nq * c];
        let mut weights: Vec<Vec<f64>> = Vec::with_capacity(nq * heads);
        for (i, nb) in neighbors.iter().enumerate() {
            for h in 0..heads {
                let off = h * d;
                let qrow = &qd[i * c + off..i * c + off + d];
                let keys: Vec<&[f64]> = nb.iter().map(|&j| &kd[j * c + off..j * c + off + d]).collect();
                let vals: Vec<&[f64]> = nb.iter().map(|&j| &vd[j * c + off..j * c + off + d]).collect();
                weights.push(attend_head(qrow, &keys, &vals, &mut out[i * c + off..i * c + off + d], scale));
            }
        }
        let t = Tensor::new(&[nq, c], out)?;
        let neighbors = neighbors.to_vec();
        Ok(self.push(
            t,
            vec![q, k, v],
            Box::new(move |ctx| {
                let (qd, kd, vd) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.inputs[2].data());
                let mut gq = vec![0.0; nq * c];
                let mut gk = vec![0.0; nk * c];
                let mut gv = vec![0.0; nk * c];
                for (i, nb) in neighbors.iter().enumerate() {
                    if nb.is_empty() {
                        continue;
                    }
                    for h in 0..heads {
                        let off = h * d;
                        let qrow = &qd[i * c + off..i * c + off + d];
                        let keys: Vec<&[f64]> = nb.iter().map(|&j| &kd[j * c + off..j * c + off + d]).collect();
                        let vals: Vec<&[f64]> = nb.iter().map(|&j| &vd[j * c + off..j * c + off + d]).collect();
                        attend_head_backward(
                            qrow,
                            &keys,
                            &vals,
                            &weights[i * heads + h],
                            &ctx.out_grad[i * c + off..i * c + off + d],
                            scale,
                            &mut gq[i * c + off..i * c + off + d],
                            |j, t, x| gk[nb[j] * c + off + t] += x,
                            |j, t, x| gv[nb[j] * c + off + t] += x,
                        );
                    }
                }
                vec![Some(gq), Some(gk), Some(gv)]
            }),
        ))
    }
}

/// Multi-head scaled dot-product attention without learned projections.
///
/// `mask[i * Lk + j] == true` admits key `j` for query `i`.
pub fn masked_mha(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    mask: &[bool],
    cfg: &AttentionConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    let c = cfg.model_dim;
    let (lq, lk) = match (q.shape(), k.shape(), v.shape()) {
        ([lq, cq], [lk, ck], [lv, cv]) if *cq == c && *ck == c && *cv == c && lk == lv => (*lq, *lk),
        (a, b, cc) => return Err(Error::Shape(format!("masked_mha q {a:?} k {b:?} v {cc:?} C={c}"))),
    };
    let mut g = Graph::new();
    let qv = g.constant(q.clone().reshape(&[1, lq, c])?);
    let kv = g.constant(k.clone().reshape(&[1, lk, c])?);
    let vv = g.constant(v.clone().reshape(&[1, lk, c])?);
    let out = g.batched_attention(qv, kv, vv, Some(mask), cfg.heads)?;
    g.value(out).clone().reshape(&[lq, c])
}
