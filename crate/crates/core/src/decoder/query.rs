//! Heatmap-based query initialization.

use super::boxes::BOX_DIM;
use super::config::DecoderConfig;
use crate::geometry::BevGrid;
use crate::numerics::{sigmoid, sinusoidal_2d, Graph, Init, ParamStore, Tensor, Var};
use crate::rng::Rng;
use crate::{Error, Result};

/// Heatmap logit bias: sigmoid(-2.19) is about 0.1.
pub const HEATMAP_PRIOR: f64 = -2.19;

pub fn init_heatmap_params(store: &mut ParamStore, rng: &Rng, channels: usize, num_classes: usize) {
    store.init(rng, "dec.heat.c1.w", &[3, 3, channels, channels], Init::Xavier);
    store.init(rng, "dec.heat.c1.b", &[channels], Init::Zeros);
    store.init(rng, "dec.heat.c2.w", &[3, 3, channels, num_classes], Init::Xavier);
    store.insert(
        "dec.heat.c2.b",
        Tensor::new(&[num_classes], vec![HEATMAP_PRIOR; num_classes]).expect("bias"),
    );
    store.init(rng, "dec.cls_emb.w", &[num_classes, channels], Init::Xavier);
}

/// Per-class heatmap logits `[H*W, K]` from BEV rows `[H*W, C]`.
pub fn heatmap_logits(g: &mut Graph, store: &ParamStore, hp: Var, grid: &BevGrid) -> Result<Var> {
    let c = *g.shape(hp).last().unwrap_or(&0);
    let x = g.reshape(hp, &[grid.h, grid.w, c])?;
    let w1 = g.param(store, "dec.heat.c1.w")?;
    let b1 = g.param(store, "dec.heat.c1.b")?;
    let w2 = g.param(store, "dec.heat.c2.w")?;
    let b2 = g.param(store, "dec.heat.c2.b")?;
    let h = g.conv2d(x, w1, Some(b1))?;
    let h = g.relu(h);
    let h = g.conv2d(h, w2, Some(b2))?;
    let k = *g.shape(h).last().unwrap();
    g.reshape(h, &[grid.h * grid.w, k])
}

/// One selected heatmap peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub cell: usize,
    pub class: usize,
    pub score: f64,
}

/// Top-`n` entries of the joint cell x class score map `scores[cell * K + k]`.
/// Entries that are the maximum of their class's 3x3 neighborhood come
/// first, by descending score with ties to the smaller flat index; the
/// remaining entries fill any shortfall in the same order.
pub fn select_peaks(scores: &[f64], h: usize, w: usize, k: usize, n: usize) -> Result<Vec<Peak>> {
    if scores.len() != h * w * k {
        return Err(Error::Shape(format!("{} scores for a {h}x{w}x{k} heatmap", scores.len())));
    }
    if n > h * w {
        return Err(Error::InvalidArgument(format!("{n} queries exceed {} cells", h * w)));
    }
    let mut maxima = Vec::new();
    let mut rest = Vec::new();
    for r in 0..h {
        for c in 0..w {
            for cls in 0..k {
                let s = scores[(r * w + c) * k + cls];
                let mut is_max = true;
                for rr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                    for cc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                        if scores[(rr * w + cc) * k + cls] > s {
                            is_max = false;
                        }
                    }
                }
                let idx = (r * w + c) * k + cls;
                if is_max {
                    maxima.push(idx);
                } else {
                    rest.push(idx);
                }
            }
        }
    }
    let order = |v: &mut Vec<usize>| v.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order(&mut maxima);
    if maxima.len() < n {
        order(&mut rest);
        maxima.extend(rest);
    }
    Ok(maxima
        .into_iter()
        .take(n)
        .map(|i| Peak {
            cell: i / k,
            class: i % k,
            score: scores[i],
        })
        .collect())
}

/// Object queries of one forward pass: embeddings live on the tape, boxes
/// and initial logits are plain values.
#[derive(Debug, Clone)]
pub struct QuerySet {
    pub embedding: Var,
    pub boxes: Tensor,
    pub logits: Tensor,
    pub peaks: Vec<Peak>,
}

impl QuerySet {
    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }
}

/// Selects `n` queries from the heatmap logits `[H*W, K]`. Embedding = BEV
/// feature at the peak cell + 2-D sinusoidal encoding of the cell + a
/// learned embedding of the peak class; the box starts at the cell center
/// with the configured size prior; the initial class logits are the
/// heatmap logits of the cell.
pub fn init_queries(
    g: &mut Graph,
    store: &ParamStore,
    hp: Var,
    heat: Var,
    grid: &BevGrid,
    n: usize,
    cfg: &DecoderConfig,
) -> Result<QuerySet> {
    let c = *g.shape(hp).last().unwrap_or(&0);
    let k = *g.shape(heat).last().unwrap_or(&0);
    let logits_all = g.data(heat).to_vec();
    let scores: Vec<f64> = logits_all.iter().map(|&x| sigmoid(x)).collect();
    let peaks = select_peaks(&scores, grid.h, grid.w, k, n)?;
    if peaks.is_empty() {
        return Err(Error::Empty("query set"));
    }
    let cells: Vec<usize> = peaks.iter().map(|p| p.cell).collect();
    let feat = g.gather_rows(hp, &cells)?;
    let pe: Vec<f64> = cells
        .iter()
        .flat_map(|&cell| sinusoidal_2d((cell / grid.w) as f64, (cell % grid.w) as f64, c))
        .collect();
    let feat = g.add_const(feat, &pe)?;
    let mut onehot = vec![0.0; peaks.len() * k];
    for (i, p) in peaks.iter().enumerate() {
        onehot[i * k + p.class] = 1.0;
    }
    let onehot = g.constant(Tensor::new(&[peaks.len(), k], onehot)?);
    let ew = g.param(store, "dec.cls_emb.w")?;
    let cls = g.matmul(onehot, ew)?;
    let embedding = g.add(feat, cls)?;

    let mut boxes = Vec::with_capacity(peaks.len() * BOX_DIM);
    let mut logits = Vec::with_capacity(peaks.len() * k);
    for p in &peaks {
        let (x, y) = grid.cell_center(p.cell / grid.w, p.cell % grid.w);
        let [sw, sl, sh] = cfg.prior_size;
        boxes.extend_from_slice(&[x, y, cfg.prior_z, sw.ln(), sl.ln(), sh.ln(), 0.0, 1.0, 0.0, 0.0]);
        logits.extend_from_slice(&logits_all[p.cell * k..(p.cell + 1) * k]);
    }
    Ok(QuerySet {
        embedding,
        boxes: Tensor::new(&[peaks.len(), BOX_DIM], boxes)?,
        logits: Tensor::new(&[peaks.len(), k], logits)?,
        peaks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_deltas_are_selected() {
        let (h, w, k) = (6, 6, 2);
        let mut s = vec![0.1; h * w * k];
        let picks = [(0usize, 0usize), (14, 1), (33, 0)];
        for (i, &(cell, cls)) in picks.iter().enumerate() {
            s[cell * k + cls] = 0.9 - 0.1 * i as f64;
        }
        let p = select_peaks(&s, h, w, k, 3).unwrap();
        let got: Vec<(usize, usize)> = p.iter().map(|p| (p.cell, p.class)).collect();
        assert_eq!(got, picks.to_vec());
    }

    #[test]
    fn ties_go_to_smaller_index() {
        let mut s = vec![0.0; 25];
        s[7] = 0.5;
        s[21] = 0.5;
        let p = select_peaks(&s, 5, 5, 1, 1).unwrap();
        assert_eq!(p[0].cell, 7);
    }

    #[test]
    fn too_many_queries() {
        assert!(select_peaks(&[0.0; 4], 2, 2, 1, 5).is_err());
    }
}
