//! Bilinear sampling and multi-scale deformable aggregation.
//!
//! Sampling coordinates are `(row, col)` in index space: integer values hit
//! cell centers exactly. Points outside `[0, H-1] x [0, W-1]` read as zero.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

/// The (up to) four cells contributing to a bilinear read, with the weights
/// and their partial derivatives with respect to row and column.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Taps {
    pub cell: [Option<usize>; 4],
    pub w: [f64; 4],
    pub dw_row: [f64; 4],
    pub dw_col: [f64; 4],
}

pub(crate) fn taps(h: usize, w: usize, row: f64, col: f64) -> Taps {
    let mut t = Taps::default();
    if !(row >= 0.0 && row <= (h - 1) as f64 && col >= 0.0 && col <= (w - 1) as f64) {
        return t;
    }
    let r0 = row.floor() as usize;
    let c0 = col.floor() as usize;
    let fr = row - r0 as f64;
    let fc = col - c0 as f64;
    let corners = [(0, 0), (1, 0), (0, 1), (1, 1)];
    for (k, (dr, dc)) in corners.into_iter().enumerate() {
        let (r, c) = (r0 + dr, c0 + dc);
        let wr = if dr == 0 { 1.0 - fr } else { fr };
        let wc = if dc == 0 { 1.0 - fc } else { fc };
        if r < h && c < w {
            t.cell[k] = Some(r * w + c);
            t.w[k] = wr * wc;
            t.dw_row[k] = if dr == 0 { -wc } else { wc };
            t.dw_col[k] = if dc == 0 { -wr } else { wr };
        }
    }
    t
}

/// Bilinear read of an `H x W x C` map at continuous `(row, col)`.
pub fn bilinear_sample(map: &Tensor, row: f64, col: f64) -> Result<Vec<f64>> {
    let (h, w, c) = match map.shape() {
        [h, w, c] => (*h, *w, *c),
        s => return Err(Error::Shape(format!("bilinear_sample map {s:?}"))),
    };
    let t = taps(h, w, row, col);
    let mut out = vec![0.0; c];
    for k in 0..4 {
        if let Some(cell) = t.cell[k] {
            for (o, x) in out.iter_mut().zip(&map.data()[cell * c..(cell + 1) * c]) {
                *o += t.w[k] * x;
            }
        }
    }
    Ok(out)
}

impl Graph {
    /// Samples `P` points from a stack of maps `[B, H, W, C]`; point `p` reads
    /// map `batch[p]` at `coords[p] = (row, col)`. Differentiable in both the
    /// maps and the coordinates.
    pub fn bilinear_sample(&mut self, maps: Var, coords: Var, batch: &[usize]) -> Result<Var> {
        let (b, h, w, c) = match self.shape(maps) {
            [b, h, w, c] => (*b, *h, *w, *c),
            [h, w, c] => (1, *h, *w, *c),
            s => return Err(Error::Shape(format!("bilinear_sample maps {s:?}"))),
        };
        let p = match self.shape(coords) {
            [p, 2] => *p,
            s => return Err(Error::Shape(format!("bilinear_sample coords {s:?}"))),
        };
        if batch.len() != p || batch.iter().any(|&i| i >= b) {
            return Err(Error::Shape(format!("bilinear_sample: batch indices for {p} points over {b} maps")));
        }
        let md = self.data(maps);
        let cd = self.data(coords);
        let tp: Vec<Taps> = (0..p).map(|i| taps(h, w, cd[2 * i], cd[2 * i + 1])).collect();
        let mut out = vec![0.0; p * c];
        for (i, t) in tp.iter().enumerate() {
            let base = batch[i] * h * w;
            for k in 0..4 {
                if let Some(cell) = t.cell[k] {
                    let src = &md[(base + cell) * c..(base + cell + 1) * c];
                    for (o, x) in out[i * c..(i + 1) * c].iter_mut().zip(src) {
                        *o += t.w[k] * x;
                    }
                }
            }
        }
        let tensor = Tensor::new(&[p, c], out)?;
        let batch = batch.to_vec();
        Ok(self.push(
            tensor,
            vec![maps, coords],
            Box::new(move |ctx| {
                let md = ctx.inputs[0].data();
                let g = ctx.out_grad;
                let mut gm = vec![0.0; md.len()];
                let mut gc = vec![0.0; 2 * p];
                for (i, t) in tp.iter().enumerate() {
                    let base = batch[i] * h * w;
                    let gi = &g[i * c..(i + 1) * c];
                    for k in 0..4 {
                        let Some(cell) = t.cell[k] else { continue };
                        let off = (base + cell) * c;
                        let mut dotv = 0.0;
                        for j in 0..c {
                            gm[off + j] += t.w[k] * gi[j];
                            dotv += md[off + j] * gi[j];
                        }
                        gc[2 * i] += t.dw_row[k] * dotv;
                        gc[2 * i + 1] += t.dw_col[k] * dotv;
                    }
                }
                vec![Some(gm), Some(gc)]
            }),
        ))
    }

    /// Multi-scale deformable aggregation.
    ///
    /// `values[s]: [H_s, W_s, C]`; `locs: [N, heads, S, M, 2]` sampling
    /// positions in each scale's index space; `weights: [N, heads, S*M]`.
    /// Output row `n`, head `h` is `sum_{s,m} weights[n,h,s*M+m] *
    /// sample(values[s][.., h-th channel slice], locs[n,h,s,m])`.
    pub fn deformable_sample(&mut self, values: &[Var], locs: Var, weights: Var, heads: usize) -> Result<Var> {
        let scales = values.len();
        if scales == 0 {
            return Err(Error::Empty("deformable_sample values"));
        }
        let mut dims = Vec::with_capacity(scales);
        let mut c = 0;
        for &v in values {
            match self.shape(v) {
                [h, w, cc] if c == 0 || *cc == c => {
                    c = *cc;
                    dims.push((*h, *w));
                }
                s => return Err(Error::Shape(format!("deformable_sample value {s:?}"))),
            }
        }
        if heads == 0 || c % heads != 0 {
            return Err(Error::Shape(format!("{c} channels over {heads} heads")));
        }
        let (n, m) = match self.shape(locs) {
            [n, hh, ss, m, 2] if *hh == heads && *ss == scales => (*n, *m),
            s => return Err(Error::Shape(format!("deformable_sample locs {s:?}"))),
        };
        if self.shape(weights) != [n, heads, scales * m] {
            return Err(Error::Shape(format!("deformable_sample weights {:?}", self.shape(weights))));
        }
        let d = c / heads;
        let ld = self.data(locs).to_vec();
        let wd = self.data(weights).to_vec();
        let vdata: Vec<Vec<f64>> = values.iter().map(|&v| self.data(v).to_vec()).collect();
        let mut tp = Vec::with_capacity(n * heads * scales * m);
        let mut out = vec![0.0; n * c];
        for q in 0..n {
            for h in 0..heads {
                for s in 0..scales {
                    let (hs, ws) = dims[s];
                    for pt in 0..m {
                        let li = (((q * heads + h) * scales + s) * m + pt) * 2;
                        let t = taps(hs, ws, ld[li], ld[li + 1]);
                        let a = wd[(q * heads + h) * scales * m + s * m + pt];
                        for k in 0..4 {
                            if let Some(cell) = t.cell[k] {
                                let src = &vdata[s][cell * c + h * d..cell * c + (h + 1) * d];
                                let dst = &mut out[q * c + h * d..q * c + (h + 1) * d];
                                for (o, x) in dst.iter_mut().zip(src) {
                                    *o += a * t.w[k] * x;
                                }
                            }
                        }
                        tp.push(t);
                    }
                }
            }
        }
        let tensor = Tensor::new(&[n, c], out)?;
        let mut parents = values.to_vec();
        parents.push(locs);
        parents.push(weights);
        Ok(self.push(
            tensor,
            parents,
            Box::new(move |ctx| {
                let g = ctx.out_grad;
                let vdata: Vec<&[f64]> = (0..scales).map(|s| ctx.inputs[s].data()).collect();
                let wd = ctx.inputs[scales + 1].data();
                let mut gv: Vec<Vec<f64>> = vdata.iter().map(|v| vec![0.0; v.len()]).collect();
                let mut gl = vec![0.0; n * heads * scales * m * 2];
                let mut gw = vec![0.0; n * heads * scales * m];
                let mut ti = 0;
                for q in 0..n {
                    for h in 0..heads {
                        let gq = &g[q * c + h * d..q * c + (h + 1) * d];
                        for s in 0..scales {
                            for pt in 0..m {
                                let t = &tp[ti];
                                ti += 1;
                                let wi = (q * heads + h) * scales * m + s * m + pt;
                                let a = wd[wi];
                                let li = wi * 2;
                                for k in 0..4 {
                                    let Some(cell) = t.cell[k] else { continue };
                                    let off = cell * c + h * d;
                                    let mut dotv = 0.0;
                                    for j in 0..d {
                                        gv[s][off + j] += a * t.w[k] * gq[j];
                                        dotv += vdata[s][off + j] * gq[j];
                                    }
                                    gw[wi] += t.w[k] * dotv;
                                    gl[li] += a * t.dw_row[k] * dotv;
                                    gl[li + 1] += a * t.dw_col[k] * dotv;
                                }
                            }
                        }
                    }
                }
                let mut res: Vec<Option<Vec<f64>>> = gv.into_iter().map(Some).collect();
                res.push(Some(gl));
                res.push(Some(gw));
                res
            }),
        ))
    }
}
