//! Stride-1 2-D convolution (edge-replicate padding) and 2x2 average pooling
//! over `H x W x C` maps.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

impl Graph {
    /// `x: [H, W, Cin]`, `w: [K, K, Cin, Cout]` with odd `K`, `b: [Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (h, wd, cin) = match self.shape(x) {
            [h, w, c] => (*h, *w, *c),
            s => return Err(Error::Shape(format!("conv2d input {s:?}"))),
        };
        let (k, cout) = match self.shape(w) {
            [k1, k2, ci, co] if k1 == k2 && k1 % 2 == 1 && *ci == cin => (*k1, *co),
            s => return Err(Error::Shape(format!("conv2d kernel {s:?} for {cin} input channels"))),
        };
        let half = (k / 2) as isize;
        let xd = self.data(x);
        let kd = self.data(w);
        let mut out = vec![0.0; h * wd * cout];
        for r in 0..h {
            for c in 0..wd {
                let dst = &mut out[(r * wd + c) * cout..(r * wd + c + 1) * cout];
                for kr in 0..k {
                    let sr = clamp_idx(r as isize + kr as isize - half, h);
                    for kc in 0..k {
                        let sc = clamp_idx(c as isize + kc as isize - half, wd);
                        let src = &xd[(sr * wd + sc) * cin..(sr * wd + sc + 1) * cin];
                        let kbase = (kr * k + kc) * cin * cout;
                        for (ci, &xv) in src.iter().enumerate() {
                            if xv == 0.0 {
                                continue;
                            }
                            let krow = &kd[kbase + ci * cout..kbase + (ci + 1) * cout];
                            for (o, kv) in dst.iter_mut().zip(krow) {
                                *o += xv * kv;
                            }
                        }
                    }
                }
            }
        }
        let t = Tensor::new(&[h, wd, cout], out)?;
        let y = self.push(
            t,
            vec![x, w],
            Box::new(move |ctx| {
                let xd = ctx.inputs[0].data();
                let kd = ctx.inputs[1].data();
                let g = ctx.out_grad;
                let mut gx = vec![0.0; xd.len()];
                let mut gk = vec![0.0; kd.len()];
                for r in 0..h {
                    for c in 0..wd {
                        let go = &g[(r * wd + c) * cout..(r * wd + c + 1) * cout];
                        for kr in 0..k {
                            let sr = clamp_idx(r as isize + kr as isize - half, h);
                            for kc in 0..k {
                                let sc = clamp_idx(c as isize + kc as isize - half, wd);
                                let xo = (sr * wd + sc) * cin;
                                let kbase = (kr * k + kc) * cin * cout;
                                for ci in 0..cin {
                                    let xv = xd[xo + ci];
                                    let krow = &kd[kbase + ci * cout..kbase + (ci + 1) * cout];
                                    let gkrow = &mut gk[kbase + ci * cout..kbase + (ci + 1) * cout];
                                    let mut acc = 0.0;
                                    for co in 0..cout {
                                        acc += go[co] * krow[co];
                                        gkrow[co] += go[co] * xv;
                                    }
                                    gx[xo + ci] += acc;
                                }
                            }
                        }
                    }
                }
                vec![Some(gx), Some(gk)]
            }),
        );
        match b {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    /// 2x2 average pooling; odd trailing rows/columns are dropped, a size-1
    /// axis is kept as is.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let (h, w, c) = match self.shape(x) {
            [h, w, c] => (*h, *w, *c),
            s => return Err(Error::Shape(format!("avg_pool2 input {s:?}"))),
        };
        let (fh, fw) = (if h >= 2 { 2 } else { 1 }, if w >= 2 { 2 } else { 1 });
        let (oh, ow) = (h / fh, w / fw);
        let inv = 1.0 / (fh * fw) as f64;
        let xd = self.data(x);
        let mut out = vec![0.0; oh * ow * c];
        for r in 0..oh {
            for col in 0..ow {
                for dr in 0..fh {
                    for dc in 0..fw {
                        let s = ((r * fh + dr) * w + col * fw + dc) * c;
                        for j in 0..c {
                            out[(r * ow + col) * c + j] += inv * xd[s + j];
                        }
                    }
                }
            }
        }
        let t = Tensor::new(&[oh, ow, c], out)?;
        Ok(self.push(
            t,
            vec![x],
            Box::new(move |ctx| {
                let mut gx = vec![0.0; h * w * c];
                for r in 0..oh {
                    for col in 0..ow {
                        for dr in 0..fh {
                            for dc in 0..fw {
                                let s = ((r * fh + dr) * w + col * fw + dc) * c;
                                for j in 0..c {
                                    gx[s + j] += inv * ctx.out_grad[(r * ow + col) * c + j];
                                }
                            }
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }
}
