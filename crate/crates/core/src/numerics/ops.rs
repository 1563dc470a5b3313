//! Differentiable elementwise, reduction, linear-algebra and indexing ops.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

fn same_shape(g: &Graph, a: Var, b: Var, op: &str) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::Shape(format!(
            "{op}: {:?} vs {:?}",
            g.shape(a),
            g.shape(b)
        )));
    }
    Ok(())
}

fn rank2(g: &Graph, a: Var, op: &str) -> Result<(usize, usize)> {
    match g.shape(a) {
        [n, c] => Ok((*n, *c)),
        s => Err(Error::Shape(format!("{op}: expected rank 2, got {s:?}"))),
    }
}

impl Graph {
    fn unary<F, D>(&mut self, a: Var, f: F, df: D) -> Var
    where
        F: Fn(f64) -> f64,
        D: Fn(f64, f64) -> f64 + 'static,
    {
        let x = self.value(a);
        let out = Tensor::new(x.shape(), x.data().iter().map(|&v| f(v)).collect()).unwrap();
        self.push(
            out,
            vec![a],
            Box::new(move |c| {
                let x = c.inputs[0].data();
                let y = c.output.data();
                vec![Some(
                    (0..x.len()).map(|i| c.out_grad[i] * df(x[i], y[i])).collect(),
                )]
            }),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "add")?;
        let out: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        let t = Tensor::new(self.shape(a), out)?;
        Ok(self.push(
            t,
            vec![a, b],
            Box::new(|c| vec![Some(c.out_grad.to_vec()), Some(c.out_grad.to_vec())]),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "sub")?;
        let out: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x - y).collect();
        let t = Tensor::new(self.shape(a), out)?;
        Ok(self.push(
            t,
            vec![a, b],
            Box::new(|c| {
                vec![
                    Some(c.out_grad.to_vec()),
                    Some(c.out_grad.iter().map(|g| -g).collect()),
                ]
            }),
        ))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "mul")?;
        let out: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let t = Tensor::new(self.shape(a), out)?;
        Ok(self.push(
            t,
            vec![a, b],
            Box::new(|c| {
                let (x, y) = (c.inputs[0].data(), c.inputs[1].data());
                vec![
                    Some(c.out_grad.iter().zip(y).map(|(g, y)| g * y).collect()),
                    Some(c.out_grad.iter().zip(x).map(|(g, x)| g * x).collect()),
                ]
            }),
        ))
    }

    /// Sum of any number of same-shaped values.
    pub fn add_n(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or(Error::Empty("add_n"))?;
        for &x in &xs[1..] {
            same_shape(self, first, x, "add_n")?;
        }
        let mut out = self.data(first).to_vec();
        for &x in &xs[1..] {
            out.iter_mut().zip(self.data(x)).for_each(|(a, b)| *a += b);
        }
        let t = Tensor::new(self.shape(first), out)?;
        let n = xs.len();
        Ok(self.push(t, xs.to_vec(), Box::new(move |c| vec![Some(c.out_grad.to_vec()); n])))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, move |x| x * s, move |_, _| s)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, |_, y| y)
    }

    /// Adds a `[C]` vector to every row of a tensor whose last axis is `C`.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let c = self.value(a).last_dim();
        if self.shape(b) != [c] {
            return Err(Error::Shape(format!(
                "add_bias: bias {:?} for last dim {c}",
                self.shape(b)
            )));
        }
        let bias = self.data(b).to_vec();
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .enumerate()
            .map(|(i, x)| x + bias[i % c])
            .collect();
        let t = Tensor::new(self.shape(a), out)?;
        Ok(self.push(
            t,
            vec![a, b],
            Box::new(move |ctx| {
                let mut gb = vec![0.0; c];
                for (i, g) in ctx.out_grad.iter().enumerate() {
                    gb[i % c] += g;
                }
                vec![Some(ctx.out_grad.to_vec()), Some(gb)]
            }),
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = rank2(self, a, "matmul")?;
        let (k2, m) = rank2(self, b, "matmul")?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul: [{n},{k}] x [{k2},{m}]")));
        }
        let out = matmul_kernel(self.data(a), self.data(b), n, k, m);
        let t = Tensor::new(&[n, m], out)?;
        Ok(self.push(
            t,
            vec![a, b],
            Box::new(move |c| {
                let (x, w) = (c.inputs[0].data(), c.inputs[1].data());
                let g = c.out_grad;
                // dA = G W^T, dB = A^T G
                let mut ga = vec![0.0; n * k];
                for i in 0..n {
                    for j in 0..m {
                        let gij = g[i * m + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            ga[i * k + p] += gij * w[p * m + j];
                        }
                    }
                }
                let mut gb = vec![0.0; k * m];
                for i in 0..n {
                    for p in 0..k {
                        let xip = x[i * k + p];
                        if xip == 0.0 {
                            continue;
                        }
                        let row = &g[i * m..(i + 1) * m];
                        let dst = &mut gb[p * m..(p + 1) * m];
                        for j in 0..m {
                            dst[j] += xip * row[j];
                        }
                    }
                }
                vec![Some(ga), Some(gb)]
            }),
        ))
    }

    /// `x W + b` for `x: [N, in]`, `W: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    /// Batched matmul: `[B, N, K] x [B, K, M] -> [B, N, M]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (bs, n, k, m) = match (self.shape(a), self.shape(b)) {
            ([b1, n, k], [b2, k2, m]) if b1 == b2 && k == k2 => (*b1, *n, *k, *m),
            (sa, sb) => return Err(Error::Shape(format!("bmm: {sa:?} x {sb:?}"))),
        };
        let (x, w) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(bs * n * m);
        for i in 0..bs {
            out.extend(matmul_kernel(
                &x[i * n * k..(i + 1) * n * k],
                &w[i * k * m..(i + 1) * k * m],
                n,
                k,
                m,
            ));
        }
        let t = Tensor::new(&[bs, n, m], out)?;
        Ok(self.push(
            t,
            vec![a, b],
            Box::new(move |c| {
                let (x, w, g) = (c.inputs[0].data(), c.inputs[1].data(), c.out_grad);
                let mut ga = vec![0.0; bs * n * k];
                let mut gb = vec![0.0; bs * k * m];
                for bi in 0..bs {
                    let (xo, wo, go) = (bi * n * k, bi * k * m, bi * n * m);
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g[go + i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                ga[xo + i * k + p] += gij * w[wo + p * m + j];
                                gb[wo + p * m + j] += x[xo + i * k + p] * gij;
                            }
                        }
                    }
                }
                vec![Some(ga), Some(gb)]
            }),
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.data(a).iter().sum();
        let n = self.value(a).len();
        self.push(
            Tensor::scalar(s),
            vec![a],
            Box::new(move |c| vec![Some(vec![c.out_grad[0]; n])]),
        )
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Dot product of two same-shaped values, as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        Ok(self.push(t, vec![a], Box::new(|c| vec![Some(c.out_grad.to_vec())])))
    }

    /// Rows `idx` of a rank-2 value; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (n, c) = rank2(self, a, "gather_rows")?;
        if idx.is_empty() {
            return Err(Error::Empty("gather_rows indices"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::OutOfRange(format!("gather_rows: row {bad} of {n}")));
        }
        let x = self.data(a);
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(&x[i * c..(i + 1) * c]);
        }
        let t = Tensor::new(&[idx.len(), c], out)?;
        let idx = idx.to_vec();
        Ok(self.push(
            t,
            vec![a],
            Box::new(move |ctx| {
                let mut g = vec![0.0; n * c];
                for (r, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        g[i * c + j] += ctx.out_grad[r * c + j];
                    }
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Copy of `base` with row `idx[r]` replaced by row `r` of `rows`.
    /// Indices must be distinct.
    pub fn scatter_rows(&mut self, base: Var, idx: &[usize], rows: Var) -> Result<Var> {
        let (n, c) = rank2(self, base, "scatter_rows")?;
        let (m, c2) = rank2(self, rows, "scatter_rows")?;
        if c != c2 || m != idx.len() {
            return Err(Error::Shape(format!(
                "scatter_rows: base [{n},{c}], rows [{m},{c2}], {} indices",
                idx.len()
            )));
        }
        let mut seen = vec![false; n];
        for &i in idx {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!(
                    "scatter_rows: index {i} out of range or repeated"
                )));
            }
        }
        let mut out = self.data(base).to_vec();
        let src = self.data(rows);
        for (r, &i) in idx.iter().enumerate() {
            out[i * c..(i + 1) * c].copy_from_slice(&src[r * c..(r + 1) * c]);
        }
        let t = Tensor::new(&[n, c], out)?;
        let idx = idx.to_vec();
        Ok(self.push(
            t,
            vec![base, rows],
            Box::new(move |ctx| {
                let mut gbase = ctx.out_grad.to_vec();
                let mut grows = vec![0.0; m * c];
                for (r, &i) in idx.iter().enumerate() {
                    grows[r * c..(r + 1) * c].copy_from_slice(&ctx.out_grad[i * c..(i + 1) * c]);
                    gbase[i * c..(i + 1) * c].iter_mut().for_each(|x| *x = 0.0);
                }
                vec![Some(gbase), Some(grows)]
            }),
        ))
    }

    /// Concatenates rank-2 values along rows.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or(Error::Empty("concat_rows"))?;
        let (_, c) = rank2(self, first, "concat_rows")?;
        let mut sizes = Vec::with_capacity(xs.len());
        let mut out = Vec::new();
        for &x in xs {
            let (n, cx) = rank2(self, x, "concat_rows")?;
            if cx != c {
                return Err(Error::Shape(format!("concat_rows: width {cx} vs {c}")));
            }
            sizes.push(n * c);
            out.extend_from_slice(self.data(x));
        }
        let rows = out.len() / c;
        let t = Tensor::new(&[rows, c], out)?;
        Ok(self.push(
            t,
            xs.to_vec(),
            Box::new(move |ctx| {
                let mut off = 0;
                sizes
                    .iter()
                    .map(|&s| {
                        let g = ctx.out_grad[off..off + s].to_vec();
                        off += s;
                        Some(g)
                    })
                    .collect()
            }),
        ))
    }

    /// Concatenates rank-2 values along columns.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or(Error::Empty("concat_cols"))?;
        let (n, _) = rank2(self, first, "concat_cols")?;
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let (nx, cx) = rank2(self, x, "concat_cols")?;
            if nx != n {
                return Err(Error::Shape(format!("concat_cols: rows {nx} vs {n}")));
            }
            widths.push(cx);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; n * total];
        let mut off = 0;
        for (&x, &w) in xs.iter().zip(&widths) {
            let d = self.data(x);
            for i in 0..n {
                out[i * total + off..i * total + off + w].copy_from_slice(&d[i * w..(i + 1) * w]);
            }
            off += w;
        }
        let t = Tensor::new(&[n, total], out)?;
        Ok(self.push(
            t,
            xs.to_vec(),
            Box::new(move |ctx| {
                let mut off = 0;
                widths
                    .iter()
                    .map(|&w| {
                        let mut g = vec![0.0; n * w];
                        for i in 0..n {
                            g[i * w..(i + 1) * w]
                                .copy_from_slice(&ctx.out_grad[i * total + off..i * total + off + w]);
                        }
                        off += w;
                        Some(g)
                    })
                    .collect()
            }),
        ))
    }

    /// Columns `[start, start + width)` of a rank-2 value.
    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let (n, c) = rank2(self, a, "slice_cols")?;
        if width == 0 || start + width > c {
            return Err(Error::OutOfRange(format!("slice_cols {start}+{width} of {c}")));
        }
        let x = self.data(a);
        let mut out = Vec::with_capacity(n * width);
        for i in 0..n {
            out.extend_from_slice(&x[i * c + start..i * c + start + width]);
        }
        let t = Tensor::new(&[n, width], out)?;
        Ok(self.push(
            t,
            vec![a],
            Box::new(move |ctx| {
                let mut g = vec![0.0; n * c];
                for i in 0..n {
                    g[i * c + start..i * c + start + width]
                        .copy_from_slice(&ctx.out_grad[i * width..(i + 1) * width]);
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Row-wise choice: row `i` from `a` where `take_a[i]`, else from `b`.
    pub fn select_rows(&mut self, take_a: &[bool], a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "select_rows")?;
        let (n, c) = rank2(self, a, "select_rows")?;
        if take_a.len() != n {
            return Err(Error::Shape(format!("select_rows: mask {} vs {n} rows", take_a.len())));
        }
        let (xa, xb) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(n * c);
        for (i, &t) in take_a.iter().enumerate() {
            let src = if t { xa } else { xb };
            out.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let t = Tensor::new(&[n, c], out)?;
        let take_a = take_a.to_vec();
        Ok(self.push(
            t,
            vec![a, b],
            Box::new(move |ctx| {
                let mut ga = vec![0.0; n * c];
                let mut gb = vec![0.0; n * c];
                for (i, &t) in take_a.iter().enumerate() {
                    let dst = if t { &mut ga } else { &mut gb };
                    dst[i * c..(i + 1) * c].copy_from_slice(&ctx.out_grad[i * c..(i + 1) * c]);
                }
                vec![Some(ga), Some(gb)]
            }),
        ))
    }

    /// Row-wise layer normalization over the last axis of a rank-2 value.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (n, c) = rank2(self, x, "layer_norm")?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::Shape(format!("layer_norm: affine params for width {c}")));
        }
        let xd = self.data(x);
        let (gm, bt) = (self.data(gamma), self.data(beta));
        let mut out = vec![0.0; n * c];
        let mut xhat = vec![0.0; n * c];
        let mut inv_std = vec![0.0; n];
        for i in 0..n {
            let row = &xd[i * c..(i + 1) * c];
            let (mu, var) = mean_var(row);
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let h = (row[j] - mu) * is;
                xhat[i * c + j] = h;
                out[i * c + j] = h * gm[j] + bt[j];
            }
        }
        let t = Tensor::new(&[n, c], out)?;
        Ok(self.push(
            t,
            vec![x, gamma, beta],
            Box::new(move |ctx| {
                let g = ctx.out_grad;
                let gm = ctx.inputs[1].data();
                let mut gx = vec![0.0; n * c];
                let mut gg = vec![0.0; c];
                let mut gbeta = vec![0.0; c];
                for i in 0..n {
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for j in 0..c {
                        let gy = g[i * c + j];
                        gg[j] += gy * xhat[i * c + j];
                        gbeta[j] += gy;
                        let gh = gy * gm[j];
                        s1 += gh;
                        s2 += gh * xhat[i * c + j];
                    }
                    let cf = c as f64;
                    for j in 0..c {
                        let gh = g[i * c + j] * gm[j];
                        gx[i * c + j] = inv_std[i] / cf * (cf * gh - s1 - xhat[i * c + j] * s2);
                    }
                }
                vec![Some(gx), Some(gg), Some(gbeta)]
            }),
        ))
    }

    /// Softmax over the last axis of a rank-2 value.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (n, c) = rank2(self, x, "softmax_rows")?;
        let xd = self.data(x);
        let mut out = Vec::with_capacity(n * c);
        for i in 0..n {
            out.extend(softmax_slice(&xd[i * c..(i + 1) * c]));
        }
        let t = Tensor::new(&[n, c], out)?;
        Ok(self.push(
            t,
            vec![x],
            Box::new(move |ctx| {
                let y = ctx.output.data();
                let g = ctx.out_grad;
                let mut gx = vec![0.0; n * c];
                for i in 0..n {
                    let r = i * c..(i + 1) * c;
                    let dot: f64 = y[r.clone()].iter().zip(&g[r.clone()]).map(|(a, b)| a * b).sum();
                    for j in r {
                        gx[j] = y[j] * (g[j] - dot);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Per-cell maximum over the rows assigned to it; cells with no rows are zero.
    /// Gradient flows to the arg-max row (first one on ties).
    pub fn scatter_max(&mut self, rows: Var, cell_of_row: &[usize], num_cells: usize) -> Result<Var> {
        let (p, c) = rank2(self, rows, "scatter_max")?;
        if cell_of_row.len() != p {
            return Err(Error::Shape(format!("scatter_max: {} cells for {p} rows", cell_of_row.len())));
        }
        if cell_of_row.iter().any(|&k| k >= num_cells) {
            return Err(Error::OutOfRange("scatter_max cell index".into()));
        }
        let x = self.data(rows);
        let mut out = vec![0.0; num_cells * c];
        let mut arg: Vec<usize> = vec![usize::MAX; num_cells * c];
        for (r, &cell) in cell_of_row.iter().enumerate() {
            for j in 0..c {
                let o = cell * c + j;
                let v = x[r * c + j];
                if arg[o] == usize::MAX || v > out[o] {
                    out[o] = v;
                    arg[o] = r;
                }
            }
        }
        let t = Tensor::new(&[num_cells, c], out)?;
        Ok(self.push(
            t,
            vec![rows],
            Box::new(move |ctx| {
                let mut g = vec![0.0; p * c];
                for (o, &r) in arg.iter().enumerate() {
                    if r != usize::MAX {
                        g[r * c + o % c] += ctx.out_grad[o];
                    }
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Sum of `|a - target|` over all elements (sub-gradient 0 at equality).
    pub fn l1_sum(&mut self, a: Var, target: &[f64]) -> Result<Var> {
        if target.len() != self.value(a).len() {
            return Err(Error::Shape("l1_sum target length".into()));
        }
        let s: f64 = self.data(a).iter().zip(target).map(|(x, t)| (x - t).abs()).sum();
        let target = target.to_vec();
        Ok(self.push(
            Tensor::scalar(s),
            vec![a],
            Box::new(move |ctx| {
                let x = ctx.inputs[0].data();
                let g0 = ctx.out_grad[0];
                vec![Some(
                    x.iter()
                        .zip(&target)
                        .map(|(x, t)| g0 * sign(x - t))
                        .collect(),
                )]
            }),
        ))
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(&mut self, a: Var, k: &[f64]) -> Result<Var> {
        if k.len() != self.value(a).len() {
            return Err(Error::Shape("mul_const length".into()));
        }
        let out: Vec<f64> = self.data(a).iter().zip(k).map(|(x, k)| x * k).collect();
        let t = Tensor::new(self.shape(a), out)?;
        let k = k.to_vec();
        Ok(self.push(
            t,
            vec![a],
            Box::new(move |ctx| vec![Some(ctx.out_grad.iter().zip(&k).map(|(g, k)| g * k).collect())]),
        ))
    }

    /// Adds a constant tensor of the same shape.
    pub fn add_const(&mut self, a: Var, k: &[f64]) -> Result<Var> {
        if k.len() != self.value(a).len() {
            return Err(Error::Shape("add_const length".into()));
        }
        let out: Vec<f64> = self.data(a).iter().zip(k).map(|(x, k)| x + k).collect();
        let t = Tensor::new(self.shape(a), out)?;
        Ok(self.push(t, vec![a], Box::new(|ctx| vec![Some(ctx.out_grad.to_vec())])))
    }
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn mean_var(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mu = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    (mu, var)
}

pub(crate) fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn matmul_kernel(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let dst = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let row = &b[p * m..(p + 1) * m];
            for j in 0..m {
                dst[j] += aip * row[j];
            }
        }
    }
    out
}
