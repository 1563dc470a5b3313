use crate::numerics::{Graph, Init, ParamStore, Tensor, Var};
use crate::rng::Rng;
use crate::{Error, Result};

/// Linear map `name.w` / `name.b` applied to rows of `x`.
pub(crate) fn proj(g: &mut Graph, store: &ParamStore, name: &str, x: Var) -> Result<Var> {
    let w = g.param(store, &format!("{name}.w"))?;
    let b = g.param(store, &format!("{name}.b"))?;
    g.linear(x, w, Some(b))
}

pub(crate) fn init_linear(store: &mut ParamStore, rng: &Rng, name: &str, fan_in: usize, fan_out: usize, zero: bool) {
    let init = if zero { Init::Zeros } else { Init::Xavier };
    store.init(rng, &format!("{name}.w"), &[fan_in, fan_out], init);
    store.init(rng, &format!("{name}.b"), &[fan_out], Init::Zeros);
}

/// Shape of a deformable attention block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeformableShape {
    pub channels: usize,
    pub heads: usize,
    pub scales: usize,
    pub points: usize,
}

impl DeformableShape {
    fn samples(&self) -> usize {
        self.heads * self.scales * self.points
    }
}

/// Value and output projections, zero offset/weight maps, and offset biases
/// that start head `h`, point `m` at distance `m + 1` along direction
/// `2 pi h / heads`.
pub fn init_deformable(store: &mut ParamStore, rng: &Rng, prefix: &str, s: DeformableShape) {
    let c = s.channels;
    init_linear(store, rng, &format!("{prefix}.v"), c, c, false);
    init_linear(store, rng, &format!("{prefix}.o"), c, c, true);
    init_linear(store, rng, &format!("{prefix}.att"), c, s.samples(), true);
    store.init(rng, &format!("{prefix}.off.w"), &[c, 2 * s.samples()], Init::Zeros);
    let mut bias = Vec::with_capacity(2 * s.samples());
    for h in 0..s.heads {
        let th = 2.0 * std::f64::consts::PI * h as f64 / s.heads as f64;
        for _ in 0..s.scales {
            for m in 0..s.points {
                let r = (m + 1) as f64;
                bias.extend_from_slice(&[r * libm::sin(th), r * libm::cos(th)]);
            }
        }
    }
    store.insert(format!("{prefix}.off.b"), Tensor::new(&[2 * s.samples()], bias).expect("bias length"));
}

/// Reference point of every query in every scale's index space, laid out
/// to match the `[N, heads, S, M, 2]` offset tensor.
fn reference_points(h: usize, w: usize, s: DeformableShape) -> Vec<f64> {
    let mut out = Vec::with_capacity(h * w * s.samples() * 2);
    for r in 0..h {
        for c in 0..w {
            for _ in 0..s.heads {
                for sc in 0..s.scales {
                    let f = (1usize << sc) as f64;
                    let (rr, cc) = ((r as f64 + 0.5) / f - 0.5, (c as f64 + 0.5) / f - 0.5);
                    for _ in 0..s.points {
                        out.extend_from_slice(&[rr, cc]);
                    }
                }
            }
        }
    }
    out
}

/// Deformable self-attention over a `[H, W, C]` map; every position is a query.
/// Scale `s` is the value map average-pooled `s` times.
pub fn iml_deformable(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var, s: DeformableShape) -> Result<Var> {
    let (h, w) = match g.shape(x) {
        [h, w, c] if *c == s.channels => (*h, *w),
        sh => return Err(Error::Shape(format!("iml_deformable input {sh:?}, C={}", s.channels))),
    };
    let n = h * w;
    let rows = g.reshape(x, &[n, s.channels])?;
    let v = proj(g, store, &format!("{prefix}.v"), rows)?;
    let mut values = vec![g.reshape(v, &[h, w, s.channels])?];
    for _ in 1..s.scales {
        let last = *values.last().unwrap();
        values.push(g.avg_pool2(last)?);
    }
    let off = proj(g, store, &format!("{prefix}.off"), rows)?;
    let locs = g.add_const(off, &reference_points(h, w, s))?;
    let locs = g.reshape(locs, &[n, s.heads, s.scales, s.points, 2])?;
    let att = proj(g, store, &format!("{prefix}.att"), rows)?;
    let att = g.reshape(att, &[n * s.heads, s.scales * s.points])?;
    let att = g.softmax_rows(att)?;
    let att = g.reshape(att, &[n, s.heads, s.scales * s.points])?;
    let agg = g.deformable_sample(&values, locs, att, s.heads)?;
    let out = proj(g, store, &format!("{prefix}.o"), agg)?;
    g.reshape(out, &[h, w, s.channels])
}
