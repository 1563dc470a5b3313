//! Central finite-difference checking of recorded computations.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::Result;

/// Builds a scalar from the given inputs on a fresh graph.
pub trait ScalarFn: Fn(&mut Graph, &[Var]) -> Result<Var> {}
impl<F: Fn(&mut Graph, &[Var]) -> Result<Var>> ScalarFn for F {}

/// Relative error `||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12)`
/// between the tape gradient and central differences with step `h`, over all
/// inputs jointly.
pub fn gradcheck<F: ScalarFn>(f: F, inputs: &[Tensor], h: f64) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<f64> = vars
        .iter()
        .flat_map(|&v| {
            let n = g.value(v).len();
            g.grad(v).map(|x| x.to_vec()).unwrap_or_else(|| vec![0.0; n])
        })
        .collect();

    let eval = |ins: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.constant(t.clone())).collect();
        let l = f(&mut g, &vars)?;
        Ok(g.value(l).item())
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for ti in 0..inputs.len() {
        for j in 0..inputs[ti].len() {
            let x0 = inputs[ti].data()[j];
            work[ti].data_mut()[j] = x0 + h;
            let fp = eval(&work)?;
            work[ti].data_mut()[j] = x0 - h;
            let fm = eval(&work)?;
            work[ti].data_mut()[j] = x0;
            numeric.push((fp - fm) / (2.0 * h));
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    Ok(norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12))
}

/// As [`gradcheck`], but the function also reads parameters from `store`;
/// both the parameters and the `inputs` are checked. At most `per_tensor`
/// evenly spaced entries of each tensor are differenced.
pub fn gradcheck_params<F>(f: F, store: &ParamStore, inputs: &[Tensor], h: f64, per_tensor: usize) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = f(&mut g, store, &vars)?;
    g.backward(loss)?;
    let mut grads = store.clone();
    grads.zero_grad();
    g.accumulate_into(&mut grads);

    let picks = |n: usize| -> Vec<usize> {
        let step = n.div_ceil(per_tensor.max(1)).max(1);
        (0..n).step_by(step).collect()
    };
    let eval = |s: &ParamStore, ins: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.constant(t.clone())).collect();
        let l = f(&mut g, s, &vars)?;
        Ok(g.value(l).item())
    };
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    let mut work = store.clone();
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in &names {
        let n = store.get(name).map_or(0, Tensor::len);
        let grad = grads.get(name).and_then(|t| t.grad.clone()).unwrap_or_else(|| vec![0.0; n]);
        for j in picks(n) {
            let x0 = store.get(name).unwrap().data()[j];
            work.get_mut(name).unwrap().data_mut()[j] = x0 + h;
            let fp = eval(&work, inputs)?;
            work.get_mut(name).unwrap().data_mut()[j] = x0 - h;
            let fm = eval(&work, inputs)?;
            work.get_mut(name).unwrap().data_mut()[j] = x0;
            analytic.push(grad[j]);
            numeric.push((fp - fm) / (2.0 * h));
        }
    }
    let mut ins = inputs.to_vec();
    for (ti, &v) in vars.iter().enumerate() {
        let n = inputs[ti].len();
        let grad = g.grad(v).map(|x| x.to_vec()).unwrap_or_else(|| vec![0.0; n]);
        for j in picks(n) {
            let x0 = inputs[ti].data()[j];
            ins[ti].data_mut()[j] = x0 + h;
            let fp = eval(store, &ins)?;
            ins[ti].data_mut()[j] = x0 - h;
            let fm = eval(store, &ins)?;
            ins[ti].data_mut()[j] = x0;
            analytic.push(grad[j]);
            numeric.push((fp - fm) / (2.0 * h));
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    Ok(norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12))
}
