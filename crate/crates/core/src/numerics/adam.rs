//! Bias-corrected Adam.

use std::collections::BTreeMap;

use super::params::ParamStore;
use crate::{Error, Result};

/// First/second moment buffers for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Running products of the betas used so far, for bias correction when
    /// `beta1` follows a schedule.
    pub beta1_prod: f64,
    pub beta2_prod: f64,
    pub steps: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            beta1_prod: 1.0,
            beta2_prod: 1.0,
            steps: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, hp: &AdamHyper) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam_step: params {} grads {} state {}/{}",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if !(hp.beta1 > 0.0 && hp.beta1 < 1.0 && hp.beta2 > 0.0 && hp.beta2 < 1.0) {
        return Err(Error::InvalidArgument("Adam betas must lie in (0, 1)".into()));
    }
    state.steps += 1;
    state.beta1_prod *= hp.beta1;
    state.beta2_prod *= hp.beta2;
    let c1 = 1.0 - state.beta1_prod;
    let c2 = 1.0 - state.beta2_prod;
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= hp.lr * mhat / (vhat.sqrt() + hp.eps);
    }
    Ok(())
}

/// Adam over every tensor of a [`ParamStore`]; parameters without a gradient
/// are treated as having a zero gradient.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Adam {
    pub states: BTreeMap<String, AdamState>,
}

impl Adam {
    pub fn step(&mut self, store: &mut ParamStore, hp: &AdamHyper) -> Result<()> {
        for (name, t) in store.iter_mut() {
            let n = t.len();
            let st = self
                .states
                .entry(name.to_string())
                .or_insert_with(|| AdamState::new(n));
            let grad = t.grad.take().unwrap_or_else(|| vec![0.0; n]);
            adam_step(t.data_mut(), &grad, st, hp)?;
            t.grad = Some(grad);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, &AdamHyper::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_closed_form() {
        // m1 = (1-b1) g, v1 = (1-b2) g^2; bias-corrected: mhat = g, vhat = g^2,
        // so the step is -lr * g / (|g| + eps).
        let hp = AdamHyper { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let g = 0.5;
        let mut p = vec![1.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[g], &mut st, &hp).unwrap();
        let expected = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15, "{} vs {expected}", p[0]);
    }

    #[test]
    fn two_step_manual_trace() {
        // Step 1, g=1: m=0.1, v=0.001, mhat=1, vhat=1, p = 1 - 0.01*1/(1+1e-8)
        // Step 2, g=-2: m=0.09-0.2=-0.11, v=0.000999+0.004=0.004999,
        //   mhat=-0.11/0.19, vhat=0.004999/0.001999, p -= 0.01*mhat/(sqrt(vhat)+1e-8)
        let hp = AdamHyper { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let mut p = vec![1.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut st, &hp).unwrap();
        let p1 = 1.0 - 0.01 / (1.0 + 1e-8);
        assert!((p[0] - p1).abs() < 1e-15);
        adam_step(&mut p, &[-2.0], &mut st, &hp).unwrap();
        let mhat = -0.11 / 0.19;
        let vhat: f64 = 0.004999 / (1.0 - 0.999f64 * 0.999);
        let p2 = p1 - 0.01 * mhat / (vhat.sqrt() + 1e-8);
        assert!((p[0] - p2).abs() < 1e-12, "{} vs {p2}", p[0]);
    }

    #[test]
    fn rejects_mismatch_and_bad_betas() {
        let mut st = AdamState::new(2);
        assert!(adam_step(&mut [0.0], &[0.0], &mut st, &AdamHyper::default()).is_err());
        let mut st = AdamState::new(1);
        let hp = AdamHyper { beta1: 1.0, ..AdamHyper::default() };
        assert!(adam_step(&mut [0.0], &[0.0], &mut st, &hp).is_err());
    }
}
