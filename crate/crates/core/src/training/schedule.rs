use serde::{Deserialize, Serialize};

/// One-cycle policy: cosine warm-up of the learning rate from
/// `lr_max / div_factor` to `lr_max` over the first `pct_start` of the
/// steps, then cosine annealing to `lr_max / final_div_factor`. The Adam
/// `beta1` moves the opposite way between `beta1_max` and `beta1_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OneCycle {
    pub lr_max: f64,
    pub pct_start: f64,
    pub div_factor: f64,
    pub final_div_factor: f64,
    pub beta1_max: f64,
    pub beta1_min: f64,
}

impl Default for OneCycle {
    fn default() -> Self {
        OneCycle {
            lr_max: 1e-3,
            pct_start: 0.4,
            div_factor: 10.0,
            final_div_factor: 1e4,
            beta1_max: 0.95,
            beta1_min: 0.85,
        }
    }
}

fn cos_ramp(from: f64, to: f64, frac: f64) -> f64 {
    from + (to - from) * (1.0 - libm::cos(std::f64::consts::PI * frac)) / 2.0
}

impl OneCycle {
    /// `(lr, beta1)` at `step` of `total`.
    pub fn at(&self, step: u64, total: u64) -> (f64, f64) {
        let total = total.max(1) as f64;
        let up = (self.pct_start * total).floor().max(1.0);
        let t = step as f64;
        let lo = self.lr_max / self.div_factor;
        let end = self.lr_max / self.final_div_factor;
        if t < up {
            let f = t / up;
            (cos_ramp(lo, self.lr_max, f), cos_ramp(self.beta1_max, self.beta1_min, f))
        } else {
            let f = ((t - up) / (total - up).max(1.0)).min(1.0);
            (cos_ramp(self.lr_max, end, f), cos_ramp(self.beta1_min, self.beta1_max, f))
        }
    }
}
