//! AdamW with decoupled weight decay and the warmup-cosine schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub total_steps: u64,
    pub warmup_frac: f64,
    pub lr_start: f64,
    pub lr_peak: f64,
    pub lr_end: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            total_steps: 2000,
            warmup_frac: 0.2,
            lr_start: 1e-7,
            lr_peak: 1e-6,
            lr_end: 1e-8,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps < 2 {
            return Err(Error::Config("total_steps must be at least 2".into()));
        }
        if !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return Err(Error::Config(format!("warmup_frac must lie in (0, 1), got {}", self.warmup_frac)));
        }
        for (k, v) in [("lr_start", self.lr_start), ("lr_peak", self.lr_peak), ("lr_end", self.lr_end)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `ceil(warmup_frac * T)`, kept inside `[1, T - 1]`.
    pub fn warmup_end(&self) -> u64 {
        let w = (self.warmup_frac * self.total_steps as f64).ceil() as u64;
        w.clamp(1, self.total_steps - 1)
    }

    /// Linear ramp to the peak, then cosine decay to `lr_end` at `T`.
    pub fn lr_at(&self, step: u64) -> Result<f64> {
        let t = self.total_steps;
        if step > t {
            return Err(Error::StepOutOfRange { step, total: t });
        }
        let w = self.warmup_end();
        if step <= w {
            let f = step as f64 / w as f64;
            return Ok(self.lr_start + (self.lr_peak - self.lr_start) * f);
        }
        let p = (step - w) as f64 / (t - w) as f64;
        Ok(self.lr_end + (self.lr_peak - self.lr_end) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 0.1,
        }
    }
}

/// First and second moments for one parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
}

impl Moments {
    pub fn zeros_like(p: &Matrix) -> Self {
        Self {
            m: Matrix::zeros(p.rows(), p.cols()),
            v: Matrix::zeros(p.rows(), p.cols()),
            t: 0,
        }
    }
}

impl AdamW {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite();
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }

    /// One bias-corrected update; decay is applied to the weights directly.
    pub fn step(&self, p: &mut Matrix, g: &Matrix, mom: &mut Moments, lr: f64) -> Result<()> {
        for (what, m) in [("gradient", g), ("first moment", &mom.m), ("second moment", &mom.v)] {
            if m.shape() != p.shape() {
                return Err(Error::ShapeMismatch {
                    what,
                    expected: p.shape(),
                    found: m.shape(),
                });
            }
        }
        mom.t += 1;
        let c1 = 1.0 - self.beta1.powi(mom.t as i32);
        let c2 = 1.0 - self.beta2.powi(mom.t as i32);
        let decay = 1.0 - lr * self.weight_decay;
        let pm = p.as_mut_slice();
        let mm = mom.m.as_mut_slice();
        let vm = mom.v.as_mut_slice();
        for (k, &gk) in g.as_slice().iter().enumerate() {
            mm[k] = self.beta1 * mm[k] + (1.0 - self.beta1) * gk;
            vm[k] = self.beta2 * vm[k] + (1.0 - self.beta2) * gk * gk;
            let mhat = mm[k] / c1;
            let vhat = vm[k] / c2;
            pm[k] = pm[k] * decay - lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}
