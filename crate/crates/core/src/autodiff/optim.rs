//! First-order parameter updates.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Descent,
    Ascent,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Descent => -1.0,
            Direction::Ascent => 1.0,
        }
    }
}

/// Plain gradient steps or Adam with persistent moment estimates.
#[derive(Clone, Debug)]
pub enum Optimizer {
    Sgd {
        direction: Direction,
    },
    /// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
    /// `p ← p ∓ rate · m̂ / (√v̂ + ε)` with bias-corrected `m̂`, `v̂`.
    Adam {
        direction: Direction,
        beta1: f64,
        beta2: f64,
        eps: f64,
        step: u64,
        m: Vec<f64>,
        v: Vec<f64>,
    },
}

impl Optimizer {
    pub fn sgd() -> Self {
        Optimizer::Sgd { direction: Direction::Descent }
    }

    pub fn adam(n: usize) -> Self {
        Optimizer::Adam {
            direction: Direction::Descent,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn with_direction(mut self, dir: Direction) -> Self {
        match &mut self {
            Optimizer::Sgd { direction } | Optimizer::Adam { direction, .. } => *direction = dir,
        }
        self
    }

    pub fn by_name(name: &str, n: usize) -> Result<Self> {
        match name {
            "sgd" => Ok(Self::sgd()),
            "adam" => Ok(Self::adam(n)),
            other => Err(Error::invalid(format!("unknown optimizer `{other}`"))),
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], rate: f64) -> Result<()> {
        if params.len() != grad.len() {
            return Err(Error::shape("gradient", params.len(), grad.len()));
        }
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::invalid(format!("learning rate must be nonnegative, got {rate}")));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i} = {}", grad[i])));
        }
        match self {
            Optimizer::Sgd { direction } => {
                let s = direction.sign() * rate;
                for (p, g) in params.iter_mut().zip(grad) {
                    *p += s * g;
                }
            }
            Optimizer::Adam { direction, beta1, beta2, eps, step, m, v } => {
                if m.len() != params.len() {
                    return Err(Error::shape("adam state", m.len(), params.len()));
                }
                *step += 1;
                let c1 = 1.0 - beta1.powi(*step as i32);
                let c2 = 1.0 - beta2.powi(*step as i32);
                let s = direction.sign() * rate;
                for i in 0..params.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * grad[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * grad[i] * grad[i];
                    params[i] += s * (m[i] / c1) / ((v[i] / c2).sqrt() + *eps);
                }
            }
        }
        Ok(())
    }
}
