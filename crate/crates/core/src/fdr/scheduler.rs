use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{minibatch_gradients, noise_scale, sample_batch, Mode, ToyGan, TrainState};
use crate::error::{Error, Result};

use super::estimators::{cov_estimators, CovEstimate};

/// Learning-rate decay driven by the second fluctuation-dissipation relation.
#[derive(Clone, Debug, PartialEq)]
pub struct SchedulerState {
    pub eta0: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub batch_size: usize,
    pub beta: f64,
    pub triggers: u32,
    /// `(1 − δ)^triggers`, accumulated by repeated multiplication.
    decay: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SchedulerEvent {
    Triggered { ratio: f64 },
    Unchanged { ratio: f64 },
    UndefinedRatio,
}

impl SchedulerEvent {
    pub fn ratio(self) -> Option<f64> {
        match self {
            SchedulerEvent::Triggered { ratio } | SchedulerEvent::Unchanged { ratio } => Some(ratio),
            SchedulerEvent::UndefinedRatio => None,
        }
    }
}

impl SchedulerState {
    pub fn new(eta0: f64, epsilon: f64, delta: f64, batch_size: usize) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::invalid(format!("tolerance ε must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("decay δ must lie in (0, 1), got {delta}")));
        }
        Ok(SchedulerState {
            eta0,
            eta: eta0,
            epsilon,
            delta,
            batch_size,
            beta: noise_scale(batch_size, eta0)?,
            triggers: 0,
            decay: 1.0,
        })
    }

    /// Applies the rule to a precomputed ratio (`None` when undefined).
    pub fn observe(&self, ratio: Option<f64>) -> (SchedulerState, SchedulerEvent) {
        let mut next = self.clone();
        let event = match ratio {
            None => {
                info!("scheduler: undefined ratio (zero noise trace), η = {}", self.eta);
                SchedulerEvent::UndefinedRatio
            }
            Some(r) if (r - 1.0).abs() < self.epsilon => {
                next.triggers += 1;
                next.decay *= 1.0 - self.delta;
                next.eta = self.eta0 * next.decay;
                next.beta = 2.0 * self.batch_size as f64 / next.eta;
                info!("scheduler: ratio {r} within {} of 1, η {} -> {}", self.epsilon, self.eta, next.eta);
                SchedulerEvent::Triggered { ratio: r }
            }
            Some(r) => {
                debug!("scheduler: ratio {r}, η stays {}", self.eta);
                SchedulerEvent::Unchanged { ratio: r }
            }
        };
        (next, event)
    }
}

/// `(Θᵀg_θ^ℬ − 𝒲ᵀg_ω^ℬ) / (β⁻¹ Tr(Σ̂_θ + Σ̂_ω))`, `None` for a zero denominator.
pub fn fdr2_ratio(beta: f64, theta: &[f64], omega: &[f64], g_theta: &[f64], g_omega: &[f64], cov: &CovEstimate) -> Option<f64> {
    let den = cov.trace() / beta;
    if den == 0.0 {
        return None;
    }
    let num: f64 = theta.iter().zip(g_theta).map(|(a, b)| a * b).sum::<f64>() - omega.iter().zip(g_omega).map(|(a, b)| a * b).sum::<f64>();
    Some(num / den)
}

pub fn scheduler_step(
    state: &SchedulerState,
    theta: &[f64],
    omega: &[f64],
    g_theta: &[f64],
    g_omega: &[f64],
    cov: &CovEstimate,
) -> (SchedulerState, SchedulerEvent) {
    state.observe(fdr2_ratio(state.beta, theta, omega, g_theta, g_omega, cov))
}

/// Ratios drifting linearly from `start` to `end` over `steps` steps.
pub fn scripted_ratios(start: f64, end: f64, steps: usize) -> Vec<f64> {
    if steps < 2 {
        return vec![start; steps];
    }
    (0..steps).map(|k| start + (end - start) * k as f64 / (steps - 1) as f64).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleRow {
    pub step: usize,
    /// NaN when undefined.
    pub ratio: f64,
    pub eta: f64,
    pub triggered: bool,
}

/// Replays a ratio stream through the rule.
pub fn replay(state: SchedulerState, ratios: &[f64]) -> Vec<ScheduleRow> {
    let mut s = state;
    ratios
        .iter()
        .enumerate()
        .map(|(step, &r)| {
            let (next, ev) = s.observe(Some(r));
            s = next;
            ScheduleRow { step, ratio: r, eta: s.eta, triggered: matches!(ev, SchedulerEvent::Triggered { .. }) }
        })
        .collect()
}

/// SML training with the scheduler: each step estimates the ratio on its
/// batch at the current iterate, takes the SML step at the current `η`,
/// then applies the rule.
pub fn scheduled_sml_training(
    problem: &dyn ToyGan,
    init_theta: Vec<f64>,
    init_omega: Vec<f64>,
    scheduler: SchedulerState,
    steps: usize,
    seed: u64,
) -> Result<(TrainState, Vec<ScheduleRow>)> {
    let mut state = TrainState::new(init_theta, init_omega, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sched = scheduler;
    let mut rows = Vec::with_capacity(steps);
    for step in 0..steps {
        let batch = sample_batch(problem, sched.batch_size, &mut rng);
        let (gt, gw) = minibatch_gradients(problem, &state.theta, &state.omega, &batch)?;
        let cov = cov_estimators(problem, &state.theta, &state.omega, &batch)?;
        let ratio = fdr2_ratio(sched.beta, &state.theta, &state.omega, &gt, &gw, &cov);
        state = crate::dynamics::sml_step(problem, &state, sched.eta, &batch)?;
        let (next, ev) = sched.observe(ratio);
        sched = next;
        rows.push(ScheduleRow {
            step,
            ratio: ratio.unwrap_or(f64::NAN),
            eta: sched.eta,
            triggered: matches!(ev, SchedulerEvent::Triggered { .. }),
        });
    }
    debug!("scheduled training finished after {} triggers ({:?} mode)", sched.triggers, Mode::Sml);
    Ok((state, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Quadratic;
    use nalgebra::DMatrix;

    fn cov(trace_theta: f64) -> CovEstimate {
        CovEstimate { sigma_theta: DMatrix::from_element(1, 1, trace_theta), sigma_omega: DMatrix::zeros(1, 1), batch_size: 2 }
    }

    #[test]
    fn rule_examples() {
        let s = SchedulerState::new(0.2, 0.1, 0.5, 4).unwrap();
        let (n, ev) = s.observe(Some(1.0));
        assert_eq!(n.eta, 0.1);
        assert_eq!(n.beta, 80.0);
        assert_eq!(ev, SchedulerEvent::Triggered { ratio: 1.0 });
        let (n, ev) = s.observe(Some(5.0));
        assert_eq!(n, s);
        assert_eq!(ev.ratio(), Some(5.0));
        let (n, ev) = scheduler_step(&s, &[1.0], &[0.0], &[1.0], &[0.0], &cov(0.0));
        assert_eq!((n, ev), (s.clone(), SchedulerEvent::UndefinedRatio));
    }

    #[test]
    fn ratio_from_batch_quantities() {
        let s = SchedulerState::new(0.2, 0.1, 0.5, 4).unwrap();
        // β = 40; numerator 2·3 − (−1)·1 = 7; denominator 14/40
        let r = fdr2_ratio(s.beta, &[2.0], &[-1.0], &[3.0], &[1.0], &cov(14.0)).unwrap();
        assert!((r - 20.0).abs() < 1e-12);
    }

    #[test]
    fn scripted_stream_replay() {
        let (eps, delta, eta0) = (0.05, 0.1, 0.3);
        let ratios = scripted_ratios(3.0, 1.0, 100);
        let rows = replay(SchedulerState::new(eta0, eps, delta, 8).unwrap(), &ratios);
        let first = ratios.iter().position(|r| (r - 1.0).abs() < eps).unwrap();
        assert_eq!(rows.iter().position(|r| r.triggered).unwrap(), first);
        let mut k = 0;
        let mut factor = 1.0;
        for row in &rows {
            if row.triggered {
                k += 1;
                factor *= 1.0 - delta;
            }
            assert_eq!(row.eta, eta0 * factor);
        }
        assert!(k > 0 && rows.windows(2).all(|w| w[1].eta <= w[0].eta));
    }

    #[test]
    fn invalid_parameters() {
        assert!(SchedulerState::new(0.1, 0.0, 0.5, 4).is_err());
        assert!(SchedulerState::new(0.1, 0.1, 1.0, 4).is_err());
        assert!(SchedulerState::new(-0.1, 0.1, 0.5, 4).is_err());
    }

    #[test]
    fn scheduled_training_decays_near_stationarity() {
        let s = SchedulerState::new(0.1, 0.2, 0.1, 16).unwrap();
        let (state, rows) = scheduled_sml_training(&Quadratic::anisotropic(), vec![2.0], vec![-2.0], s, 3000, 1).unwrap();
        assert!(state.theta.is_finite());
        assert!(rows.iter().any(|r| r.triggered));
        assert!(rows.last().unwrap().eta < 0.1);
    }
}
