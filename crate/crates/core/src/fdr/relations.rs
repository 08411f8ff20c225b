use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{em_advance, noise_scale, DiscreteStepper, EmScratch, Jacobians, Mode, SdeModel, ToyGan, ToySde};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::stats::batch_means;

/// Post-burn-in samples required by the gap estimators.
pub const MIN_SAMPLES: usize = 1000;
const BATCHES: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fdr1Report {
    pub lhs: Estimate,
    pub rhs_beta_term: Estimate,
    pub rhs_eta_term: Estimate,
    pub gap: Estimate,
    pub samples: usize,
    pub stationary: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fdr2Report {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub gap: Estimate,
    pub samples: usize,
    pub stationary: bool,
}

impl Fdr2Report {
    pub fn ratio(&self) -> f64 {
        self.lhs.mean / self.rhs.mean
    }
}

fn post_burn_in(samples: &[Vec<f64>]) -> Result<&[Vec<f64>]> {
    let kept = &samples[samples.len() / 2..];
    if kept.len() < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "trajectory too short: {} post-burn-in samples, need {MIN_SAMPLES}",
            kept.len()
        )));
    }
    Ok(kept)
}

fn estimate(xs: &[f64]) -> Estimate {
    let (mean, std_error) = batch_means(xs, BATCHES);
    Estimate { mean, std_error }
}

/// First and second halves agree within two combined standard errors.
fn drift_free(xs: &[f64]) -> bool {
    let (a, b) = xs.split_at(xs.len() / 2);
    let (ea, eb) = (estimate(a), estimate(b));
    let se = (ea.std_error.powi(2) + eb.std_error.powi(2)).sqrt();
    (ea.mean - eb.mean).abs() <= 2.0 * se
}

struct Local {
    gt: Vec<f64>,
    gw: Vec<f64>,
    jac: Jacobians,
    st: DMatrix<f64>,
    sw: DMatrix<f64>,
}

fn local(problem: &dyn ToyGan, state: &[f64], hessians: bool) -> Local {
    let (dt, dw) = (problem.dim_theta(), problem.dim_omega());
    let (theta, omega) = state.split_at(dt);
    let mut l = Local {
        gt: vec![0.0; dt],
        gw: vec![0.0; dw],
        jac: Jacobians::zeros(dt, dw),
        st: DMatrix::zeros(dt, dt),
        sw: DMatrix::zeros(dw, dw),
    };
    problem.gradients_into(theta, omega, &mut l.gt, &mut l.gw);
    if hessians {
        problem.jacobians_into(theta, omega, &mut l.jac);
    }
    problem.covariances_into(theta, omega, &mut l.st, &mut l.sw);
    l
}

fn quad(h: &DMatrix<f64>, g: &[f64]) -> f64 {
    let mut s = 0.0;
    for r in 0..g.len() {
        for c in 0..g.len() {
            s += g[r] * h[(r, c)] * g[c];
        }
    }
    s
}

fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.transpose().iter()).map(|(x, y)| x * y).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `E‖∇_θΦ‖² − E‖∇_ωΦ‖²` against `β⁻¹ E Tr(Σ_θ∇²_θΦ + Σ_ω∇²_ωΦ)` and, in ALT
/// mode, `−(η/2) E[∇_θΦᵀ∇²_θΦ∇_θΦ + ∇_ωΦᵀ∇²_ωΦ∇_ωΦ]`. `samples` are states
/// `[θ, ω]`; the first half is discarded as burn-in.
pub fn fdr1_gap(problem: &dyn ToyGan, samples: &[Vec<f64>], beta: f64, eta: f64, mode: Mode, exec: Exec) -> Result<Fdr1Report> {
    let kept = post_burn_in(samples)?;
    let eta_weight = if mode == Mode::Alt { -0.5 * eta } else { 0.0 };
    let terms: Vec<[f64; 3]> = par::map_indexed(exec, kept.len(), |k| {
        let l = local(problem, &kept[k], true);
        let lhs = dot(&l.gt, &l.gt) - dot(&l.gw, &l.gw);
        let rb = (trace_product(&l.st, &l.jac.theta_theta) + trace_product(&l.sw, &l.jac.omega_omega)) / beta;
        let re = eta_weight * (quad(&l.jac.theta_theta, &l.gt) + quad(&l.jac.omega_omega, &l.gw));
        [lhs, rb, re]
    });
    let col = |c: usize| terms.iter().map(|t| t[c]).collect::<Vec<_>>();
    let lhs = col(0);
    let gap: Vec<f64> = terms.iter().map(|t| t[0] - t[1] - t[2]).collect();
    Ok(Fdr1Report {
        lhs: estimate(&lhs),
        rhs_beta_term: estimate(&col(1)),
        rhs_eta_term: estimate(&col(2)),
        gap: estimate(&gap),
        samples: kept.len(),
        stationary: drift_free(&lhs),
    })
}

/// `E[θᵀ∇_θΦ − ωᵀ∇_ωΦ]` against `β⁻¹ E Tr(Σ_θ + Σ_ω)`.
pub fn fdr2_gap(problem: &dyn ToyGan, samples: &[Vec<f64>], beta: f64, exec: Exec) -> Result<Fdr2Report> {
    let kept = post_burn_in(samples)?;
    let dt = problem.dim_theta();
    let terms: Vec<[f64; 2]> = par::map_indexed(exec, kept.len(), |k| {
        let l = local(problem, &kept[k], false);
        let (theta, omega) = kept[k].split_at(dt);
        [dot(theta, &l.gt) - dot(omega, &l.gw), (l.st.trace() + l.sw.trace()) / beta]
    });
    let lhs: Vec<f64> = terms.iter().map(|t| t[0]).collect();
    let rhs: Vec<f64> = terms.iter().map(|t| t[1]).collect();
    let gap: Vec<f64> = terms.iter().map(|t| t[0] - t[1]).collect();
    Ok(Fdr2Report {
        lhs: estimate(&lhs),
        rhs: estimate(&rhs),
        gap: estimate(&gap),
        samples: kept.len(),
        stationary: drift_free(&lhs),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrajectorySource {
    /// Minibatch ALT/SML training.
    Discrete,
    /// Euler–Maruyama on ALT-SDE/SML-SDE with this step.
    Sde { dt: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub mode: Mode,
    pub eta: f64,
    pub batch_size: usize,
    /// Overrides `β = 2B/η` (SDE source only).
    pub beta: Option<f64>,
    pub source: TrajectorySource,
    /// Recorded samples (before burn-in removal).
    pub samples: usize,
    /// Steps between recorded samples.
    pub thin: usize,
    pub init: Vec<f64>,
    pub seed: u64,
    pub exec: Exec,
}

impl ProbeConfig {
    pub fn beta(&self) -> Result<f64> {
        match (self.beta, self.source) {
            (Some(b), TrajectorySource::Sde { .. }) if b > 0.0 => Ok(b),
            (Some(b), TrajectorySource::Sde { .. }) => Err(Error::invalid(format!("β must be positive, got {b}"))),
            (Some(_), TrajectorySource::Discrete) => Err(Error::invalid("β is fixed by batch size and learning rate for discrete training")),
            (None, _) => noise_scale(self.batch_size, self.eta),
        }
    }
}

/// Recorded states of one long run.
pub fn probe_trajectory(problem: &dyn ToyGan, cfg: &ProbeConfig) -> Result<Vec<Vec<f64>>> {
    let beta = cfg.beta()?;
    if cfg.thin == 0 {
        return Err(Error::invalid("thin must be at least 1"));
    }
    let dim = problem.dim_theta() + problem.dim_omega();
    if cfg.init.len() != dim {
        return Err(Error::shape("initial state", dim, cfg.init.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = cfg.init.clone();
    let mut out = Vec::with_capacity(cfg.samples);
    match cfg.source {
        TrajectorySource::Discrete => {
            let mut stepper = DiscreteStepper::new(problem, cfg.batch_size);
            for s in 0..cfg.samples {
                for _ in 0..cfg.thin {
                    stepper.step(&mut x, cfg.eta, cfg.mode, &mut rng);
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("training state at step {}", (s + 1) * cfg.thin)));
                }
                out.push(x.clone());
            }
        }
        TrajectorySource::Sde { dt } => {
            if !(dt > 0.0) {
                return Err(Error::invalid("dt must be positive"));
            }
            let mut sde = ToySde::new(problem, cfg.mode, cfg.eta, beta)?;
            let mut scratch = EmScratch::new(sde.dim());
            for s in 0..cfg.samples {
                em_advance(&mut sde, &mut x, dt, cfg.thin, s * cfg.thin, &mut rng, &mut scratch)?;
                out.push(x.clone());
            }
        }
    }
    Ok(out)
}

/// Trajectory plus both relations.
pub fn fdr_probe(problem: &dyn ToyGan, cfg: &ProbeConfig) -> Result<(Fdr1Report, Fdr2Report)> {
    let path = probe_trajectory(problem, cfg)?;
    let beta = cfg.beta()?;
    Ok((
        fdr1_gap(problem, &path, beta, cfg.eta, cfg.mode, cfg.exec)?,
        fdr2_gap(problem, &path, beta, cfg.exec)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Bilinear, LinearGenerator, Quadratic};

    fn sde_cfg(mode: Mode, eta: f64, beta: f64, samples: usize) -> ProbeConfig {
        ProbeConfig {
            mode,
            eta,
            batch_size: 1,
            beta: Some(beta),
            source: TrajectorySource::Sde { dt: 1e-3 },
            samples,
            thin: 50,
            init: vec![0.0, 0.0],
            seed: 5,
            exec: Exec::default(),
        }
    }

    #[test]
    fn fixed_point_without_noise() {
        let q = Quadratic::new(vec![0.0], vec![0.0]).unwrap();
        let samples = vec![vec![0.0, 0.0]; 2000];
        let r1 = fdr1_gap(&q, &samples, 10.0, 0.1, Mode::Alt, Exec::default()).unwrap();
        let r2 = fdr2_gap(&q, &samples, 10.0, Exec::default()).unwrap();
        for e in [r1.lhs, r1.rhs_beta_term, r1.rhs_eta_term, r1.gap, r2.lhs, r2.rhs, r2.gap] {
            assert_eq!(e.mean, 0.0);
        }
        assert_eq!(r1.samples, 1000);
        assert!(r1.stationary);
    }

    #[test]
    fn short_trajectories_are_rejected() {
        let samples = vec![vec![0.0, 0.0]; 1998];
        assert!(fdr2_gap(&Bilinear, &samples, 1.0, Exec::default()).is_err());
    }

    #[test]
    fn quadratic_toy_matches_stationary_moments() {
        // SML-SDE: independent OU processes dθ = −θ dt + √(2Σ_θ/β) dW, so
        // E θ² = Σ_θ/β; same for ω
        let q = Quadratic::isotropic(1.0);
        let beta = 4.0;
        let (r1, r2) = fdr_probe(&q, &sde_cfg(Mode::Sml, 0.1, beta, 40_000)).unwrap();
        let oracle_norm = 2.0 / beta;
        assert!((r2.lhs.mean - oracle_norm).abs() < 4.0 * r2.lhs.std_error, "{r2:?}");
        assert!((r2.rhs.mean - oracle_norm).abs() < 1e-15);
        // isotropic noise: E θ² − E ω² = 0 and Tr(Σ_θ − Σ_ω)/β = 0
        assert!(r1.lhs.mean.abs() < 4.0 * r1.lhs.std_error, "{r1:?}");
        assert!(r1.rhs_beta_term.mean.abs() < 1e-15);
        assert_eq!(r1.rhs_eta_term.mean, 0.0);
    }

    #[test]
    fn alt_sde_eta_term_matches_oracle() {
        // ALT-SDE on the anisotropic toy: rate 1 + η/2, so
        // E[θ² − ω²] = (Σ_θ − Σ_ω) / (β (1 + η/2))
        let q = Quadratic::anisotropic();
        let (beta, eta) = (4.0, 0.2);
        let (r1, _) = fdr_probe(&q, &sde_cfg(Mode::Alt, eta, beta, 40_000)).unwrap();
        let lhs = 0.75 / (beta * (1.0 + eta / 2.0));
        assert!((r1.lhs.mean - lhs).abs() < 4.0 * r1.lhs.std_error, "{r1:?}");
        assert!((r1.rhs_beta_term.mean - 0.75 / beta).abs() < 1e-15);
        assert!((r1.rhs_eta_term.mean + 0.5 * eta * lhs).abs() < 4.0 * r1.rhs_eta_term.std_error);
        assert!(r1.gap.mean.abs() < 4.0 * r1.gap.std_error);
    }

    #[test]
    fn linear_toy_gap_is_consistent() {
        let p = LinearGenerator::new(vec![0.95, 1.05], vec![1.9, 2.1]).unwrap();
        let cfg = ProbeConfig { init: vec![2.0, 0.5], ..sde_cfg(Mode::Sml, 0.01, 200.0, 20_000) };
        let (r1, _) = fdr_probe(&p, &cfg).unwrap();
        assert!(r1.gap.mean.abs() <= 3.0 * r1.gap.std_error, "{r1:?}");
    }

    #[test]
    fn discrete_source_rejects_beta_override() {
        let cfg = ProbeConfig { source: TrajectorySource::Discrete, ..sde_cfg(Mode::Sml, 0.1, 4.0, 2000) };
        assert!(fdr_probe(&Bilinear, &cfg).is_err());
        let cfg = ProbeConfig { beta: None, batch_size: 8, ..cfg };
        let path = probe_trajectory(&Quadratic::anisotropic(), &cfg).unwrap();
        assert_eq!(path.len(), 2000);
    }
}
