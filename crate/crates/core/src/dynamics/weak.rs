//! Weak-error study: discrete ALT/SML training against its SDE
//! approximation, compared through Monte Carlo means of a test function.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::stats::linear_fit_slope;

use super::discrete::{DiscreteStepper, Mode};
use super::sde::{em_advance, noise_scale, EmScratch, SdeModel, ToySde};
use super::toys::ToyGan;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestFunction {
    Theta,
    Omega,
    /// `‖θ‖² + ‖ω‖²`.
    SquaredNorm,
    Constant,
}

impl TestFunction {
    pub fn name(self) -> &'static str {
        match self {
            TestFunction::Theta => "theta",
            TestFunction::Omega => "omega",
            TestFunction::SquaredNorm => "norm2",
            TestFunction::Constant => "const",
        }
    }

    /// `state = [θ, ω]`; vector players use their first coordinate for the
    /// coordinate functions.
    pub fn eval(self, state: &[f64], dim_theta: usize) -> f64 {
        match self {
            TestFunction::Theta => state[0],
            TestFunction::Omega => state[dim_theta],
            TestFunction::SquaredNorm => state.iter().map(|v| v * v).sum(),
            TestFunction::Constant => 1.0,
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta" => Ok(TestFunction::Theta),
            "omega" => Ok(TestFunction::Omega),
            "norm2" => Ok(TestFunction::SquaredNorm),
            "const" => Ok(TestFunction::Constant),
            other => Err(Error::invalid(format!("unknown test function `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakErrorConfig {
    pub etas: Vec<f64>,
    pub replicas: usize,
    pub horizon: f64,
    pub batch_size: usize,
    /// Euler–Maruyama steps per learning-rate step (`dt = η / substeps`).
    pub substeps: usize,
    pub init_theta: Vec<f64>,
    pub init_omega: Vec<f64>,
    pub test_function: TestFunction,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for WeakErrorConfig {
    fn default() -> Self {
        WeakErrorConfig {
            etas: vec![0.05, 0.02, 0.01],
            replicas: 100_000,
            horizon: 1.0,
            batch_size: 64,
            substeps: 50,
            init_theta: vec![1.0],
            init_omega: vec![0.0],
            test_function: TestFunction::Theta,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakErrorRow {
    pub eta: f64,
    /// `max_t |Ê f(discrete) − Ê f(SDE)|` over checkpoints `t = η, 2η, …`.
    pub max_weak_error: f64,
    /// Standard error of the difference at the maximizing checkpoint.
    pub std_error: f64,
    pub at_time: f64,
    /// Means at the final checkpoint.
    pub discrete_mean: f64,
    pub sde_mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakErrorTable {
    pub mode: Mode,
    pub rows: Vec<WeakErrorRow>,
    /// Log-log slope of error against `η` and its standard error; absent
    /// when inconclusive or when an error is exactly zero.
    pub slope: Option<(f64, f64)>,
    /// Some error is within three standard errors of zero.
    pub inconclusive: bool,
}

impl WeakErrorTable {
    pub fn is_monotone_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].max_weak_error < w[0].max_weak_error)
    }
}

/// Running mean and centered second moment per checkpoint (Welford, with
/// Chan's pairwise merge).
#[derive(Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn zeros(k: usize) -> Self {
        Moments { n: 0.0, mean: vec![0.0; k], m2: vec![0.0; k] }
    }

    fn push(&mut self, k: usize, v: f64) {
        // callers push checkpoint 0 first, so n is bumped there
        if k == 0 {
            self.n += 1.0;
        }
        let d = v - self.mean[k];
        self.mean[k] += d / self.n;
        self.m2[k] += d * (v - self.mean[k]);
    }

    fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        for k in 0..self.mean.len() {
            let d = o.mean[k] - self.mean[k];
            self.mean[k] += d * o.n / n;
            self.m2[k] += o.m2[k] + d * d * self.n * o.n / n;
        }
        self.n = n;
    }

    fn variance(&self, k: usize) -> f64 {
        self.m2[k] / (self.n - 1.0)
    }
}

/// Independent stream per (η index, path kind, replica).
pub fn replica_rng(seed: u64, eta_index: usize, kind: u64, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((eta_index as u64) << 8 | kind).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(replica as u64);
    rng
}

const CHUNK: usize = 512;

/// Mean and standard error of `f` at each checkpoint for both the discrete
/// scheme and the SDE at one learning rate.
fn simulate(problem: &dyn ToyGan, mode: Mode, eta: f64, eta_index: usize, cfg: &WeakErrorConfig) -> Result<(Moments, Moments)> {
    let beta = noise_scale(cfg.batch_size, eta)?;
    let checkpoints = (cfg.horizon / eta + 1e-9).floor() as usize;
    let dt = eta / cfg.substeps as f64;
    let dim_t = problem.dim_theta();
    let init: Vec<f64> = cfg.init_theta.iter().chain(&cfg.init_omega).copied().collect();
    let f = cfg.test_function;

    let replicas: Vec<usize> = (0..cfg.replicas).collect();
    let chunks = par::map_chunks(cfg.exec, &replicas, CHUNK, |_, block| -> Result<(Moments, Moments)> {
        let (mut md, mut ms) = (Moments::zeros(checkpoints), Moments::zeros(checkpoints));
        let mut stepper = DiscreteStepper::new(problem, cfg.batch_size);
        let mut sde = ToySde::new(problem, mode, eta, beta)?;
        let mut scratch = EmScratch::new(sde.dim());
        let mut x = init.clone();
        for &r in block {
            let mut rng = replica_rng(cfg.seed, eta_index, 0, r);
            x.copy_from_slice(&init);
            for k in 0..checkpoints {
                stepper.step(&mut x, eta, mode, &mut rng);
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("discrete replica {r} at step {}", k + 1)));
                }
                md.push(k, f.eval(&x, dim_t));
            }
            let mut rng = replica_rng(cfg.seed, eta_index, 1, r);
            x.copy_from_slice(&init);
            for k in 0..checkpoints {
                em_advance(&mut sde, &mut x, dt, cfg.substeps, k * cfg.substeps, &mut rng, &mut scratch)?;
                ms.push(k, f.eval(&x, dim_t));
            }
        }
        Ok((md, ms))
    });
    let (mut td, mut ts) = (Moments::zeros(checkpoints), Moments::zeros(checkpoints));
    for c in chunks {
        let (d, s) = c?;
        td.merge(&d);
        ts.merge(&s);
    }
    Ok((td, ts))
}

fn check_config(problem: &dyn ToyGan, cfg: &WeakErrorConfig) -> Result<()> {
    if cfg.etas.is_empty() {
        return Err(Error::Empty("learning-rate grid"));
    }
    if cfg.replicas < 2 {
        return Err(Error::invalid("need at least two replicas"));
    }
    if cfg.substeps == 0 {
        return Err(Error::invalid("substeps must be at least 1"));
    }
    if !(cfg.horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    for &eta in &cfg.etas {
        if !(eta > 0.0 && eta <= cfg.horizon) {
            return Err(Error::invalid(format!("learning rate {eta} outside (0, horizon]")));
        }
    }
    if cfg.init_theta.len() != problem.dim_theta() {
        return Err(Error::shape("initial generator parameters", problem.dim_theta(), cfg.init_theta.len()));
    }
    if cfg.init_omega.len() != problem.dim_omega() {
        return Err(Error::shape("initial discriminator parameters", problem.dim_omega(), cfg.init_omega.len()));
    }
    Ok(())
}

pub fn weak_error_table(problem: &dyn ToyGan, mode: Mode, cfg: &WeakErrorConfig) -> Result<WeakErrorTable> {
    check_config(problem, cfg)?;
    let r = cfg.replicas as f64;
    let mut rows = Vec::with_capacity(cfg.etas.len());
    for (idx, &eta) in cfg.etas.iter().enumerate() {
        let (md, ms) = simulate(problem, mode, eta, idx, cfg)?;
        let mut best = (0usize, -1.0, 0.0);
        for k in 0..md.mean.len() {
            let gap = (md.mean[k] - ms.mean[k]).abs();
            if gap > best.1 {
                best = (k, gap, ((md.variance(k) + ms.variance(k)) / r).sqrt());
            }
        }
        let last = md.mean.len() - 1;
        rows.push(WeakErrorRow {
            eta,
            max_weak_error: best.1,
            std_error: best.2,
            at_time: (best.0 + 1) as f64 * eta,
            discrete_mean: md.mean[last],
            sde_mean: ms.mean[last],
        });
    }
    let inconclusive = rows.iter().any(|row| row.max_weak_error <= 3.0 * row.std_error && row.std_error > 0.0);
    let slope = if inconclusive || rows.len() < 2 || rows.iter().any(|row| row.max_weak_error <= 0.0) {
        None
    } else {
        let x: Vec<f64> = rows.iter().map(|row| row.eta.ln()).collect();
        let y: Vec<f64> = rows.iter().map(|row| row.max_weak_error.ln()).collect();
        Some(linear_fit_slope(&x, &y))
    };
    Ok(WeakErrorTable { mode, rows, slope, inconclusive })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::toys::{Bilinear, LinearGenerator};

    fn small(f: TestFunction) -> WeakErrorConfig {
        WeakErrorConfig { replicas: 64, test_function: f, ..Default::default() }
    }

    #[test]
    fn constant_test_function_has_zero_error() {
        let p = LinearGenerator::new(vec![0.9, 1.1], vec![1.8, 2.2]).unwrap();
        let t = weak_error_table(&p, Mode::Sml, &small(TestFunction::Constant)).unwrap();
        assert!(t.rows.iter().all(|r| r.max_weak_error == 0.0 && r.std_error == 0.0));
        assert!(t.slope.is_none() && !t.inconclusive);
    }

    #[test]
    fn noiseless_linear_problem_is_monotone() {
        // one latent and one data sample: Σ ≡ 0, both paths deterministic
        let p = LinearGenerator::new(vec![1.0], vec![2.0]).unwrap();
        for mode in [Mode::Alt, Mode::Sml] {
            let t = weak_error_table(&p, mode, &small(TestFunction::Theta)).unwrap();
            assert!(t.is_monotone_decreasing(), "{t:?}");
            assert!(t.rows.iter().all(|r| r.std_error < 1e-12));
            let (slope, _) = t.slope.unwrap();
            let expected = if mode == Mode::Alt { 1.2 } else { 0.9 };
            assert!(slope > expected, "{mode:?} slope {slope}");
        }
    }

    #[test]
    fn execution_modes_agree_bitwise() {
        let p = LinearGenerator::new(vec![0.9, 1.1], vec![1.8, 2.2]).unwrap();
        let cfg = WeakErrorConfig { replicas: 1500, etas: vec![0.2, 0.1, 0.05], ..Default::default() };
        let a = weak_error_table(&p, Mode::Alt, &cfg).unwrap();
        let b = weak_error_table(&p, Mode::Alt, &WeakErrorConfig { exec: Exec::Sequential, ..cfg.clone() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs() {
        let cfg = WeakErrorConfig { etas: vec![], ..small(TestFunction::Theta) };
        assert!(weak_error_table(&Bilinear, Mode::Alt, &cfg).is_err());
        let cfg = WeakErrorConfig { init_theta: vec![], ..small(TestFunction::Theta) };
        assert!(weak_error_table(&Bilinear, Mode::Alt, &cfg).is_err());
        let cfg = WeakErrorConfig { etas: vec![2.0], ..small(TestFunction::Theta) };
        assert!(weak_error_table(&Bilinear, Mode::Alt, &cfg).is_err());
        assert!("cube".parse::<TestFunction>().is_err());
    }
}
