//! Adversarial training of the value network `u_θ` (generator side, HJB
//! residual) against the density network `m_ω` (discriminator side, FP
//! residual).
//!
//! Every outer iteration samples a discriminator batch, takes `N_ω` steps on
//! `L_D`, samples a generator batch and takes `N_θ` steps on `L_G`.
//!
//! * Time-dependent mode: `L_D = L_FP + β_D L_init`, `L_G = L_HJB + β_G L_term`.
//! * Ergodic mode: the initial/terminal penalties are replaced by the
//!   constraints of the stationary system. `∫m = 1` holds by construction
//!   (`m = exp(n_ω − ln Ẑ)` with `Ẑ` a quadrature of `exp(n_ω)` refreshed each
//!   outer iteration), `∫u = 0` is the penalty `λ_u (mean_batch u)²` inside
//!   `L_G`, and `H̄` is a trainable scalar stored as the density network's
//!   extra parameter. `L_D = L_FP + L_HJB`, where the HJB term reaches only
//!   `H̄` (the density enters it as a constant).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{write_checkpoint, Activation, Embedding, JetGraph, JetVars, Mlp, NetId, Optimizer, ParamVector, Var};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

use super::problem::{ErgodicMfgProblem, TdMfgProblem};
use super::residual::{exp_density, fp_residual, hjb_residual, SpatialJet};

const EVAL_POINTS_SEED: u64 = 0x00e7_a1_5eed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    fn build(self, n: usize) -> Optimizer {
        match self {
            OptimizerKind::Sgd => Optimizer::sgd(),
            OptimizerKind::Adam => Optimizer::adam(n),
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::invalid(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// `K`.
    pub outer_iters: usize,
    /// `N_θ`.
    pub inner_theta: usize,
    /// `N_ω`.
    pub inner_omega: usize,
    pub batch_d: usize,
    pub batch_g: usize,
    pub beta_d: f64,
    pub beta_g: f64,
    pub lr_d: f64,
    pub lr_g: f64,
    /// Weight of the `∫u = 0` penalty (ergodic mode).
    pub lambda_u: f64,
    pub seed: u64,
    /// Evaluation points: a uniform grid in 1-D, this many uniform random
    /// points otherwise.
    pub eval_grid: usize,
    /// Quadrature nodes per axis for the density normalization.
    pub norm_grid: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    /// A trace row is recorded every `log_every` outer iterations and after
    /// the last one.
    pub log_every: usize,
    /// Periodic checkpoints (0 disables them).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub exec: Exec,
}

impl SolverConfig {
    pub fn for_dim(dim: usize) -> Self {
        let one_d = dim == 1;
        SolverConfig {
            outer_iters: if one_d { 100_000 } else { 200_000 },
            inner_theta: 1,
            inner_omega: 1,
            batch_d: 128,
            batch_g: 128,
            beta_d: 1.0,
            beta_g: 1.0,
            lr_d: 1e-3,
            lr_g: 1e-3,
            lambda_u: 1.0,
            seed: 0,
            eval_grid: if one_d { 256 } else { 10_000 },
            norm_grid: if one_d { 256 } else { 8 },
            hidden: vec![50, 50, 50],
            activation: Activation::Tanh,
            optimizer: OptimizerKind::Adam,
            log_every: 100,
            checkpoint_every: 0,
            checkpoint_dir: None,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("inner_theta", self.inner_theta),
            ("inner_omega", self.inner_omega),
            ("batch_d", self.batch_d),
            ("batch_g", self.batch_g),
            ("eval_grid", self.eval_grid),
            ("norm_grid", self.norm_grid),
            ("log_every", self.log_every),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        let positive = [
            ("beta_d", self.beta_d),
            ("beta_g", self.beta_g),
            ("lr_d", self.lr_d),
            ("lr_g", self.lr_g),
            ("lambda_u", self.lambda_u),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum MfgProblem {
    Ergodic(ErgodicMfgProblem),
    TimeDependent(TdMfgProblem),
}

impl MfgProblem {
    pub fn dim(&self) -> usize {
        match self {
            MfgProblem::Ergodic(p) => p.dim,
            MfgProblem::TimeDependent(p) => p.dim,
        }
    }
}

/// One trace row. Ergodic runs report `l_init = l_term = 0`; time-dependent
/// runs report `penalty_u = 0` and NaN errors.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub l_fp: f64,
    pub l_hjb: f64,
    pub l_init: f64,
    pub l_term: f64,
    pub penalty_u: f64,
    pub rel_l2_u: f64,
    pub rel_l2_m: f64,
    pub hbar: f64,
}

#[derive(Clone, Debug)]
pub struct MfgRun {
    pub u_net: Mlp,
    pub u_params: ParamVector,
    pub m_net: Mlp,
    pub m_params: ParamVector,
    /// `ln Ẑ` of the final density network (0 in time-dependent mode).
    pub log_norm: f64,
    pub trace: Vec<TraceRow>,
}

impl MfgRun {
    /// Trained `H̄` (ergodic mode).
    pub fn hbar(&self) -> Option<f64> {
        self.m_params.extras(&self.m_net).first().copied()
    }

    pub fn u(&self, x: &[f64]) -> Result<f64> {
        Ok(self.u_net.forward(&self.u_params, x)?[0])
    }

    pub fn m(&self, x: &[f64]) -> Result<f64> {
        Ok((self.m_net.forward(&self.m_params, x)?[0] - self.log_norm).exp())
    }
}

/// `‖approx − oracle‖₂ / ‖oracle‖₂`.
pub fn relative_l2_error(approx: &[f64], oracle: &[f64]) -> Result<f64> {
    if oracle.is_empty() {
        return Err(Error::Empty("evaluation grid"));
    }
    if approx.len() != oracle.len() {
        return Err(Error::shape("approximation values", oracle.len(), approx.len()));
    }
    let den: f64 = oracle.iter().map(|v| v * v).sum::<f64>();
    if den == 0.0 {
        return Err(Error::invalid("oracle field has zero norm"));
    }
    let num: f64 = approx.iter().zip(oracle).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    Ok((num / den).sqrt())
}

/// Uniform tensor grid with `n` nodes per axis on `[0, 1)^d`.
pub fn torus_grid(dim: usize, n: usize) -> Vec<Vec<f64>> {
    let total = n.pow(dim as u32);
    (0..total)
        .map(|idx| {
            let mut r = idx;
            (0..dim)
                .map(|_| {
                    let v = (r % n) as f64 / n as f64;
                    r /= n;
                    v
                })
                .collect()
        })
        .collect()
}

/// Points where errors against the closed form are measured.
pub fn evaluation_points(dim: usize, n: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        return torus_grid(1, n);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(EVAL_POINTS_SEED);
    (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()
}

/// `ln Ẑ`, `Ẑ = mean_grid exp(n_ω)` (periodic trapezoid rule), computed stably.
pub fn log_normalizer(net: &Mlp, params: &ParamVector, grid: &[Vec<f64>], exec: Exec) -> Result<f64> {
    let vals: Vec<f64> = par::map_indexed(exec, grid.len(), |i| net.forward(params, &grid[i]).map(|v| v[0]))
        .into_iter()
        .collect::<Result<_>>()?;
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean: f64 = vals.iter().map(|v| (v - max).exp()).sum::<f64>() / vals.len() as f64;
    Ok(max + mean.ln())
}

fn mean_square<'g>(g: &'g JetGraph<'_>, r: &[Var<'g>]) -> Var<'g> {
    g.tape().sum(r.iter().map(|v| v.square())) / r.len() as f64
}

fn spatial<'g>(j: &JetVars<'g>, coords: std::ops::Range<usize>) -> SpatialJet<Var<'g>> {
    SpatialJet {
        value: j.value(0),
        grad: coords.clone().map(|k| j.grad(0, k)).collect(),
        laplacian: j.laplacian_over(0, coords),
    }
}

/// Values of each term of the losses at one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub l_fp: f64,
    pub l_hjb: f64,
    pub l_init: f64,
    pub l_term: f64,
    pub penalty_u: f64,
}

impl LossTerms {
    /// `L_D = L_FP + β_D L_init`.
    pub fn discriminator(&self, beta_d: f64) -> f64 {
        self.l_fp + beta_d * self.l_init
    }

    /// `L_G = L_HJB + β_G L_term`.
    pub fn generator(&self, beta_g: f64) -> f64 {
        self.l_hjb + beta_g * self.l_term
    }
}

struct Ergodic<'a> {
    problem: &'a ErgodicMfgProblem,
    log_norm: f64,
}

impl Ergodic<'_> {
    /// `L_FP + L_HJB(H̄)` on a discriminator batch.
    fn disc_loss<'g>(&self, g: &'g JetGraph<'_>, u: NetId, m: NetId, hbar_index: usize, pts: &[Vec<f64>]) -> Result<(Var<'g>, LossTerms)> {
        let d = self.problem.dim;
        let hbar = g.parameter(m, hbar_index)?;
        let uj = g.eval_batch(u, pts, true)?;
        let nj = g.eval_batch(m, pts, true)?;
        let mut fp = Vec::with_capacity(pts.len());
        let mut hjb = Vec::with_capacity(pts.len());
        for ((x, uj), nj) in pts.iter().zip(&uj).zip(&nj) {
            let uj = spatial(uj, 0..d);
            let grads: Vec<_> = (0..d).map(|k| nj.grad(0, k)).collect();
            let diag: Vec<_> = (0..d).map(|k| nj.diag2(0, k)).collect();
            let mj = exp_density(nj.value(0), &grads, &diag, self.log_norm);
            fp.push(fp_residual(self.problem.eps, &mj, &uj));
            let log_m = g.constant(nj.value(0).value() - self.log_norm);
            hjb.push(hjb_residual(self.problem.eps, self.problem.spatial_cost(x), &uj, log_m, hbar));
        }
        let l_fp = mean_square(g, &fp);
        let l_hjb = mean_square(g, &hjb);
        let terms = LossTerms { l_fp: l_fp.value(), l_hjb: l_hjb.value(), ..Default::default() };
        Ok((l_fp + l_hjb, terms))
    }

    /// `L_HJB + λ_u (mean u)²` on a generator batch.
    fn gen_loss<'g>(&self, g: &'g JetGraph<'_>, u: NetId, m: NetId, hbar: f64, lambda_u: f64, pts: &[Vec<f64>]) -> Result<(Var<'g>, LossTerms)> {
        let d = self.problem.dim;
        let uj = g.eval_batch(u, pts, true)?;
        let nv = g.eval_batch(m, pts, false)?;
        let hbar = g.constant(hbar);
        let mut hjb = Vec::with_capacity(pts.len());
        for ((x, uj), nv) in pts.iter().zip(&uj).zip(&nv) {
            let uj = spatial(uj, 0..d);
            hjb.push(hjb_residual(self.problem.eps, self.problem.spatial_cost(x), &uj, nv.value(0) - self.log_norm, hbar));
        }
        let l_hjb = mean_square(g, &hjb);
        let mean_u = g.tape().sum(uj.iter().map(|j| j.value(0))) / pts.len() as f64;
        let penalty = mean_u.square();
        let terms = LossTerms { l_hjb: l_hjb.value(), penalty_u: penalty.value(), ..Default::default() };
        Ok((l_hjb + penalty * lambda_u, terms))
    }
}

struct TimeDependent<'a> {
    problem: &'a TdMfgProblem,
}

impl TimeDependent<'_> {
    fn at_time(pts: &[Vec<f64>], s: f64) -> Vec<Vec<f64>> {
        pts.iter()
            .map(|p| {
                let mut q = p.clone();
                q[0] = s;
                q
            })
            .collect()
    }

    /// `L_FP + β_D L_init`; points are `(s, x)`.
    fn disc_loss<'g>(&self, g: &'g JetGraph<'_>, u: NetId, m: NetId, beta_d: f64, pts: &[Vec<f64>]) -> Result<(Var<'g>, LossTerms)> {
        let d = self.problem.dim;
        let eps = self.problem.diffusion();
        let uj = g.eval_batch(u, pts, true)?;
        let nj = g.eval_batch(m, pts, true)?;
        let mut fp = Vec::with_capacity(pts.len());
        for (uj, nj) in uj.iter().zip(&nj) {
            let us = spatial(uj, 1..d + 1);
            let grads: Vec<_> = (1..=d).map(|k| nj.grad(0, k)).collect();
            let diag: Vec<_> = (1..=d).map(|k| nj.diag2(0, k)).collect();
            let mj = exp_density(nj.value(0), &grads, &diag, 0.0);
            let ds_m = mj.value * nj.grad(0, 0);
            // ∂ₛm + div(m ∇u) − (σ²/2) Δm
            fp.push(ds_m - fp_residual(eps, &mj, &us));
        }
        let init_pts = Self::at_time(pts, 0.0);
        let n0 = g.eval_batch(m, &init_pts, false)?;
        let init: Vec<_> = n0
            .iter()
            .zip(&init_pts)
            .map(|(n, p)| n.value(0).exp() - (self.problem.initial_density)(&p[1..]))
            .collect();
        let l_fp = mean_square(g, &fp);
        let l_init = mean_square(g, &init);
        let terms = LossTerms { l_fp: l_fp.value(), l_init: l_init.value(), ..Default::default() };
        Ok((l_fp + l_init * beta_d, terms))
    }

    /// `L_HJB + β_G L_term`.
    fn gen_loss<'g>(&self, g: &'g JetGraph<'_>, u: NetId, m: NetId, beta_g: f64, pts: &[Vec<f64>]) -> Result<(Var<'g>, LossTerms)> {
        let d = self.problem.dim;
        let eps = self.problem.diffusion();
        let uj = g.eval_batch(u, pts, true)?;
        let nv = g.eval_batch(m, pts, false)?;
        let zero = g.constant(0.0);
        let mut hjb = Vec::with_capacity(pts.len());
        for ((p, uj), nv) in pts.iter().zip(&uj).zip(&nv) {
            let us = spatial(uj, 1..d + 1);
            // ∂ₛu + (σ²/2) Δu + H₀(x, ∇u) − f(x, m),  f = ln m = n
            let r = uj.grad(0, 0) + hjb_residual(eps, self.problem.cost.eval(&p[1..]), &us, nv.value(0), zero);
            hjb.push(r);
        }
        let term_pts = Self::at_time(pts, self.problem.horizon);
        let ut = g.eval_batch(u, &term_pts, false)?;
        let term: Vec<_> = ut
            .iter()
            .zip(&term_pts)
            .map(|(v, p)| v.value(0) - (self.problem.terminal_value)(&p[1..]))
            .collect();
        let l_hjb = mean_square(g, &hjb);
        let l_term = mean_square(g, &term);
        let terms = LossTerms { l_hjb: l_hjb.value(), l_term: l_term.value(), ..Default::default() };
        Ok((l_hjb + l_term * beta_g, terms))
    }
}

/// Loss values of the time-dependent scheme on given batches.
#[allow(clippy::too_many_arguments)]
pub fn td_losses(
    problem: &TdMfgProblem,
    u_net: &Mlp,
    u_params: &ParamVector,
    m_net: &Mlp,
    m_params: &ParamVector,
    samples_d: &[Vec<f64>],
    samples_g: &[Vec<f64>],
    config: &SolverConfig,
) -> Result<LossTerms> {
    if samples_d.is_empty() || samples_g.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let td = TimeDependent { problem };
    let g = JetGraph::new(config.exec);
    let u = g.network(u_net, u_params, false)?;
    let m = g.network(m_net, m_params, false)?;
    let (_, dterms) = td.disc_loss(&g, u, m, config.beta_d, samples_d)?;
    let (_, gterms) = td.gen_loss(&g, u, m, config.beta_g, samples_g)?;
    Ok(LossTerms { l_hjb: gterms.l_hjb, l_term: gterms.l_term, ..dterms })
}

/// Networks used by [`train_mfgan`] for a problem: `u_θ` and the
/// log-density network `n_ω` (carrying `H̄` as an extra in ergodic mode).
pub fn build_networks(problem: &MfgProblem, config: &SolverConfig) -> Result<(Mlp, Mlp)> {
    let (input, embedding, extras) = match problem {
        MfgProblem::Ergodic(p) => (p.dim, Embedding::Torus, 1),
        MfgProblem::TimeDependent(p) => (p.dim + 1, Embedding::TimeTorus, 0),
    };
    let u = Mlp::new(input, &config.hidden, 1, config.activation, embedding)?;
    let m = Mlp::new(input, &config.hidden, 1, config.activation, embedding)?.with_extras(extras);
    Ok((u, m))
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_points(rng: &mut ChaCha8Rng, problem: &MfgProblem, n: usize) -> Vec<Vec<f64>> {
    match problem {
        MfgProblem::Ergodic(p) => (0..n).map(|_| (0..p.dim).map(|_| rng.random::<f64>()).collect()).collect(),
        MfgProblem::TimeDependent(p) => (0..n)
            .map(|_| {
                let mut v = Vec::with_capacity(p.dim + 1);
                v.push(rng.random::<f64>() * p.horizon);
                v.extend((0..p.dim).map(|_| rng.random::<f64>()));
                v
            })
            .collect(),
    }
}

fn dump(dir: &Path, tag: &str, run: (&Mlp, &ParamVector, &Mlp, &ParamVector)) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    write_checkpoint(dir.join(format!("{tag}_u.ckpt")), run.0, run.1)?;
    write_checkpoint(dir.join(format!("{tag}_m.ckpt")), run.2, run.3)?;
    Ok(dir.join(format!("{tag}_u.ckpt")))
}

/// Errors of `u` and `m` against the closed form (NaN without one).
pub fn oracle_errors(
    problem: &ErgodicMfgProblem,
    u_net: &Mlp,
    u_params: &ParamVector,
    m_net: &Mlp,
    m_params: &ParamVector,
    log_norm: f64,
    points: &[Vec<f64>],
    exec: Exec,
) -> Result<(f64, f64)> {
    let Some(oracle) = problem.closed_form() else {
        return Ok((f64::NAN, f64::NAN));
    };
    let vals: Vec<(f64, f64)> = par::map_indexed(exec, points.len(), |i| {
        let u = u_net.forward(u_params, &points[i])?[0];
        let n = m_net.forward(m_params, &points[i])?[0];
        Ok((u, (n - log_norm).exp()))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let (u, m): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
    let u_star: Vec<f64> = points.iter().map(|x| oracle.u(x)).collect();
    let m_star: Vec<f64> = points.iter().map(|x| oracle.m(x)).collect();
    Ok((relative_l2_error(&u, &u_star)?, relative_l2_error(&m, &m_star)?))
}

/// Runs the adversarial scheme for `config.outer_iters` outer iterations.
pub fn train_mfgan(problem: &MfgProblem, config: &SolverConfig) -> Result<MfgRun> {
    config.validate()?;
    let (u_net, m_net) = build_networks(problem, config)?;
    let mut u_params = u_net.init(&mut rng_stream(config.seed, 1));
    let mut m_params = m_net.init(&mut rng_stream(config.seed, 2));
    let mut sampler = rng_stream(config.seed, 3);
    let mut u_opt = config.optimizer.build(u_params.len());
    let mut m_opt = config.optimizer.build(m_params.len());

    let dim = problem.dim();
    let norm_grid = torus_grid(dim, config.norm_grid);
    let eval_points = evaluation_points(dim, config.eval_grid);
    let hbar_index = m_net.layer_param_count();
    let mut trace = Vec::new();
    let mut log_norm = 0.0;

    for k in 0..config.outer_iters {
        if let MfgProblem::Ergodic(_) = problem {
            log_norm = log_normalizer(&m_net, &m_params, &norm_grid, config.exec)?;
        }
        let abort = |e: Error, u: &ParamVector, m: &ParamVector| -> Error {
            match (&e, &config.checkpoint_dir) {
                (Error::NonFinite(what), Some(dir)) => match dump(dir, "abort", (&u_net, u, &m_net, m)) {
                    Ok(path) => Error::NonFinite(format!("{what} at outer iteration {k}; last finite state in {}", path.display())),
                    Err(io) => io,
                },
                (Error::NonFinite(what), None) => Error::NonFinite(format!("{what} at outer iteration {k}")),
                _ => e,
            }
        };

        let pts_d = sample_points(&mut sampler, problem, config.batch_d);
        let mut dterms = LossTerms::default();
        for _ in 0..config.inner_omega {
            let step = (|| -> Result<ParamVector> {
                let g = JetGraph::new(config.exec);
                let u = g.network(&u_net, &u_params, false)?;
                let m = g.network(&m_net, &m_params, true)?;
                let (loss, terms) = match problem {
                    MfgProblem::Ergodic(p) => Ergodic { problem: p, log_norm }.disc_loss(&g, u, m, hbar_index, &pts_d)?,
                    MfgProblem::TimeDependent(p) => TimeDependent { problem: p }.disc_loss(&g, u, m, config.beta_d, &pts_d)?,
                };
                dterms = terms;
                Ok(g.backward(loss)?.take(m))
            })();
            let grad = step.map_err(|e| abort(e, &u_params, &m_params))?;
            m_opt
                .step(&mut m_params, &grad, config.lr_d)
                .map_err(|e| abort(e, &u_params, &m_params))?;
        }

        let hbar = m_params.extras(&m_net).first().copied().unwrap_or(0.0);
        let pts_g = sample_points(&mut sampler, problem, config.batch_g);
        let mut gterms = LossTerms::default();
        for _ in 0..config.inner_theta {
            let step = (|| -> Result<ParamVector> {
                let g = JetGraph::new(config.exec);
                let u = g.network(&u_net, &u_params, true)?;
                let m = g.network(&m_net, &m_params, false)?;
                let (loss, terms) = match problem {
                    MfgProblem::Ergodic(p) => {
                        Ergodic { problem: p, log_norm }.gen_loss(&g, u, m, hbar, config.lambda_u, &pts_g)?
                    }
                    MfgProblem::TimeDependent(p) => TimeDependent { problem: p }.gen_loss(&g, u, m, config.beta_g, &pts_g)?,
                };
                gterms = terms;
                Ok(g.backward(loss)?.take(u))
            })();
            let grad = step.map_err(|e| abort(e, &u_params, &m_params))?;
            u_opt
                .step(&mut u_params, &grad, config.lr_g)
                .map_err(|e| abort(e, &u_params, &m_params))?;
        }

        let last = k + 1 == config.outer_iters;
        if k % config.log_every == 0 || last {
            let (rel_u, rel_m) = match problem {
                MfgProblem::Ergodic(p) => {
                    let ln = log_normalizer(&m_net, &m_params, &norm_grid, config.exec)?;
                    oracle_errors(p, &u_net, &u_params, &m_net, &m_params, ln, &eval_points, config.exec)?
                }
                MfgProblem::TimeDependent(_) => (f64::NAN, f64::NAN),
            };
            let row = TraceRow {
                outer_iter: k,
                l_fp: dterms.l_fp,
                l_hjb: gterms.l_hjb,
                l_init: dterms.l_init,
                l_term: gterms.l_term,
                penalty_u: gterms.penalty_u,
                rel_l2_u: rel_u,
                rel_l2_m: rel_m,
                hbar: m_params.extras(&m_net).first().copied().unwrap_or(f64::NAN),
            };
            debug!("outer {k}: {row:?}");
            if k % (config.log_every * 100) == 0 {
                info!("outer {k}: L_FP {:.3e} L_HJB {:.3e} err_u {:.3e} err_m {:.3e}", row.l_fp, row.l_hjb, rel_u, rel_m);
            }
            trace.push(row);
        }
        if config.checkpoint_every > 0 && (k + 1) % config.checkpoint_every == 0 {
            if let Some(dir) = &config.checkpoint_dir {
                dump(dir, "latest", (&u_net, &u_params, &m_net, &m_params))?;
            }
        }
    }
    if let MfgProblem::Ergodic(_) = problem {
        log_norm = log_normalizer(&m_net, &m_params, &norm_grid, config.exec)?;
    }
    Ok(MfgRun { u_net, u_params, m_net, m_params, log_norm, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mfg::problem::SpatialCost;
    use std::sync::Arc;

    fn tiny(seed: u64) -> SolverConfig {
        SolverConfig {
            outer_iters: 3,
            batch_d: 8,
            batch_g: 8,
            eval_grid: 16,
            norm_grid: 16,
            hidden: vec![4],
            log_every: 1,
            seed,
            ..SolverConfig::for_dim(1)
        }
    }

    #[test]
    fn relative_error_examples_and_errors() {
        assert_eq!(relative_l2_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((relative_l2_error(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((relative_l2_error(&[3.3, 4.4], &[3.0, 4.0]).unwrap() - 0.1).abs() < 1e-14);
        assert!(matches!(relative_l2_error(&[], &[]), Err(Error::Empty(_))));
        assert!(relative_l2_error(&[1.0], &[0.0]).is_err());
        assert!(matches!(relative_l2_error(&[1.0], &[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn grids() {
        let g = torus_grid(2, 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[4], vec![1.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(evaluation_points(1, 4), vec![vec![0.0], vec![0.25], vec![0.5], vec![0.75]]);
        assert_eq!(evaluation_points(3, 5), evaluation_points(3, 5));
    }

    #[test]
    fn zero_iterations_return_the_initialization() {
        let p = MfgProblem::Ergodic(ErgodicMfgProblem::sine_test_class(1).unwrap());
        let cfg = SolverConfig { outer_iters: 0, ..tiny(9) };
        let run = train_mfgan(&p, &cfg).unwrap();
        assert!(run.trace.is_empty());
        let (u, m) = build_networks(&p, &cfg).unwrap();
        assert_eq!(run.u_params, u.init(&mut rng_stream(9, 1)));
        assert_eq!(run.m_params, m.init(&mut rng_stream(9, 2)));
        assert_eq!(run.hbar(), Some(0.0));
    }

    #[test]
    fn training_is_deterministic_across_execution_modes() {
        let p = MfgProblem::Ergodic(ErgodicMfgProblem::sine_test_class(1).unwrap());
        let a = train_mfgan(&p, &tiny(4)).unwrap();
        let b = train_mfgan(&p, &SolverConfig { exec: Exec::Sequential, ..tiny(4) }).unwrap();
        assert_eq!(a.u_params, b.u_params);
        assert_eq!(a.m_params, b.m_params);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace.len(), 3);
        let c = train_mfgan(&p, &tiny(5)).unwrap();
        assert_ne!(a.u_params, c.u_params);
    }

    #[test]
    fn time_dependent_training_runs() {
        let p = MfgProblem::TimeDependent(TdMfgProblem::sine_test_class(1, 1.0).unwrap());
        let run = train_mfgan(&p, &tiny(1)).unwrap();
        assert_eq!(run.hbar(), None);
        assert!(run.trace.iter().all(|r| r.l_fp.is_finite() && r.l_init.is_finite() && r.l_term.is_finite()));
    }

    fn affine(a: f64, b: f64, c: f64) -> (Mlp, ParamVector) {
        let net = Mlp::from_widths(2, vec![2, 1], Activation::Identity, Embedding::None, 0).unwrap();
        (net, ParamVector(vec![a, b, c]))
    }

    #[test]
    fn td_losses_match_hand_evaluation() {
        // u = a s + b x + c, m = exp(p s + q x + r), σ = 1, f̃ = 0, m⁰ = 1, u_T = 0
        let (a, b, c) = (0.3, -0.7, 0.2);
        let (p, q, r) = (0.1, 0.4, -0.05);
        let (un, up) = affine(a, b, c);
        let (mn, mp) = affine(p, q, r);
        let problem = TdMfgProblem::new(1, 2.0, 1.0, SpatialCost::Zero, Arc::new(|_| 1.0)).unwrap();
        let sd = vec![vec![0.5, 0.25], vec![1.5, 0.75]];
        let sg = vec![vec![0.2, 0.1], vec![1.0, 0.6], vec![1.9, 0.3]];
        let cfg = SolverConfig { beta_d: 2.0, beta_g: 3.0, ..SolverConfig::for_dim(1) };
        let got = td_losses(&problem, &un, &up, &mn, &mp, &sd, &sg, &cfg).unwrap();

        let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        let l_fp = mean(sd.iter().map(|z| {
            let m = (p * z[0] + q * z[1] + r).exp();
            let res = m * p + m * q * b - 0.5 * m * q * q;
            res * res
        }).collect());
        let l_init = mean(sd.iter().map(|z| ((q * z[1] + r).exp() - 1.0).powi(2)).collect());
        let l_hjb = mean(sg.iter().map(|z| (a + 0.5 * b * b - (p * z[0] + q * z[1] + r)).powi(2)).collect());
        let l_term = mean(sg.iter().map(|z| (a * 2.0 + b * z[1] + c).powi(2)).collect());
        for (x, y) in [(got.l_fp, l_fp), (got.l_init, l_init), (got.l_hjb, l_hjb), (got.l_term, l_term)] {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        assert!((got.discriminator(2.0) - (l_fp + 2.0 * l_init)).abs() < 1e-12);
        assert!((got.generator(3.0) - (l_hjb + 3.0 * l_term)).abs() < 1e-12);
    }

    #[test]
    fn exact_boundary_terms_vanish() {
        // m(0, x) = m⁰ and u(T, x) = u_T give zero penalties
        let problem = TdMfgProblem::new(1, 1.0, 1.0, SpatialCost::Zero, Arc::new(|_| 1.0)).unwrap();
        let (un, up) = affine(-0.5, 0.0, 0.5);
        let (mn, mp) = affine(0.8, 0.0, 0.0);
        let pts = vec![vec![0.3, 0.2], vec![0.6, 0.9]];
        let got = td_losses(&problem, &un, &up, &mn, &mp, &pts, &pts, &SolverConfig::for_dim(1)).unwrap();
        assert_eq!(got.l_init, 0.0);
        assert_eq!(got.l_term, 0.0);
        assert!(got.l_fp > 0.0);
    }

    #[test]
    fn invalid_configs() {
        let p = MfgProblem::Ergodic(ErgodicMfgProblem::sine_test_class(1).unwrap());
        for cfg in [
            SolverConfig { batch_d: 0, ..tiny(0) },
            SolverConfig { lr_g: -1.0, ..tiny(0) },
            SolverConfig { hidden: vec![], ..tiny(0) },
        ] {
            assert!(matches!(train_mfgan(&p, &cfg), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn divergence_dumps_last_finite_state() {
        let dir = tempfile::tempdir().unwrap();
        let p = MfgProblem::Ergodic(ErgodicMfgProblem::sine_test_class(1).unwrap());
        let cfg = SolverConfig {
            lr_d: 1e300,
            lr_g: 1e300,
            optimizer: OptimizerKind::Sgd,
            outer_iters: 50,
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..tiny(0)
        };
        match train_mfgan(&p, &cfg) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("outer iteration"), "{msg}"),
            other => panic!("expected divergence, got {other:?}"),
        }
        let ck = crate::autodiff::read_checkpoint(dir.path().join("abort_u.ckpt")).unwrap();
        assert!(ck.params.is_finite());
    }
}
