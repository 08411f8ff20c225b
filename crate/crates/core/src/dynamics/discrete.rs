use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::ParamVector;
use crate::error::{Error, Result};

use super::toys::ToyGan;

/// Minibatch of `(latent index, data index)` pairs.
pub type Batch = [(usize, usize)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Discriminator first, generator at the updated discriminator.
    Alt,
    /// Both players from the same iterate.
    Sml,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Alt => "alt",
            Mode::Sml => "sml",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alt" => Ok(Mode::Alt),
            "sml" => Ok(Mode::Sml),
            other => Err(Error::invalid(format!("unknown update mode `{other}`"))),
        }
    }
}

pub fn full_gradients(problem: &dyn ToyGan, theta: &[f64], omega: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (mut gt, mut gw) = (vec![0.0; problem.dim_theta()], vec![0.0; problem.dim_omega()]);
    problem.gradients_into(theta, omega, &mut gt, &mut gw);
    (gt, gw)
}

fn check_batch(problem: &dyn ToyGan, batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("minibatch"));
    }
    for &(i, j) in batch {
        if i >= problem.n_latent() {
            return Err(Error::IndexOutOfRange { index: i, len: problem.n_latent() });
        }
        if j >= problem.n_data() {
            return Err(Error::IndexOutOfRange { index: j, len: problem.n_data() });
        }
    }
    Ok(())
}

pub(crate) fn batch_gradients_into(
    problem: &dyn ToyGan,
    theta: &[f64],
    omega: &[f64],
    batch: &Batch,
    gt: &mut [f64],
    gw: &mut [f64],
    scratch: &mut (Vec<f64>, Vec<f64>),
) {
    gt.fill(0.0);
    gw.fill(0.0);
    for &(i, j) in batch {
        problem.pair_gradients(i, j, theta, omega, &mut scratch.0, &mut scratch.1);
        gt.iter_mut().zip(&scratch.0).for_each(|(a, b)| *a += b);
        gw.iter_mut().zip(&scratch.1).for_each(|(a, b)| *a += b);
    }
    let n = batch.len() as f64;
    gt.iter_mut().chain(gw.iter_mut()).for_each(|v| *v /= n);
}

/// Batch averages `(g_θ^ℬ, g_ω^ℬ)` of the per-pair gradients.
pub fn minibatch_gradients(problem: &dyn ToyGan, theta: &[f64], omega: &[f64], batch: &Batch) -> Result<(Vec<f64>, Vec<f64>)> {
    check_batch(problem, batch)?;
    let (mut gt, mut gw) = (vec![0.0; problem.dim_theta()], vec![0.0; problem.dim_omega()]);
    let mut scratch = (gt.clone(), gw.clone());
    batch_gradients_into(problem, theta, omega, batch, &mut gt, &mut gw, &mut scratch);
    Ok((gt, gw))
}

/// `B` pairs drawn independently and uniformly, with replacement.
pub fn sample_batch<R: Rng + ?Sized>(problem: &dyn ToyGan, size: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let (n, m) = (problem.n_latent(), problem.n_data());
    (0..size).map(|_| (rng.random_range(0..n), rng.random_range(0..m))).collect()
}

pub(crate) fn fill_batch<R: Rng + ?Sized>(problem: &dyn ToyGan, rng: &mut R, out: &mut [(usize, usize)]) {
    let (n, m) = (problem.n_latent(), problem.n_data());
    for p in out.iter_mut() {
        *p = (rng.random_range(0..n), rng.random_range(0..m));
    }
}

/// Population covariances `(Σ_θ, Σ_ω)` of the per-pair gradients.
pub fn gradient_covariances(problem: &dyn ToyGan, theta: &[f64], omega: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let (mut st, mut sw) = (
        DMatrix::zeros(problem.dim_theta(), problem.dim_theta()),
        DMatrix::zeros(problem.dim_omega(), problem.dim_omega()),
    );
    problem.covariances_into(theta, omega, &mut st, &mut sw);
    (st, sw)
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub theta: ParamVector,
    pub omega: ParamVector,
    pub iteration: u64,
    pub rng: ChaCha8Rng,
}

impl PartialEq for TrainState {
    fn eq(&self, other: &Self) -> bool {
        self.theta == other.theta && self.omega == other.omega && self.iteration == other.iteration
    }
}

impl TrainState {
    pub fn new(theta: Vec<f64>, omega: Vec<f64>, seed: u64) -> Result<Self> {
        let state = TrainState {
            theta: ParamVector(theta),
            omega: ParamVector(omega),
            iteration: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        state.check()?;
        Ok(state)
    }

    fn check(&self) -> Result<()> {
        if !self.theta.is_finite() || !self.omega.is_finite() {
            return Err(Error::NonFinite(format!("training state at iteration {}", self.iteration)));
        }
        Ok(())
    }

    fn check_dims(&self, problem: &dyn ToyGan) -> Result<()> {
        if self.theta.len() != problem.dim_theta() {
            return Err(Error::shape("generator parameters", problem.dim_theta(), self.theta.len()));
        }
        if self.omega.len() != problem.dim_omega() {
            return Err(Error::shape("discriminator parameters", problem.dim_omega(), self.omega.len()));
        }
        Ok(())
    }
}

/// `ω ← ω + η g_ω^ℬ(θ, ω)`, then `θ ← θ − η g_θ^ℬ̄(θ, ω_new)`.
pub fn alt_step(problem: &dyn ToyGan, state: &TrainState, eta: f64, batch: &Batch, batch_bar: &Batch) -> Result<TrainState> {
    state.check_dims(problem)?;
    let (_, gw) = minibatch_gradients(problem, &state.theta, &state.omega, batch)?;
    let mut next = state.clone();
    next.omega.iter_mut().zip(&gw).for_each(|(w, g)| *w += eta * g);
    let (gt, _) = minibatch_gradients(problem, &next.theta, &next.omega, batch_bar)?;
    next.theta.iter_mut().zip(&gt).for_each(|(t, g)| *t -= eta * g);
    next.iteration += 1;
    next.check()?;
    Ok(next)
}

/// `(θ, ω) ← (θ − η g_θ^ℬ, ω + η g_ω^ℬ)` from the same iterate.
pub fn sml_step(problem: &dyn ToyGan, state: &TrainState, eta: f64, batch: &Batch) -> Result<TrainState> {
    state.check_dims(problem)?;
    let (gt, gw) = minibatch_gradients(problem, &state.theta, &state.omega, batch)?;
    let mut next = state.clone();
    next.theta.iter_mut().zip(&gt).for_each(|(t, g)| *t -= eta * g);
    next.omega.iter_mut().zip(&gw).for_each(|(w, g)| *w += eta * g);
    next.iteration += 1;
    next.check()?;
    Ok(next)
}

/// One step drawing its batches from the state's own stream.
pub fn train_step(problem: &dyn ToyGan, state: &TrainState, eta: f64, batch_size: usize, mode: Mode) -> Result<TrainState> {
    let mut rng = state.rng.clone();
    let b = sample_batch(problem, batch_size, &mut rng);
    let mut next = match mode {
        Mode::Sml => sml_step(problem, state, eta, &b)?,
        Mode::Alt => {
            let b_bar = sample_batch(problem, batch_size, &mut rng);
            alt_step(problem, state, eta, &b, &b_bar)?
        }
    };
    next.rng = rng;
    Ok(next)
}

/// In-place variant used by the Monte Carlo loops.
pub(crate) struct DiscreteStepper<'p> {
    problem: &'p dyn ToyGan,
    batch: Vec<(usize, usize)>,
    gt: Vec<f64>,
    gw: Vec<f64>,
    scratch: (Vec<f64>, Vec<f64>),
}

impl<'p> DiscreteStepper<'p> {
    pub(crate) fn new(problem: &'p dyn ToyGan, batch_size: usize) -> Self {
        let (dt, dw) = (problem.dim_theta(), problem.dim_omega());
        DiscreteStepper {
            problem,
            batch: vec![(0, 0); batch_size],
            gt: vec![0.0; dt],
            gw: vec![0.0; dw],
            scratch: (vec![0.0; dt], vec![0.0; dw]),
        }
    }

    /// `state = [θ, ω]`.
    pub(crate) fn step<R: Rng + ?Sized>(&mut self, state: &mut [f64], eta: f64, mode: Mode, rng: &mut R) {
        let p = self.problem;
        let (theta, omega) = state.split_at_mut(p.dim_theta());
        fill_batch(p, rng, &mut self.batch);
        batch_gradients_into(p, theta, omega, &self.batch, &mut self.gt, &mut self.gw, &mut self.scratch);
        match mode {
            Mode::Sml => {
                theta.iter_mut().zip(&self.gt).for_each(|(t, g)| *t -= eta * g);
                omega.iter_mut().zip(&self.gw).for_each(|(w, g)| *w += eta * g);
            }
            Mode::Alt => {
                omega.iter_mut().zip(&self.gw).for_each(|(w, g)| *w += eta * g);
                fill_batch(p, rng, &mut self.batch);
                batch_gradients_into(p, theta, omega, &self.batch, &mut self.gt, &mut self.gw, &mut self.scratch);
                theta.iter_mut().zip(&self.gt).for_each(|(t, g)| *t -= eta * g);
            }
        }
    }
}
