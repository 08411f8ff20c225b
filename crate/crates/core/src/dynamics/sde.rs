use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{block_diag, psd_sqrt};

use super::discrete::Mode;
use super::toys::{Jacobians, ToyGan};

/// `β = 2B/η`.
pub fn noise_scale(batch_size: usize, eta: f64) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid(format!("learning rate must be positive, got {eta}")));
    }
    Ok(2.0 * batch_size as f64 / eta)
}

/// Coefficients of the continuous-time approximation at one state.
#[derive(Clone, Debug, PartialEq)]
pub struct SdeCoefficients {
    pub mode: Mode,
    pub eta: f64,
    pub beta: f64,
    /// `b₀ = (−g_θ, g_ω)`.
    pub b0: Vec<f64>,
    /// `b₁` from the matrix product
    /// `½ [[∇_θg_θ, −∇_ωg_θ], [−∇_θg_ω, −∇_ωg_ω]] (−g_θ, g_ω)`.
    pub b1_product: Vec<f64>,
    /// `b₁` from `−½ ∇b₀ b₀ − (∇_ωg_θ g_ω, 0)`.
    pub b1_correction: Vec<f64>,
    /// `b₀` (SML) or `b₀ + η b₁` (ALT).
    pub drift: Vec<f64>,
    /// `√(2/β) diag(Σ_θ^{1/2}, Σ_ω^{1/2})`.
    pub sigma: DMatrix<f64>,
}

fn matvec_add(out: &mut [f64], m: &DMatrix<f64>, v: &[f64], s: f64) {
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, vc) in v.iter().enumerate() {
            acc += m[(r, c)] * vc;
        }
        *o += s * acc;
    }
}

/// `b₁` via the interaction-correction form, written into `out = [θ, ω]`.
pub(crate) fn b1_correction_into(jac: &Jacobians, gt: &[f64], gw: &[f64], out: &mut [f64]) {
    let (ot, ow) = out.split_at_mut(gt.len());
    // ∇b₀ b₀ = (∇_θg_θ g_θ − ∇_ωg_θ g_ω, −∇_θg_ω g_θ + ∇_ωg_ω g_ω)
    ot.fill(0.0);
    ow.fill(0.0);
    matvec_add(ot, &jac.theta_theta, gt, -0.5);
    matvec_add(ot, &jac.theta_omega, gw, 0.5);
    matvec_add(ow, &jac.omega_theta, gt, 0.5);
    matvec_add(ow, &jac.omega_omega, gw, -0.5);
    matvec_add(ot, &jac.theta_omega, gw, -1.0);
}

fn b1_product(jac: &Jacobians, gt: &[f64], gw: &[f64]) -> Vec<f64> {
    let (dt, dw) = (gt.len(), gw.len());
    let mut big = DMatrix::zeros(dt + dw, dt + dw);
    big.view_mut((0, 0), (dt, dt)).copy_from(&jac.theta_theta);
    big.view_mut((0, dt), (dt, dw)).copy_from(&(-&jac.theta_omega));
    big.view_mut((dt, 0), (dw, dt)).copy_from(&(-&jac.omega_theta));
    big.view_mut((dt, dt), (dw, dw)).copy_from(&(-&jac.omega_omega));
    let v = nalgebra::DVector::from_iterator(dt + dw, gt.iter().map(|g| -g).chain(gw.iter().copied()));
    (big * v * 0.5).iter().copied().collect()
}

pub fn sde_coefficients(
    problem: &dyn ToyGan,
    theta: &[f64],
    omega: &[f64],
    eta: f64,
    batch_size: usize,
    mode: Mode,
) -> Result<SdeCoefficients> {
    let beta = noise_scale(batch_size, eta)?;
    let (dt, dw) = (problem.dim_theta(), problem.dim_omega());
    let (mut gt, mut gw) = (vec![0.0; dt], vec![0.0; dw]);
    problem.gradients_into(theta, omega, &mut gt, &mut gw);
    let mut jac = Jacobians::zeros(dt, dw);
    problem.jacobians_into(theta, omega, &mut jac);
    let b0: Vec<f64> = gt.iter().map(|g| -g).chain(gw.iter().copied()).collect();
    let mut b1c = vec![0.0; dt + dw];
    b1_correction_into(&jac, &gt, &gw, &mut b1c);
    let drift = match mode {
        Mode::Sml => b0.clone(),
        Mode::Alt => b0.iter().zip(&b1c).map(|(a, b)| a + eta * b).collect(),
    };
    let (mut st, mut sw) = (DMatrix::zeros(dt, dt), DMatrix::zeros(dw, dw));
    problem.covariances_into(theta, omega, &mut st, &mut sw);
    let sigma = block_diag(&psd_sqrt(&st), &psd_sqrt(&sw)) * (2.0 / beta).sqrt();
    Ok(SdeCoefficients {
        mode,
        eta,
        beta,
        b0,
        b1_product: b1_product(&jac, &gt, &gw),
        b1_correction: b1c,
        drift,
        sigma,
    })
}

/// State-dependent drift and diffusion of an Itô SDE.
pub trait SdeModel {
    fn dim(&self) -> usize;
    fn drift(&mut self, x: &[f64], out: &mut [f64]);
    /// Writes `σ(x) ξ`.
    fn diffuse(&mut self, x: &[f64], xi: &[f64], out: &mut [f64]);
}

/// ALT-SDE or SML-SDE of a toy problem, evaluated without allocation for
/// scalar players.
pub struct ToySde<'p> {
    problem: &'p dyn ToyGan,
    mode: Mode,
    eta: f64,
    noise: f64,
    gt: Vec<f64>,
    gw: Vec<f64>,
    jac: Jacobians,
    st: DMatrix<f64>,
    sw: DMatrix<f64>,
}

impl<'p> ToySde<'p> {
    /// `beta` is the inverse temperature (`2B/η` in the learning setting).
    pub fn new(problem: &'p dyn ToyGan, mode: Mode, eta: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::invalid(format!("noise scale β must be positive, got {beta}")));
        }
        let (dt, dw) = (problem.dim_theta(), problem.dim_omega());
        Ok(ToySde {
            problem,
            mode,
            eta,
            noise: (2.0 / beta).sqrt(),
            gt: vec![0.0; dt],
            gw: vec![0.0; dw],
            jac: Jacobians::zeros(dt, dw),
            st: DMatrix::zeros(dt, dt),
            sw: DMatrix::zeros(dw, dw),
        })
    }
}

fn apply_sqrt(m: &DMatrix<f64>, xi: &[f64], scale: f64, out: &mut [f64]) {
    if m.nrows() == 1 {
        out[0] = scale * m[(0, 0)].max(0.0).sqrt() * xi[0];
        return;
    }
    out.fill(0.0);
    matvec_add(out, &psd_sqrt(m), xi, scale);
}

impl SdeModel for ToySde<'_> {
    fn dim(&self) -> usize {
        self.problem.dim_theta() + self.problem.dim_omega()
    }

    fn drift(&mut self, x: &[f64], out: &mut [f64]) {
        let d = self.problem.dim_theta();
        let (theta, omega) = x.split_at(d);
        self.problem.gradients_into(theta, omega, &mut self.gt, &mut self.gw);
        if self.mode == Mode::Alt {
            self.problem.jacobians_into(theta, omega, &mut self.jac);
            b1_correction_into(&self.jac, &self.gt, &self.gw, out);
            out.iter_mut().for_each(|v| *v *= self.eta);
        } else {
            out.fill(0.0);
        }
        let (ot, ow) = out.split_at_mut(d);
        ot.iter_mut().zip(&self.gt).for_each(|(o, g)| *o -= g);
        ow.iter_mut().zip(&self.gw).for_each(|(o, g)| *o += g);
    }

    fn diffuse(&mut self, x: &[f64], xi: &[f64], out: &mut [f64]) {
        let d = self.problem.dim_theta();
        let (theta, omega) = x.split_at(d);
        self.problem.covariances_into(theta, omega, &mut self.st, &mut self.sw);
        let (xt, xw) = xi.split_at(d);
        let (ot, ow) = out.split_at_mut(d);
        apply_sqrt(&self.st, xt, self.noise, ot);
        apply_sqrt(&self.sw, xw, self.noise, ow);
    }
}

/// Drift and diffusion given as closures; `diffusion` returns `σ(x)`.
pub struct FnSde<B, S> {
    pub dim: usize,
    pub drift: B,
    pub diffusion: S,
}

impl<B, S> SdeModel for FnSde<B, S>
where
    B: FnMut(&[f64]) -> Vec<f64>,
    S: FnMut(&[f64]) -> DMatrix<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn drift(&mut self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&(self.drift)(x));
    }
    fn diffuse(&mut self, x: &[f64], xi: &[f64], out: &mut [f64]) {
        let s = (self.diffusion)(x);
        out.fill(0.0);
        matvec_add(out, &s, xi, 1.0);
    }
}

/// States at `t = 0, dt, 2dt, …`.
#[derive(Clone, Debug, PartialEq)]
pub struct SdePath {
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
}

impl SdePath {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("paths include the initial state")
    }
}

/// Reusable buffers for [`em_advance`].
pub(crate) struct EmScratch {
    b: Vec<f64>,
    xi: Vec<f64>,
    noise: Vec<f64>,
}

impl EmScratch {
    pub(crate) fn new(dim: usize) -> Self {
        EmScratch { b: vec![0.0; dim], xi: vec![0.0; dim], noise: vec![0.0; dim] }
    }
}

/// `steps` Euler–Maruyama steps in place: `x += b dt + σ √dt ξ`. `offset`
/// is the global index of the first step, used in error messages.
pub(crate) fn em_advance<M: SdeModel + ?Sized, R: Rng + ?Sized>(
    model: &mut M,
    x: &mut [f64],
    dt: f64,
    steps: usize,
    offset: usize,
    rng: &mut R,
    s: &mut EmScratch,
) -> Result<()> {
    let sq = dt.sqrt();
    for k in 0..steps {
        model.drift(x, &mut s.b);
        for v in s.xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        model.diffuse(x, &s.xi, &mut s.noise);
        for ((xv, b), n) in x.iter_mut().zip(&s.b).zip(&s.noise) {
            *xv += b * dt + sq * n;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("state at step {}", offset + k + 1)));
        }
    }
    Ok(())
}

/// Euler–Maruyama path up to `horizon` (`⌊horizon/dt⌉` steps).
pub fn euler_maruyama<M: SdeModel + ?Sized, R: Rng + ?Sized>(model: &mut M, init: &[f64], dt: f64, horizon: f64, rng: &mut R) -> Result<SdePath> {
    if !(dt > 0.0) || !(dt <= horizon) {
        return Err(Error::invalid(format!("need 0 < dt <= horizon, got dt = {dt}, horizon = {horizon}")));
    }
    if init.len() != model.dim() {
        return Err(Error::shape("initial state", model.dim(), init.len()));
    }
    let steps = (horizon / dt).round() as usize;
    let mut s = EmScratch::new(init.len());
    let mut x = init.to_vec();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x.clone());
    for k in 0..steps {
        em_advance(model, &mut x, dt, 1, k, rng, &mut s)?;
        states.push(x.clone());
    }
    Ok(SdePath { dt, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::toys::{Bilinear, LinearGenerator, Quadratic};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bilinear_coefficients() {
        let c = sde_coefficients(&Bilinear, &[0.7], &[-0.2], 0.1, 4, Mode::Alt).unwrap();
        assert_eq!(c.b0, vec![0.2, 0.7]);
        assert!((c.b1_correction[0] + 0.35).abs() < 1e-15 && (c.b1_correction[1] + 0.1).abs() < 1e-15);
        assert_eq!(c.b1_product, c.b1_correction);
        assert_eq!(c.sigma, DMatrix::zeros(2, 2));
        assert!((c.drift[0] - (0.2 - 0.035)).abs() < 1e-15);
        let s = sde_coefficients(&Bilinear, &[0.7], &[-0.2], 0.1, 4, Mode::Sml).unwrap();
        assert_eq!(s.drift, s.b0);
    }

    #[test]
    fn beta_from_batch_and_rate() {
        assert_eq!(noise_scale(32, 0.01).unwrap(), 6400.0);
        let p = LinearGenerator::new(vec![1.0, -1.0], vec![1.0, 3.0]).unwrap();
        let c = sde_coefficients(&p, &[0.0], &[0.0], 0.01, 32, Mode::Sml).unwrap();
        // Σ_ω = Var x = 1 at θ = 0
        assert!((c.sigma[(1, 1)] - (2.0f64 / 6400.0).sqrt()).abs() < 1e-15);
        assert!(noise_scale(0, 0.1).is_err() && noise_scale(4, 0.0).is_err());
    }

    #[test]
    fn constant_drift_integrates_exactly() {
        let mut m = FnSde { dim: 2, drift: |_: &[f64]| vec![0.5, -2.0], diffusion: |_: &[f64]| DMatrix::zeros(2, 2) };
        let path = euler_maruyama(&mut m, &[0.0, 0.0], 0.01, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(path.states.len(), 101);
        let t = path.terminal();
        assert!((t[0] - 0.5).abs() < 1e-12 && (t[1] + 2.0).abs() < 1e-12);
        assert!((path.time(100) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brownian_terminal_variance() {
        let reps = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = FnSde { dim: 1, drift: |_: &[f64]| vec![0.0], diffusion: |_: &[f64]| DMatrix::identity(1, 1) };
        let mut s = EmScratch::new(1);
        let xs: Vec<f64> = (0..reps)
            .map(|_| {
                let mut x = [0.0];
                em_advance(&mut m, &mut x, 0.1, 10, 0, &mut rng, &mut s).unwrap();
                x[0] * x[0]
            })
            .collect();
        let (mean, se) = crate::stats::mean_and_stderr(&xs);
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn rotation_conserves_norm_to_first_order() {
        let mut sde = ToySde::new(&Bilinear, Mode::Sml, 0.1, 1.0).unwrap();
        for dt in [1e-3, 5e-4] {
            let path = euler_maruyama(&mut sde, &[1.0, 0.0], dt, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let t = path.terminal();
            // explicit Euler on a rotation grows the radius by (1 + dt²)^{n/2}
            let r = (t[0] * t[0] + t[1] * t[1]).sqrt();
            assert!((r - 1.0).abs() < dt, "dt {dt}: radius {r}");
            assert!((t[0] - 1f64.cos()).abs() < 2.0 * dt && (t[1] - 1f64.sin()).abs() < 2.0 * dt);
        }
    }

    #[test]
    fn toy_sde_matches_coefficients() {
        let p = LinearGenerator::new(vec![0.9, 1.2, -0.1], vec![2.0, 1.0]).unwrap();
        let (t, w) = (0.4, -0.8);
        for mode in [Mode::Alt, Mode::Sml] {
            let c = sde_coefficients(&p, &[t], &[w], 0.05, 8, mode).unwrap();
            let mut sde = ToySde::new(&p, mode, 0.05, c.beta).unwrap();
            let mut b = [0.0; 2];
            sde.drift(&[t, w], &mut b);
            assert!((b[0] - c.drift[0]).abs() < 1e-14 && (b[1] - c.drift[1]).abs() < 1e-14);
            let mut n = [0.0; 2];
            sde.diffuse(&[t, w], &[1.0, 1.0], &mut n);
            assert!((n[0] - c.sigma[(0, 0)]).abs() < 1e-14 && (n[1] - c.sigma[(1, 1)]).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_alt_correction_is_damping() {
        let c = sde_coefficients(&Quadratic::anisotropic(), &[0.6], &[-0.4], 0.1, 2, Mode::Alt).unwrap();
        assert!((c.b1_correction[0] + 0.3).abs() < 1e-15 && (c.b1_correction[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let mut m = FnSde { dim: 1, drift: |x: &[f64]| vec![x[0] * x[0]], diffusion: |_: &[f64]| DMatrix::zeros(1, 1) };
        let err = euler_maruyama(&mut m, &[1.0], 0.5, 100.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref s) if s.contains("step")), "{err}");
        assert!(euler_maruyama(&mut m, &[1.0], 2.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
