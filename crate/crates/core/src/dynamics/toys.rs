use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Jacobians of the gradient fields: `theta_theta = ∇_θ g_θ` (`d_θ × d_θ`),
/// `theta_omega = ∇_ω g_θ` (`d_θ × d_ω`), `omega_theta = ∇_θ g_ω`,
/// `omega_omega = ∇_ω g_ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobians {
    pub theta_theta: DMatrix<f64>,
    pub theta_omega: DMatrix<f64>,
    pub omega_theta: DMatrix<f64>,
    pub omega_omega: DMatrix<f64>,
}

impl Jacobians {
    pub fn zeros(dt: usize, dw: usize) -> Self {
        Jacobians {
            theta_theta: DMatrix::zeros(dt, dt),
            theta_omega: DMatrix::zeros(dt, dw),
            omega_theta: DMatrix::zeros(dw, dt),
            omega_omega: DMatrix::zeros(dw, dw),
        }
    }

    fn fill(&mut self, v: f64) {
        self.theta_theta.fill(v);
        self.theta_omega.fill(v);
        self.omega_theta.fill(v);
        self.omega_omega.fill(v);
    }

    fn add_scaled(&mut self, other: &Jacobians, s: f64) {
        self.theta_theta += &other.theta_theta * s;
        self.theta_omega += &other.theta_omega * s;
        self.omega_theta += &other.omega_theta * s;
        self.omega_omega += &other.omega_omega * s;
    }
}

/// A GAN with enumerable latent samples `z_i` (`i < N`) and data samples
/// `x_j` (`j < M`), objective `Φ(θ, ω) = mean_{i,j} J(D_ω(x_j), D_ω(G_θ(z_i)))`,
/// and closed-form per-pair gradients and Jacobians.
///
/// `g_θ` and `g_ω` are gradients of the objective; the generator descends
/// along `g_θ`, the discriminator ascends along `g_ω`.
pub trait ToyGan: Send + Sync {
    fn name(&self) -> &'static str;
    fn dim_theta(&self) -> usize;
    fn dim_omega(&self) -> usize;
    fn n_latent(&self) -> usize;
    fn n_data(&self) -> usize;

    fn pair_loss(&self, i: usize, j: usize, theta: &[f64], omega: &[f64]) -> f64;

    /// Writes `g_θ^{i,j}` and `g_ω^{i,j}`.
    fn pair_gradients(&self, i: usize, j: usize, theta: &[f64], omega: &[f64], g_theta: &mut [f64], g_omega: &mut [f64]);

    fn pair_jacobians(&self, i: usize, j: usize, theta: &[f64], omega: &[f64], out: &mut Jacobians);

    fn n_pairs(&self) -> usize {
        self.n_latent() * self.n_data()
    }

    fn objective(&self, theta: &[f64], omega: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n_latent() {
            for j in 0..self.n_data() {
                s += self.pair_loss(i, j, theta, omega);
            }
        }
        s / self.n_pairs() as f64
    }

    /// Full gradients (averages over all pairs).
    fn gradients_into(&self, theta: &[f64], omega: &[f64], g_theta: &mut [f64], g_omega: &mut [f64]) {
        let (mut pt, mut pw) = (vec![0.0; self.dim_theta()], vec![0.0; self.dim_omega()]);
        g_theta.fill(0.0);
        g_omega.fill(0.0);
        for i in 0..self.n_latent() {
            for j in 0..self.n_data() {
                self.pair_gradients(i, j, theta, omega, &mut pt, &mut pw);
                g_theta.iter_mut().zip(&pt).for_each(|(a, b)| *a += b);
                g_omega.iter_mut().zip(&pw).for_each(|(a, b)| *a += b);
            }
        }
        let n = self.n_pairs() as f64;
        g_theta.iter_mut().chain(g_omega.iter_mut()).for_each(|v| *v /= n);
    }

    /// Jacobians of the full gradients.
    fn jacobians_into(&self, theta: &[f64], omega: &[f64], out: &mut Jacobians) {
        let mut pair = Jacobians::zeros(self.dim_theta(), self.dim_omega());
        out.fill(0.0);
        let w = 1.0 / self.n_pairs() as f64;
        for i in 0..self.n_latent() {
            for j in 0..self.n_data() {
                self.pair_jacobians(i, j, theta, omega, &mut pair);
                out.add_scaled(&pair, w);
            }
        }
    }

    /// Population covariances of the per-pair gradients, normalized by
    /// `N·M`.
    fn covariances_into(&self, theta: &[f64], omega: &[f64], sigma_theta: &mut DMatrix<f64>, sigma_omega: &mut DMatrix<f64>) {
        let (dt, dw) = (self.dim_theta(), self.dim_omega());
        let (mut mt, mut mw) = (vec![0.0; dt], vec![0.0; dw]);
        self.gradients_into(theta, omega, &mut mt, &mut mw);
        let (mut pt, mut pw) = (vec![0.0; dt], vec![0.0; dw]);
        sigma_theta.fill(0.0);
        sigma_omega.fill(0.0);
        for i in 0..self.n_latent() {
            for j in 0..self.n_data() {
                self.pair_gradients(i, j, theta, omega, &mut pt, &mut pw);
                outer_add(sigma_theta, &pt, &mt);
                outer_add(sigma_omega, &pw, &mw);
            }
        }
        let n = self.n_pairs() as f64;
        *sigma_theta /= n;
        *sigma_omega /= n;
    }
}

/// `acc += (v − mean)(v − mean)ᵀ`.
pub(crate) fn outer_add(acc: &mut DMatrix<f64>, v: &[f64], mean: &[f64]) {
    let n = v.len();
    for r in 0..n {
        let dr = v[r] - mean[r];
        for c in 0..n {
            acc[(r, c)] += dr * (v[c] - mean[c]);
        }
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n)
}

fn nonempty(xs: &[f64], what: &'static str) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Empty(what));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} contain a non-finite value")));
    }
    Ok(())
}

/// `Φ(θ, ω) = θω`, one latent and one data sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Bilinear;

impl ToyGan for Bilinear {
    fn name(&self) -> &'static str {
        "bilinear"
    }
    fn dim_theta(&self) -> usize {
        1
    }
    fn dim_omega(&self) -> usize {
        1
    }
    fn n_latent(&self) -> usize {
        1
    }
    fn n_data(&self) -> usize {
        1
    }
    fn pair_loss(&self, _: usize, _: usize, theta: &[f64], omega: &[f64]) -> f64 {
        theta[0] * omega[0]
    }
    fn pair_gradients(&self, _: usize, _: usize, theta: &[f64], omega: &[f64], gt: &mut [f64], gw: &mut [f64]) {
        gt[0] = omega[0];
        gw[0] = theta[0];
    }
    fn pair_jacobians(&self, _: usize, _: usize, _: &[f64], _: &[f64], out: &mut Jacobians) {
        out.theta_theta[(0, 0)] = 0.0;
        out.theta_omega[(0, 0)] = 1.0;
        out.omega_theta[(0, 0)] = 1.0;
        out.omega_omega[(0, 0)] = 0.0;
    }
}

/// Generator `G_θ(z) = θz`, discriminator `D_ω(x) = ωx`, loss
/// `J(a, b) = a − b`, so `J_{ij} = ω x_j − ω θ z_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGenerator {
    latent: Vec<f64>,
    data: Vec<f64>,
    z_mean: f64,
    z_var: f64,
    x_mean: f64,
    x_var: f64,
}

impl LinearGenerator {
    pub fn new(latent: Vec<f64>, data: Vec<f64>) -> Result<Self> {
        nonempty(&latent, "latent samples")?;
        nonempty(&data, "data samples")?;
        let (z_mean, z_var) = mean_var(&latent);
        let (x_mean, x_var) = mean_var(&data);
        Ok(LinearGenerator { latent, data, z_mean, z_var, x_mean, x_var })
    }

    pub fn latent(&self) -> &[f64] {
        &self.latent
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `θ*` with `g_ω = 0`.
    pub fn equilibrium_theta(&self) -> Option<f64> {
        (self.z_mean != 0.0).then(|| self.x_mean / self.z_mean)
    }
}

impl ToyGan for LinearGenerator {
    fn name(&self) -> &'static str {
        "linear"
    }
    fn dim_theta(&self) -> usize {
        1
    }
    fn dim_omega(&self) -> usize {
        1
    }
    fn n_latent(&self) -> usize {
        self.latent.len()
    }
    fn n_data(&self) -> usize {
        self.data.len()
    }
    fn pair_loss(&self, i: usize, j: usize, theta: &[f64], omega: &[f64]) -> f64 {
        omega[0] * self.data[j] - omega[0] * theta[0] * self.latent[i]
    }
    fn pair_gradients(&self, i: usize, j: usize, theta: &[f64], omega: &[f64], gt: &mut [f64], gw: &mut [f64]) {
        gt[0] = -omega[0] * self.latent[i];
        gw[0] = self.data[j] - theta[0] * self.latent[i];
    }
    fn pair_jacobians(&self, i: usize, _: usize, _: &[f64], _: &[f64], out: &mut Jacobians) {
        out.theta_theta[(0, 0)] = 0.0;
        out.theta_omega[(0, 0)] = -self.latent[i];
        out.omega_theta[(0, 0)] = -self.latent[i];
        out.omega_omega[(0, 0)] = 0.0;
    }

    fn gradients_into(&self, theta: &[f64], omega: &[f64], gt: &mut [f64], gw: &mut [f64]) {
        gt[0] = -omega[0] * self.z_mean;
        gw[0] = self.x_mean - theta[0] * self.z_mean;
    }

    fn jacobians_into(&self, _: &[f64], _: &[f64], out: &mut Jacobians) {
        out.theta_theta[(0, 0)] = 0.0;
        out.theta_omega[(0, 0)] = -self.z_mean;
        out.omega_theta[(0, 0)] = -self.z_mean;
        out.omega_omega[(0, 0)] = 0.0;
    }

    /// Pairs range over the product set, so `Σ_θ = ω² Var z` and
    /// `Σ_ω = Var x + θ² Var z`.
    fn covariances_into(&self, theta: &[f64], omega: &[f64], st: &mut DMatrix<f64>, sw: &mut DMatrix<f64>) {
        st[(0, 0)] = omega[0] * omega[0] * self.z_var;
        sw[(0, 0)] = self.x_var + theta[0] * theta[0] * self.z_var;
    }
}

/// `J_{ij} = ½θ² − ½ω² + a_i θ + c_j ω`: decoupled quadratic players with
/// additive gradient noise of constant covariance `(Var a, Var c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    theta_offsets: Vec<f64>,
    omega_offsets: Vec<f64>,
}

impl Quadratic {
    pub fn new(theta_offsets: Vec<f64>, omega_offsets: Vec<f64>) -> Result<Self> {
        nonempty(&theta_offsets, "generator offsets")?;
        nonempty(&omega_offsets, "discriminator offsets")?;
        Ok(Quadratic { theta_offsets, omega_offsets })
    }

    /// Mean-zero offsets with `Var a = 1`, `Var c = ¼`.
    pub fn anisotropic() -> Self {
        Quadratic { theta_offsets: vec![1.0, -1.0], omega_offsets: vec![0.5, -0.5] }
    }

    /// Offsets `±s` on both players (`Σ_θ = Σ_ω = s²`).
    pub fn isotropic(s: f64) -> Self {
        Quadratic { theta_offsets: vec![s, -s], omega_offsets: vec![s, -s] }
    }

    pub fn noise_variances(&self) -> (f64, f64) {
        (mean_var(&self.theta_offsets).1, mean_var(&self.omega_offsets).1)
    }
}

impl ToyGan for Quadratic {
    fn name(&self) -> &'static str {
        "quadratic"
    }
    fn dim_theta(&self) -> usize {
        1
    }
    fn dim_omega(&self) -> usize {
        1
    }
    fn n_latent(&self) -> usize {
        self.theta_offsets.len()
    }
    fn n_data(&self) -> usize {
        self.omega_offsets.len()
    }
    fn pair_loss(&self, i: usize, j: usize, theta: &[f64], omega: &[f64]) -> f64 {
        let (t, w) = (theta[0], omega[0]);
        0.5 * t * t - 0.5 * w * w + self.theta_offsets[i] * t + self.omega_offsets[j] * w
    }
    fn pair_gradients(&self, i: usize, j: usize, theta: &[f64], omega: &[f64], gt: &mut [f64], gw: &mut [f64]) {
        gt[0] = theta[0] + self.theta_offsets[i];
        gw[0] = -omega[0] + self.omega_offsets[j];
    }
    fn pair_jacobians(&self, _: usize, _: usize, _: &[f64], _: &[f64], out: &mut Jacobians) {
        out.theta_theta[(0, 0)] = 1.0;
        out.theta_omega[(0, 0)] = 0.0;
        out.omega_theta[(0, 0)] = 0.0;
        out.omega_omega[(0, 0)] = -1.0;
    }
}

/// Toy selected by name: `bilinear`, `linear` (latent `{0.95, 1.05}`, data
/// `{1.9, 2.1}`) or `quadratic` (anisotropic offsets).
pub fn toy_by_name(name: &str) -> Result<Box<dyn ToyGan>> {
    match name {
        "bilinear" => Ok(Box::new(Bilinear)),
        "linear" => Ok(Box::new(LinearGenerator::new(vec![0.95, 1.05], vec![1.9, 2.1])?)),
        "quadratic" => Ok(Box::new(Quadratic::anisotropic())),
        other => Err(Error::invalid(format!("unknown toy problem `{other}`"))),
    }
}
