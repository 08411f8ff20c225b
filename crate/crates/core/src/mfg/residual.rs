//! PDE residuals written once over [`Field`], so the same formulas evaluate
//! on plain floats (diagnostics, oracle checks) and on tape variables
//! (training losses).

use std::ops::{Add, Mul, Sub};

use crate::autodiff::{InputJet, Mlp, ParamVector, Var};
use crate::error::{Error, Result};

use super::problem::ErgodicMfgProblem;

pub trait Field: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Add<f64, Output = Self> + Sub<f64, Output = Self> + Mul<f64, Output = Self> {
    fn ln(self) -> Self;
    fn exp(self) -> Self;
    fn value(self) -> f64;
}

impl Field for f64 {
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn value(self) -> f64 {
        self
    }
}

impl<'t> Field for Var<'t> {
    fn ln(self) -> Self {
        Var::ln(self)
    }
    fn exp(self) -> Self {
        Var::exp(self)
    }
    fn value(self) -> f64 {
        Var::value(self)
    }
}

fn sum<T: Field>(xs: impl IntoIterator<Item = T>) -> T {
    let mut it = xs.into_iter();
    let first = it.next().expect("at least one term");
    it.fold(first, |a, b| a + b)
}

/// Value, spatial gradient and spatial Laplacian of a scalar field at a point.
#[derive(Clone, Debug)]
pub struct SpatialJet<T> {
    pub value: T,
    pub grad: Vec<T>,
    pub laplacian: T,
}

impl SpatialJet<f64> {
    /// Spatial part of a network jet; `spatial` selects the space coordinates.
    pub fn from_input_jet(jet: &InputJet, spatial: std::ops::Range<usize>) -> Self {
        SpatialJet {
            value: jet.value[0],
            grad: spatial.clone().map(|k| jet.grad(0, k)).collect(),
            laplacian: jet.laplacian_over(0, spatial),
        }
    }
}

/// Jet of `m = exp(n − c)` from the jet of `n`: `∂m = m ∂n`,
/// `∂²m = m (∂²n + (∂n)²)`.
pub fn exp_density<T: Field>(n_value: T, n_grad: &[T], n_diag2: &[T], log_norm: f64) -> SpatialJet<T> {
    let m = (n_value - log_norm).exp();
    let grad: Vec<T> = n_grad.iter().map(|&g| m * g).collect();
    let laplacian = m * sum(n_grad.iter().zip(n_diag2).map(|(&g, &h)| h + g * g));
    SpatialJet { value: m, grad, laplacian }
}

/// `½|p|² − f̃`.
pub fn hamiltonian<T: Field>(p: &[T], spatial_cost: f64) -> T {
    sum(p.iter().map(|&v| v * v)) * 0.5 - spatial_cost
}

/// `ε Δu + H₀(x, ∇u) − ln m − H̄`.
pub fn hjb_residual<T: Field>(eps: f64, spatial_cost: f64, u: &SpatialJet<T>, log_m: T, hbar: T) -> T {
    u.laplacian * eps + hamiltonian(&u.grad, spatial_cost) - log_m - hbar
}

/// `ε Δm − div(m ∇u) = ε Δm − (∇m·∇u + m Δu)`.
pub fn fp_residual<T: Field>(eps: f64, m: &SpatialJet<T>, u: &SpatialJet<T>) -> T {
    let transport = sum(m.grad.iter().zip(&u.grad).map(|(&a, &b)| a * b)) + m.value * u.laplacian;
    m.laplacian * eps - transport
}

/// Both ergodic residuals from jets of `u` and `m`.
pub fn ergodic_residuals_from_jets(
    problem: &ErgodicMfgProblem,
    x: &[f64],
    u: &SpatialJet<f64>,
    m: &SpatialJet<f64>,
    hbar: f64,
) -> Result<(f64, f64)> {
    if !(m.value > 0.0) {
        return Err(Error::NonPositiveDensity { value: m.value, at: x.to_vec() });
    }
    let hjb = hjb_residual(problem.eps, problem.spatial_cost(x), u, m.value.ln(), hbar);
    let fp = fp_residual(problem.eps, m, u);
    Ok((hjb, fp))
}

/// Ergodic residuals of network approximations. `m_net` parameterizes
/// `m = exp(n − log_norm)`, and its first extra scalar is `H̄`.
pub fn ergodic_residuals(
    problem: &ErgodicMfgProblem,
    u_net: &Mlp,
    u_params: &ParamVector,
    m_net: &Mlp,
    m_params: &ParamVector,
    log_norm: f64,
    x: &[f64],
) -> Result<(f64, f64)> {
    let u = SpatialJet::from_input_jet(&u_net.jet(u_params, x)?, 0..x.len());
    let n = m_net.jet(m_params, x)?;
    let m = exp_density(n.value[0], &n.grad, &n.diag2, log_norm);
    let hbar = *m_params
        .extras(m_net)
        .first()
        .ok_or_else(|| Error::invalid("density network carries no H̄ scalar"))?;
    ergodic_residuals_from_jets(problem, x, &u, &m, hbar)
}
