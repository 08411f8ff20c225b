use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::oracle::ClosedFormSolution;

/// Position-dependent part of the running cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpatialCost {
    /// `f̃(x) = 2π²[−Σ sin(2πxᵢ) + Σ cos²(2πxᵢ)] − 2 Σ sin(2πxᵢ)`, whose
    /// ergodic game has the closed-form solution of [`ClosedFormSolution`].
    SineTestClass,
    Zero,
}

impl SpatialCost {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            SpatialCost::Zero => 0.0,
            SpatialCost::SineTestClass => {
                let (mut s, mut c2) = (0.0, 0.0);
                for &xi in x {
                    let (si, ci) = (2.0 * PI * xi).sin_cos();
                    s += si;
                    c2 += ci * ci;
                }
                2.0 * PI * PI * (-s + c2) - 2.0 * s
            }
        }
    }
}

/// Ergodic game on the unit torus with running cost
/// `L(x, α) = ½|α|² + f̃(x)`, coupling `f(x, m) = ln m` and state dynamics
/// `dX = α dt + dW`.
///
/// Residual convention: with `ε = ½` (the generator of `dX = α dt + dW`),
/// the system solved here is
///
/// ```text
/// ε Δu + H₀(x, ∇u) = ln m + H̄
/// ε Δm − div(m ∇ₚH₀(x, ∇u)) = 0,   ∫u = 0,  m > 0,  ∫m = 1
/// ```
///
/// with `H₀(x, p) = sup_α {α·p − ½|α|²} − f̃(x) = ½|p|² − f̃(x)` and optimal
/// control `α* = ∇u`. This orientation of the second-order terms is the one
/// under which `u = Σ sin(2πxᵢ)`, `m ∝ e^{2u}`, `H̄ = ln ∫e^{2u}` solves the
/// system exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErgodicMfgProblem {
    pub dim: usize,
    pub eps: f64,
    pub cost: SpatialCost,
}

impl ErgodicMfgProblem {
    pub fn sine_test_class(dim: usize) -> Result<Self> {
        Self::new(dim, 0.5, SpatialCost::SineTestClass)
    }

    pub fn new(dim: usize, eps: f64, cost: SpatialCost) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !(eps > 0.0) {
            return Err(Error::invalid("diffusion coefficient must be positive"));
        }
        Ok(ErgodicMfgProblem { dim, eps, cost })
    }

    pub fn spatial_cost(&self, x: &[f64]) -> f64 {
        self.cost.eval(x)
    }

    pub fn lagrangian(&self, x: &[f64], alpha: &[f64]) -> f64 {
        0.5 * alpha.iter().map(|a| a * a).sum::<f64>() + self.spatial_cost(x)
    }

    /// `H₀(x, p) = ½|p|² − f̃(x)`.
    pub fn hamiltonian(&self, x: &[f64], p: &[f64]) -> f64 {
        debug_assert_eq!(p.len(), self.dim);
        0.5 * p.iter().map(|v| v * v).sum::<f64>() - self.spatial_cost(x)
    }

    /// `f(x, m) = ln m`.
    pub fn coupling(&self, m: f64) -> f64 {
        m.ln()
    }

    pub fn closed_form(&self) -> Option<ClosedFormSolution> {
        (self.cost == SpatialCost::SineTestClass && self.eps == 0.5).then(|| ClosedFormSolution::new(self.dim))
    }
}

pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Finite-horizon game on `[0, T] × T^d` with the same running cost, volatility
/// `σ` and drift `b = α* = ∇ₚH₀(x, ∇ₓu) = ∇ₓu`.
#[derive(Clone)]
pub struct TdMfgProblem {
    pub dim: usize,
    pub horizon: f64,
    pub sigma: f64,
    pub cost: SpatialCost,
    pub initial_density: DensityFn,
    pub terminal_value: DensityFn,
}

impl fmt::Debug for TdMfgProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TdMfgProblem")
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("sigma", &self.sigma)
            .field("cost", &self.cost)
            .finish_non_exhaustive()
    }
}

impl TdMfgProblem {
    pub fn new(dim: usize, horizon: f64, sigma: f64, cost: SpatialCost, initial_density: DensityFn) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !(horizon > 0.0) {
            return Err(Error::invalid("horizon must be positive"));
        }
        if !(sigma > 0.0) {
            return Err(Error::invalid("volatility must be positive"));
        }
        let p = TdMfgProblem {
            dim,
            horizon,
            sigma,
            cost,
            initial_density,
            terminal_value: Arc::new(|_| 0.0),
        };
        let mass = p.initial_mass(64);
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("initial density integrates to {mass}, not 1")));
        }
        Ok(p)
    }

    /// The sine test class started from the ergodic equilibrium density.
    pub fn sine_test_class(dim: usize, horizon: f64) -> Result<Self> {
        let oracle = ClosedFormSolution::new(dim);
        Self::new(
            dim,
            horizon,
            1.0,
            SpatialCost::SineTestClass,
            Arc::new(move |x| oracle.m(x)),
        )
    }

    /// Periodic trapezoid rule with `n` points per axis.
    pub fn initial_mass(&self, n: usize) -> f64 {
        let total = n.pow(self.dim as u32);
        let mut x = vec![0.0; self.dim];
        let mut sum = 0.0;
        for idx in 0..total {
            let mut r = idx;
            for xi in x.iter_mut() {
                *xi = (r % n) as f64 / n as f64;
                r /= n;
            }
            sum += (self.initial_density)(&x);
        }
        sum / total as f64
    }

    pub fn diffusion(&self) -> f64 {
        0.5 * self.sigma * self.sigma
    }

    pub fn hamiltonian(&self, x: &[f64], p: &[f64]) -> f64 {
        0.5 * p.iter().map(|v| v * v).sum::<f64>() - self.cost.eval(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hamiltonian_examples() {
        let flat = ErgodicMfgProblem::new(1, 0.5, SpatialCost::Zero).unwrap();
        assert_eq!(flat.hamiltonian(&[0.3], &[0.0]), 0.0);

        let p = ErgodicMfgProblem::sine_test_class(1).unwrap();
        let two_pi_sq = 2.0 * PI * PI;
        assert!((p.spatial_cost(&[0.0]) - two_pi_sq).abs() < 1e-12);
        assert!((p.hamiltonian(&[0.0], &[1.5]) - (0.5 * 2.25 - two_pi_sq)).abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_is_the_conjugate_of_the_lagrangian() {
        let p = ErgodicMfgProblem::sine_test_class(2).unwrap();
        let grid: Vec<f64> = (0..=4000).map(|i| -20.0 + i as f64 * 0.01).collect();
        for (x, mom) in [([0.1, 0.7], [1.3, -2.2]), ([0.45, 0.05], [-0.4, 3.9]), ([0.9, 0.33], [0.0, 0.0])] {
            // the sup separates across coordinates
            let sup: f64 = (0..2)
                .map(|k| grid.iter().map(|&a| a * mom[k] - 0.5 * a * a).fold(f64::NEG_INFINITY, f64::max))
                .sum::<f64>()
                - p.spatial_cost(&x);
            assert!((sup - p.hamiltonian(&x, &mom)).abs() < 1e-6);
            let direct = grid.iter().map(|&a| a * mom[0] - p.lagrangian(&x, &[a, mom[1]])).fold(f64::NEG_INFINITY, f64::max)
                + mom[1] * mom[1];
            assert!((direct - p.hamiltonian(&x, &mom)).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_problems() {
        assert!(ErgodicMfgProblem::new(0, 0.5, SpatialCost::Zero).is_err());
        assert!(ErgodicMfgProblem::new(1, 0.0, SpatialCost::Zero).is_err());
        assert!(TdMfgProblem::new(1, 1.0, 1.0, SpatialCost::Zero, Arc::new(|_| 2.0)).is_err());
        assert!(TdMfgProblem::sine_test_class(1, 1.0).is_ok());
    }
}
