use std::f64::consts::PI;

use crate::autodiff::InputJet;

const QUADRATURE_POINTS: usize = 10_000;

/// Closed-form solution of the ergodic sine test class:
/// `u*(x) = Σ sin(2πxᵢ)`, `m*(x) = e^{2u*(x)} / Z`, `α* = ∇u*`, `H̄* = ln Z`,
/// with `Z = ∫_{T^d} e^{2u*}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedFormSolution {
    pub dim: usize,
    /// `ln Z`, equal to `H̄*`.
    pub log_z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleValues {
    pub u: f64,
    pub m: f64,
    pub alpha: Vec<f64>,
    pub hbar: f64,
}

/// `∫₀¹ e^{2 sin 2πx} dx` by the periodic trapezoid rule with `n` nodes.
pub fn one_dim_partition(n: usize) -> f64 {
    (0..n).map(|i| (2.0 * (2.0 * PI * i as f64 / n as f64).sin()).exp()).sum::<f64>() / n as f64
}

impl ClosedFormSolution {
    /// `Z` factorizes over coordinates, so one 1-D quadrature suffices.
    pub fn new(dim: usize) -> Self {
        let z1 = one_dim_partition(QUADRATURE_POINTS);
        ClosedFormSolution { dim, log_z: dim as f64 * z1.ln() }
    }

    pub fn hbar(&self) -> f64 {
        self.log_z
    }

    pub fn u(&self, x: &[f64]) -> f64 {
        x.iter().map(|&xi| (2.0 * PI * xi).sin()).sum()
    }

    pub fn m(&self, x: &[f64]) -> f64 {
        (2.0 * self.u(x) - self.log_z).exp()
    }

    pub fn alpha(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&xi| 2.0 * PI * (2.0 * PI * xi).cos()).collect()
    }

    pub fn eval(&self, x: &[f64]) -> OracleValues {
        OracleValues {
            u: self.u(x),
            m: self.m(x),
            alpha: self.alpha(x),
            hbar: self.hbar(),
        }
    }

    /// Exact jet of `u*`.
    pub fn u_jet(&self, x: &[f64]) -> InputJet {
        let d = x.len();
        let mut jet = InputJet {
            out_dim: 1,
            in_dim: d,
            value: vec![self.u(x)],
            grad: Vec::with_capacity(d),
            diag2: Vec::with_capacity(d),
        };
        for &xi in x {
            let (s, c) = (2.0 * PI * xi).sin_cos();
            jet.grad.push(2.0 * PI * c);
            jet.diag2.push(-4.0 * PI * PI * s);
        }
        jet
    }

    /// Exact jet of `m*`: `∂ₖm = 2m ∂ₖu`, `∂ₖ²m = m (2∂ₖ²u + 4(∂ₖu)²)`.
    pub fn m_jet(&self, x: &[f64]) -> InputJet {
        let u = self.u_jet(x);
        let m = self.m(x);
        InputJet {
            out_dim: 1,
            in_dim: x.len(),
            value: vec![m],
            grad: u.grad.iter().map(|g| 2.0 * m * g).collect(),
            diag2: u.grad.iter().zip(&u.diag2).map(|(g, h)| m * (2.0 * h + 4.0 * g * g)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_trig_values() {
        let s = ClosedFormSolution::new(1);
        let v = s.eval(&[0.25]);
        assert!((v.u - 1.0).abs() < 1e-15);
        assert!(v.alpha[0].abs() < 1e-14);
        let s2 = ClosedFormSolution::new(2);
        assert!((s2.u(&[0.25, 0.25]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn hbar_matches_bessel_identity() {
        // ∫₀¹ e^{2 sin 2πx} dx = I₀(2) = Σ_k 1/(k!)²
        let mut i0 = 0.0;
        let mut term = 1.0;
        for k in 0..30 {
            if k > 0 {
                term /= (k * k) as f64;
            }
            i0 += term;
        }
        let s = ClosedFormSolution::new(1);
        assert!((s.hbar() - i0.ln()).abs() < 1e-13);
        assert!((s.hbar() - 0.8239).abs() < 1e-4);
        assert!((ClosedFormSolution::new(4).hbar() - 4.0 * i0.ln()).abs() < 1e-12);
    }

    #[test]
    fn normalization_and_mean_zero() {
        let s = ClosedFormSolution::new(1);
        let n = 512;
        let grid: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let mass: f64 = grid.iter().map(|&x| s.m(&[x])).sum::<f64>() / n as f64;
        let mean_u: f64 = grid.iter().map(|&x| s.u(&[x])).sum::<f64>() / n as f64;
        assert!((mass - 1.0).abs() < 1e-8);
        assert!(mean_u.abs() < 1e-8);
    }

    #[test]
    fn alpha_is_grad_u() {
        let s = ClosedFormSolution::new(3);
        let x = [0.13, 0.58, 0.91];
        let jet = s.u_jet(&x);
        assert_eq!(jet.grad, s.alpha(&x));
        let h = 1e-6;
        for k in 0..3 {
            let mut a = x;
            let mut b = x;
            a[k] += h;
            b[k] -= h;
            assert!(((s.m(&a) - s.m(&b)) / (2.0 * h) - s.m_jet(&x).grad[k]).abs() < 1e-6);
        }
    }
}
