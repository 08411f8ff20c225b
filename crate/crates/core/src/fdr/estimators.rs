use nalgebra::DMatrix;

use crate::dynamics::{minibatch_gradients, Batch, ToyGan};
use crate::error::{Error, Result};

/// Minibatch covariance estimates of the per-pair gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct CovEstimate {
    pub sigma_theta: DMatrix<f64>,
    pub sigma_omega: DMatrix<f64>,
    pub batch_size: usize,
}

impl CovEstimate {
    pub fn trace(&self) -> f64 {
        self.sigma_theta.trace() + self.sigma_omega.trace()
    }
}

/// Sample covariances about the batch mean with denominator `B − 1`.
pub fn cov_estimators(problem: &dyn ToyGan, theta: &[f64], omega: &[f64], batch: &Batch) -> Result<CovEstimate> {
    if batch.len() < 2 {
        return Err(Error::invalid(format!("covariance estimates need a batch of at least 2, got {}", batch.len())));
    }
    // validates indices as a side effect
    let (mt, mw) = minibatch_gradients(problem, theta, omega, batch)?;
    let (dt, dw) = (problem.dim_theta(), problem.dim_omega());
    let (mut st, mut sw) = (DMatrix::zeros(dt, dt), DMatrix::zeros(dw, dw));
    let (mut pt, mut pw) = (vec![0.0; dt], vec![0.0; dw]);
    for &(i, j) in batch {
        problem.pair_gradients(i, j, theta, omega, &mut pt, &mut pw);
        crate::dynamics::outer_add(&mut st, &pt, &mt);
        crate::dynamics::outer_add(&mut sw, &pw, &mw);
    }
    let d = (batch.len() - 1) as f64;
    st /= d;
    sw /= d;
    Ok(CovEstimate { sigma_theta: st, sigma_omega: sw, batch_size: batch.len() })
}
