//! Discrete ALT/SML training on toy GANs, their SDE approximations and
//! weak-error measurement.

mod discrete;
mod sde;
mod toys;
mod weak;

pub(crate) use discrete::DiscreteStepper;
pub use discrete::{
    alt_step, full_gradients, gradient_covariances, minibatch_gradients, sample_batch, sml_step, train_step, Batch, Mode, TrainState,
};
pub(crate) use sde::{em_advance, EmScratch};
pub use sde::{euler_maruyama, noise_scale, sde_coefficients, FnSde, SdeCoefficients, SdeModel, SdePath, ToySde};
pub(crate) use toys::outer_add;
pub use toys::{toy_by_name, Bilinear, Jacobians, LinearGenerator, Quadratic, ToyGan};
pub use weak::{replica_rng, weak_error_table, TestFunction, WeakErrorConfig, WeakErrorRow, WeakErrorTable};
