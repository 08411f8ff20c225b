//! Numerical laboratory for adversarial training.
//!
//! The crate has three halves that share one small autodiff engine:
//!
//! * [`mfg`] solves ergodic and time-dependent mean-field games with two
//!   adversarially trained networks (value function `u` and density `m`),
//!   using exact input derivatives propagated through the networks
//!   ([`autodiff`]).
//! * [`gan`], [`dynamics`] and [`fdr`] study GAN training itself: the
//!   vanilla minimax value on finite grids, alternating and simultaneous
//!   stochastic updates, their SDE approximations, weak-error measurement
//!   and fluctuation-dissipation diagnostics with a learning-rate scheduler.
//!
//! Data-parallel loops (replicas, batches, evaluation grids) go through
//! [`par`], which falls back to sequential execution when the `parallel`
//! feature is disabled. Results never depend on the thread count.

pub mod autodiff;
pub mod dynamics;
pub mod error;
pub mod fdr;
pub mod gan;
pub mod linalg;
pub mod mfg;
pub mod par;
pub mod stats;

pub use error::{Error, Result};
