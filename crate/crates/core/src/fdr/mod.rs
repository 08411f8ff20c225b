//! Fluctuation-dissipation diagnostics, minibatch covariance estimators and
//! the learning-rate scheduler built on them.

mod estimators;
mod relations;
mod scheduler;

pub use estimators::{cov_estimators, CovEstimate};
pub use relations::{
    fdr1_gap, fdr2_gap, fdr_probe, probe_trajectory, Estimate, Fdr1Report, Fdr2Report, ProbeConfig, TrajectorySource, MIN_SAMPLES,
};
pub use scheduler::{
    fdr2_ratio, replay, scheduled_sml_training, scheduler_step, scripted_ratios, ScheduleRow, SchedulerEvent, SchedulerState,
};
