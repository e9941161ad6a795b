//! Comparison models: BG/NBD and a discrete log-logistic hazard.

pub mod bgnbd;
pub mod loglogistic;
pub mod optim;

pub use bgnbd::{
    bgnbd_daily_counts, bgnbd_fit, bgnbd_loglik, bgnbd_simulate, bgnbd_total_loglik, rfm_from_panel, BgnbdFit,
    BgnbdParams, BgnbdSimulation, RfmSummary,
};
pub use loglogistic::{
    baseline_logit, loglogistic_fit, loglogistic_hazard, loglogistic_simulate, loglogistic_survival, EventWindow,
    Interval, LogLogisticFit, LogLogisticModel, LogLogisticParams, LogLogisticSpec,
};
