//! The propensity model: spend panels, model configuration, parameter layout
//! and the posterior density.

pub mod layout;
pub mod panel;
pub mod params;
pub mod posterior;
pub mod spec;

pub use layout::{cyclic_phase, CurveBlock, EffectBlock, Layout, ModelStructure};
pub use panel::{
    customer_observations, derive_triples, simulate_spends, CustomerRecord, Observation, ObservationTriple, SpendPanel,
};
pub use params::{bernoulli_logit, softplus, spend_probability, Curve, CustomerIndex, GppmParams};
pub use posterior::GppmModel;
pub use spec::{LogNormal, ModelSpec, Priors, WEEK};
