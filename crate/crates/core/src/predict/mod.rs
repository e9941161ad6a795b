//! Posterior-predictive spend counts, component muting, curve forecasts,
//! expanding-window event detection and fit metrics.

mod curves;
mod events;
mod forecast;
mod holdout;
mod metrics;
mod predictive;

use serde::{Deserialize, Serialize};

pub use curves::{summarize_curves, CurveSummary};
pub use events::{detect_events, local_max_near, EventCurves, EventFit, MIN_FIT_WINDOW};
pub use forecast::{forecast_components, ComponentForecast, ForecastMode};
pub use holdout::{gppm_holdout_forecast, holdout_split, HoldoutSplit};
pub use metrics::{mape, rmse, split_metrics, FitMetrics, SplitMetrics};
pub use predictive::{
    actual_counts, posterior_predictive, CountBasis, DailyCounts, Heterogeneity, PredictConfig, PredictiveCounts,
};

/// Components replaced by their time-mean during simulation: zero for the
/// identified curves and purchase-number effects, `mu` for the long-run curve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuteMask {
    pub long_run: bool,
    pub short_run: bool,
    pub cyclic: bool,
    pub recency: bool,
    pub lifetime: bool,
    pub purchase_number: bool,
}

impl MuteMask {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        Self {
            long_run: true,
            short_run: true,
            cyclic: true,
            recency: true,
            lifetime: true,
            purchase_number: true,
        }
    }

    /// Every calendar-time component.
    pub fn calendar() -> Self {
        Self {
            long_run: true,
            short_run: true,
            cyclic: true,
            ..Self::default()
        }
    }
}
