//! Calendar holdout splits and GPPM forecasts over them.

use crate::error::{GppmError, Result};
use crate::inference::{fit_gppm, GppmFit, HmcConfig};
use crate::model::{ModelSpec, SpendPanel};

use super::{
    actual_counts, posterior_predictive, split_metrics, CountBasis, MuteMask, PredictConfig, PredictiveCounts,
    SplitMetrics,
};

/// A panel cut at `train_days`. `evaluation` keeps the full horizon but only
/// the customers acquired during training, matching the no-acquisition
/// assumption of the forecasts.
#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    pub training: SpendPanel,
    pub evaluation: SpendPanel,
    pub train_days: u32,
}

pub fn holdout_split(panel: &SpendPanel, holdout_days: u32) -> Result<HoldoutSplit> {
    if holdout_days >= panel.horizon {
        return Err(GppmError::InvalidInput(format!(
            "holdout_days {holdout_days} must be smaller than the horizon {}",
            panel.horizon
        )));
    }
    let train_days = panel.horizon - holdout_days;
    let training = panel.truncate(train_days)?;
    if training.is_empty() {
        return Err(GppmError::InvalidInput("no customers acquired during training".into()));
    }
    let evaluation = SpendPanel {
        customers: panel
            .customers
            .iter()
            .filter(|c| c.first_spend_day <= train_days && c.install_day <= train_days)
            .cloned()
            .collect(),
        horizon: panel.horizon,
        channel_levels: panel.channel_levels.clone(),
    };
    Ok(HoldoutSplit {
        training,
        evaluation,
        train_days,
    })
}

impl HoldoutSplit {
    pub fn actual(&self, basis: CountBasis) -> Vec<f64> {
        actual_counts(&self.evaluation, basis)
            .into_iter()
            .map(f64::from)
            .collect()
    }

    /// Metrics of a predicted daily series over the evaluation horizon.
    pub fn metrics(&self, predicted: &[f64], basis: CountBasis) -> Result<SplitMetrics> {
        split_metrics(&self.actual(basis), predicted, self.train_days as usize)
    }
}

/// Fits the model on the training panel and simulates counts through the
/// evaluation horizon.
pub fn gppm_holdout_forecast(
    split: &HoldoutSplit,
    spec: ModelSpec,
    hmc: &HmcConfig,
    predict: &PredictConfig,
) -> Result<(GppmFit, PredictiveCounts)> {
    let fit = fit_gppm(&split.training, spec, hmc)?;
    let cfg = PredictConfig {
        horizon: split.evaluation.horizon,
        ..predict.clone()
    };
    let counts = posterior_predictive(&fit.model, &fit.draws, &split.training, &MuteMask::none(), &cfg)?;
    Ok((fit, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CustomerRecord;

    #[test]
    fn split_drops_late_customers_and_keeps_holdout_spends() {
        let c = |id: &str, first: u32, days: &[u32]| CustomerRecord {
            customer_id: id.into(),
            install_day: first,
            first_spend_day: first,
            channel: "x".into(),
            spend_days: days.iter().copied().collect(),
        };
        let panel = SpendPanel::new(vec![c("a", 1, &[1, 4, 8]), c("b", 7, &[7, 9])], 10).unwrap();
        let s = holdout_split(&panel, 5).unwrap();
        assert_eq!(s.train_days, 5);
        assert_eq!(s.training.len(), 1);
        assert_eq!(s.training.customers[0].spend_days.len(), 2);
        assert_eq!(s.evaluation.len(), 1);
        assert_eq!(
            s.actual(CountBasis::AllSpends),
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]
        );
        assert!(holdout_split(&panel, 10).is_err());
    }
}
