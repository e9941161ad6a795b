use serde::{Deserialize, Serialize};

use crate::error::{GppmError, Result};

fn check(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.is_empty() {
        return Err(GppmError::InvalidInput("empty series".into()));
    }
    if actual.len() != predicted.len() {
        return Err(GppmError::Dimension {
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    Ok(())
}

/// Mean absolute percentage error over the days with a nonzero actual value.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (a, p) in actual.iter().zip(predicted) {
        if *a != 0.0 {
            sum += ((a - p) / a).abs();
            n += 1;
        }
    }
    let skipped = actual.len() - n;
    if skipped > 0 {
        log::info!("mape: excluded {skipped} day(s) with zero actual count");
    }
    if n == 0 {
        return Err(GppmError::InvalidInput("mape: every actual value is zero".into()));
    }
    Ok(sum / n as f64)
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    let ss: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok((ss / actual.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub mape: f64,
    pub rmse: f64,
}

impl FitMetrics {
    pub fn new(actual: &[f64], predicted: &[f64]) -> Result<Self> {
        Ok(Self {
            mape: mape(actual, predicted)?,
            rmse: rmse(actual, predicted)?,
        })
    }
}

/// Metrics over the whole series, the first `train_days` and the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub overall: FitMetrics,
    pub training: FitMetrics,
    pub holdout: Option<FitMetrics>,
}

pub fn split_metrics(actual: &[f64], predicted: &[f64], train_days: usize) -> Result<SplitMetrics> {
    check(actual, predicted)?;
    let k = train_days.min(actual.len());
    if k == 0 {
        return Err(GppmError::InvalidInput("no training days".into()));
    }
    Ok(SplitMetrics {
        overall: FitMetrics::new(actual, predicted)?,
        training: FitMetrics::new(&actual[..k], &predicted[..k])?,
        holdout: (k < actual.len())
            .then(|| FitMetrics::new(&actual[k..], &predicted[k..]))
            .transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert_eq!(mape(&[100.0], &[90.0]).unwrap(), 0.1);
        assert_eq!(rmse(&[100.0], &[90.0]).unwrap(), 10.0);
        assert!((mape(&[50.0, 100.0], &[60.0, 90.0]).unwrap() - 0.15).abs() < 1e-15);
        assert_eq!(rmse(&[50.0, 100.0], &[60.0, 90.0]).unwrap(), 10.0);
        assert_eq!(mape(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn zero_actuals_are_excluded() {
        assert_eq!(mape(&[0.0, 10.0], &[5.0, 12.0]).unwrap(), 0.2);
        assert!(mape(&[0.0], &[1.0]).is_err());
        assert!(mape(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn split_uses_both_sides() {
        let s = split_metrics(&[10.0, 10.0, 20.0], &[11.0, 9.0, 10.0], 2).unwrap();
        assert!((s.training.mape - 0.1).abs() < 1e-15);
        assert_eq!(s.holdout.unwrap().mape, 0.5);
        assert!(split_metrics(&[1.0], &[1.0], 1).unwrap().holdout.is_none());
    }
}
