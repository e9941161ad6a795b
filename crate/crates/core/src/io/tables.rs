//! CSV result tables.

use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::inference::{ess, rhat, PosteriorDraws};
use crate::predict::SplitMetrics;
use crate::stats::quantiles;

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a parameter-estimate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterRow {
    pub parameter: String,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

/// Posterior summaries of the coordinates `indices`. Coordinates named
/// `log_*` are reported on the natural scale under the name without the
/// prefix; the convergence diagnostics do not depend on that choice.
pub fn parameter_table(draws: &PosteriorDraws, indices: &[usize]) -> Vec<ParameterRow> {
    indices
        .iter()
        .map(|&k| {
            let name = &draws.names[k];
            let chains = draws.param_chains(k);
            let (label, exp) = match name.rsplit_once('.') {
                Some((head, tail)) if tail.starts_with("log_") => (format!("{head}.{}", &tail[4..]), true),
                None if name.starts_with("log_") => (name[4..].to_string(), true),
                _ => (name.clone(), false),
            };
            let mut all: Vec<f64> = chains
                .iter()
                .flatten()
                .map(|&v| if exp { v.exp() } else { v })
                .collect();
            let q = quantiles(&mut all, &[0.5, 0.025, 0.975]);
            ParameterRow {
                parameter: label,
                median: q[0],
                lower: q[1],
                upper: q[2],
                rhat: rhat(&chains).ok(),
                ess: ess(&chains).ok(),
            }
        })
        .collect()
}

/// Fit statistics of one model, in overall / training / holdout columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRow {
    pub model: String,
    pub overall_mape: f64,
    pub overall_rmse: f64,
    pub training_mape: f64,
    pub training_rmse: f64,
    pub holdout_mape: Option<f64>,
    pub holdout_rmse: Option<f64>,
}

impl FitRow {
    pub fn new(model: &str, m: &SplitMetrics) -> Self {
        Self {
            model: model.to_string(),
            overall_mape: m.overall.mape,
            overall_rmse: m.overall.rmse,
            training_mape: m.training.mape,
            training_rmse: m.training.rmse,
            holdout_mape: m.holdout.map(|h| h.mape),
            holdout_rmse: m.holdout.map(|h| h.rmse),
        }
    }
}

/// Observed and predicted counts for one day.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountRow {
    pub day: u32,
    pub actual: Option<u32>,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub holdout: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::ChainDraws;
    use crate::predict::FitMetrics;

    #[test]
    fn natural_scale_labels_and_csv() {
        let chain = |off: f64| ChainDraws {
            draws: (0..20).flat_map(|i| [i as f64 * 0.1 + off, (i % 5) as f64]).collect(),
            accept_stats: vec![0.8; 20],
            divergent: vec![false; 20],
            n_leapfrog: vec![3; 20],
            step_size: 0.1,
            inv_mass: vec![1.0, 1.0],
        };
        let d = PosteriorDraws {
            names: vec!["cyclic.log_amplitude".into(), "mu".into()],
            chains: vec![chain(0.0), chain(0.05)],
            seed: 1,
        };
        let rows = parameter_table(&d, &[0, 1]);
        assert_eq!(rows[0].parameter, "cyclic.amplitude");
        assert_eq!(rows[1].parameter, "mu");
        assert!(rows[0].lower <= rows[0].median && rows[0].median <= rows[0].upper);
        assert!(rows[0].median > 1.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("parameter,median,lower,upper,rhat,ess\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn fit_row_columns() {
        let m = SplitMetrics {
            overall: FitMetrics { mape: 0.1, rmse: 2.0 },
            training: FitMetrics { mape: 0.05, rmse: 1.0 },
            holdout: None,
        };
        let r = FitRow::new("gppm", &m);
        assert_eq!(r.holdout_mape, None);
        assert_eq!(r.training_rmse, 1.0);
    }
}
