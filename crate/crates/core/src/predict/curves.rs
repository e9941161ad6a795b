use serde::{Deserialize, Serialize};

use crate::error::{GppmError, Result};
use crate::inference::PosteriorDraws;
use crate::model::{GppmModel, GppmParams};
use crate::stats::quantiles;

/// Pointwise posterior median and 95% band of one latent curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub name: String,
    pub grid: Vec<f64>,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CurveSummary {
    /// Summarizes per-draw value vectors that share `grid`.
    pub fn from_samples(name: &str, grid: Vec<f64>, samples: &[Vec<f64>]) -> Result<Self> {
        if samples.is_empty() {
            return Err(GppmError::InvalidInput("no samples to summarize".into()));
        }
        let n = grid.len();
        let mut median = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        for j in 0..n {
            let mut xs: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            let q = quantiles(&mut xs, &[0.5, 0.025, 0.975]);
            median.push(q[0]);
            lower.push(q[1]);
            upper.push(q[2]);
        }
        Ok(Self {
            name: name.to_string(),
            grid,
            median,
            lower,
            upper,
        })
    }
}

/// Posterior summaries of every curve the model carries, in the order
/// long-run, short-run, cyclic, recency, lifetime, purchase number.
pub fn summarize_curves(model: &GppmModel, draws: &PosteriorDraws, max_draws: usize) -> Result<Vec<CurveSummary>> {
    let params: Vec<GppmParams> = draws
        .thinned(max_draws)
        .into_iter()
        .map(|d| model.constrain(d))
        .collect::<Result<_>>()?;
    let first = params
        .first()
        .ok_or_else(|| GppmError::InvalidInput("no posterior draws".into()))?;
    let mut out = Vec::new();
    type Pick = fn(&GppmParams) -> Option<&crate::model::Curve>;
    let picks: [(&str, Pick); 5] = [
        ("long_run", |p| p.long_run.as_ref()),
        ("short_run", |p| p.short_run.as_ref()),
        ("cyclic", |p| p.cyclic.as_ref()),
        ("recency", |p| p.recency.as_ref()),
        ("lifetime", |p| p.lifetime.as_ref()),
    ];
    for (name, pick) in picks {
        if let Some(c) = pick(first) {
            let samples: Vec<Vec<f64>> = params
                .iter()
                .map(|p| pick(p).expect("same structure").values.clone())
                .collect();
            out.push(CurveSummary::from_samples(name, c.grid().to_vec(), &samples)?);
        }
    }
    if model.spec().purchase_number && !first.beta.is_empty() {
        let grid = (1..=first.beta.len()).map(|k| k as f64).collect();
        let samples: Vec<Vec<f64>> = params.iter().map(|p| p.beta.clone()).collect();
        out.push(CurveSummary::from_samples("purchase_number", grid, &samples)?);
    }
    Ok(out)
}
