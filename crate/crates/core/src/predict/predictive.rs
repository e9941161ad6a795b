use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GppmError, Result};
use crate::inference::PosteriorDraws;
use crate::model::{cyclic_phase, simulate_spends, GppmModel, SpendPanel};
use crate::par::{self, Parallelism};
use crate::stats::quantiles;

use super::forecast::{forecast_components, ForecastMode};
use super::MuteMask;

/// Source of the customer-level random effects during simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heterogeneity {
    /// Each customer keeps their fitted effect.
    #[default]
    Fitted,
    /// Customer effects are redrawn from the fitted heterogeneity
    /// distribution; channel and cohort effects stay fitted.
    Fresh,
}

/// Which spends enter the daily counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountBasis {
    /// First spends and repeat spends.
    #[default]
    AllSpends,
    /// Repeat spends only; counts are bounded by the risk set.
    RepeatOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    /// Last simulated day; 0 means the fitted horizon.
    pub horizon: u32,
    pub max_draws: usize,
    pub seed: u64,
    pub forecast_mode: ForecastMode,
    pub heterogeneity: Heterogeneity,
    pub count_basis: CountBasis,
    pub parallelism: Parallelism,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            horizon: 0,
            max_draws: 500,
            seed: 1,
            forecast_mode: ForecastMode::Sample,
            heterogeneity: Heterogeneity::Fitted,
            count_basis: CountBasis::AllSpends,
            parallelism: Parallelism::default(),
        }
    }
}

/// Posterior-predictive summary of one day's count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyCounts {
    pub day: u32,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveCounts {
    pub days: Vec<DailyCounts>,
    /// Simulated counts, one vector per retained draw.
    pub samples: Vec<Vec<u32>>,
}

impl PredictiveCounts {
    pub fn medians(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.median).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        let n = self.samples.len() as f64;
        (0..self.days.len())
            .map(|t| self.samples.iter().map(|s| s[t] as f64).sum::<f64>() / n)
            .collect()
    }
}

/// Observed daily counts of `panel` on days `1..=panel.horizon`.
pub fn actual_counts(panel: &SpendPanel, basis: CountBasis) -> Vec<u32> {
    match basis {
        CountBasis::AllSpends => panel.daily_spend_counts(),
        CountBasis::RepeatOnly => panel.daily_repeat_counts(),
    }
}

/// Simulates every customer of the fitted panel forward from their first
/// spend under each retained draw and aggregates daily counts.
///
/// Curve extension and spend simulation use separate random streams, so
/// muting a component never changes the spend draws' random sequence.
pub fn posterior_predictive(
    model: &GppmModel,
    draws: &PosteriorDraws,
    panel: &SpendPanel,
    mask: &MuteMask,
    cfg: &PredictConfig,
) -> Result<PredictiveCounts> {
    let s = model.structure();
    if draws.n_draws() == 0 {
        return Err(GppmError::InvalidInput("no posterior draws".into()));
    }
    if draws.dim() != model.dim() {
        return Err(GppmError::Dimension {
            expected: model.dim(),
            got: draws.dim(),
        });
    }
    if panel.len() != s.n_customers {
        return Err(GppmError::Dimension {
            expected: s.n_customers,
            got: panel.len(),
        });
    }
    let horizon = if cfg.horizon == 0 { s.horizon } else { cfg.horizon };
    let h = horizon as usize;
    let thinned = draws.thinned(cfg.max_draws);
    let results = par::map_range(thinned.len(), cfg.parallelism, |k| -> Result<Vec<u32>> {
        let mut curve_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        curve_rng.set_stream(2 * k as u64);
        let mut spend_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        spend_rng.set_stream(2 * k as u64 + 1);

        let p = model.constrain(thinned[k])?;
        let fc = forecast_components(model, &p, horizon, cfg.forecast_mode, &mut curve_rng)?;
        let values = |c: &Option<crate::gp::GpComponent>, muted: bool| -> Option<Vec<f64>> {
            if muted {
                None
            } else {
                c.as_ref().map(|c| c.values.clone())
            }
        };
        let long = values(&fc.long_run, mask.long_run);
        let short = values(&fc.short_run, mask.short_run);
        let cyc = values(&fc.cyclic, mask.cyclic);
        let calendar: Vec<f64> = (0..h)
            .map(|i| {
                let mut v = long.as_ref().map_or(p.mu, |c| c[i]);
                v += short.as_ref().map_or(0.0, |c| c[i]);
                v += cyc.as_ref().map_or(0.0, |c| c[cyclic_phase(i as u32 + 1)]);
                v
            })
            .collect();
        let rec = values(&fc.recency, mask.recency).unwrap_or_else(|| vec![0.0; h.max(1)]);
        let life = values(&fc.lifetime, mask.lifetime).unwrap_or_else(|| vec![0.0; h.max(1)]);
        let beta: Vec<f64> = if mask.purchase_number {
            Vec::new()
        } else {
            p.beta.clone()
        };

        let mut counts = vec![0u32; h];
        for (i, c) in panel.customers.iter().enumerate() {
            if c.first_spend_day > horizon {
                continue;
            }
            let ci = model.customer_index(i);
            let mut effect = p.customer_effect(&ci);
            if cfg.heterogeneity == Heterogeneity::Fresh {
                if let Some(sd) = p.sigma_delta {
                    let fresh: f64 = spend_rng.sample(StandardNormal);
                    effect += sd * fresh - p.delta[ci.customer];
                }
            }
            let days = simulate_spends(
                c.first_spend_day,
                horizon,
                |o| {
                    let pn = if beta.is_empty() {
                        0.0
                    } else {
                        beta[(o.purchase_number as usize).min(beta.len()) - 1]
                    };
                    effect + calendar[(o.t - 1) as usize] + rec[(o.r - 1) as usize] + life[(o.l - 1) as usize] + pn
                },
                &mut spend_rng,
            );
            for d in days {
                if cfg.count_basis == CountBasis::AllSpends || d != c.first_spend_day {
                    counts[(d - 1) as usize] += 1;
                }
            }
        }
        Ok(counts)
    });
    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;
    let days = (0..h)
        .map(|t| {
            let mut xs: Vec<f64> = samples.iter().map(|s| s[t] as f64).collect();
            let q = quantiles(&mut xs, &[0.5, 0.025, 0.975]);
            DailyCounts {
                day: t as u32 + 1,
                median: q[0],
                lower: q[1],
                upper: q[2],
            }
        })
        .collect();
    Ok(PredictiveCounts { days, samples })
}
