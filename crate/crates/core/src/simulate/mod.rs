//! Synthetic spend panels with known latent curves.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GppmError, Result};
use crate::gp::MeanFunction;
use crate::model::{simulate_spends, CustomerRecord, SpendPanel};
use crate::par::{self, Parallelism};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CyclicLevel {
    Nocyc,
    Weakcyc,
    Strongcyc,
}

impl CyclicLevel {
    /// Amplitude of the weekly sine.
    pub fn theta(self) -> f64 {
        match self {
            CyclicLevel::Nocyc => 0.0,
            CyclicLevel::Weakcyc => 0.15,
            CyclicLevel::Strongcyc => 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalendarLevel {
    Nocal,
    NonlinDeccal,
    Peakcal,
}

/// A recency or lifetime truth curve over inputs `1, 2, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TruthCurve {
    Mean {
        mean: MeanFunction,
    },
    /// Explicit values from input 1; inputs past the end reuse the last value.
    Values {
        values: Vec<f64>,
    },
}

impl TruthCurve {
    pub fn at(&self, x: u32) -> f64 {
        match self {
            TruthCurve::Mean { mean } => mean.at(x as f64).unwrap_or(0.0),
            TruthCurve::Values { values } => values
                .get((x as usize).saturating_sub(1))
                .or(values.last())
                .copied()
                .unwrap_or(0.0),
        }
    }
}

/// A one-day additive propensity shock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub day: u32,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimDesign {
    pub cyclic_level: CyclicLevel,
    pub calendar_level: CalendarLevel,
    pub n_customers: usize,
    pub horizon: u32,
    pub acquisition_window: u32,
    pub base_propensity: f64,
    pub sigma_delta: f64,
    pub recency: TruthCurve,
    pub lifetime: TruthCurve,
    /// Multiplies the peak calendar effect.
    pub peak_scale: f64,
    pub spikes: Vec<Spike>,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl Default for SimDesign {
    fn default() -> Self {
        Self {
            cyclic_level: CyclicLevel::Nocyc,
            calendar_level: CalendarLevel::Nocal,
            n_customers: 1000,
            horizon: 100,
            acquisition_window: 30,
            base_propensity: -2.0,
            sigma_delta: 0.8,
            recency: TruthCurve::Mean {
                mean: MeanFunction::PowerDecay {
                    scale: 0.5,
                    exponent: 0.5,
                },
            },
            lifetime: TruthCurve::Mean {
                mean: MeanFunction::PowerDecay {
                    scale: 0.3,
                    exponent: 0.4,
                },
            },
            peak_scale: 1.0,
            spikes: Vec::new(),
            seed: 1,
            parallelism: Parallelism::default(),
        }
    }
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GppmError::InvalidInput(m));
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        if self.acquisition_window == 0 || self.acquisition_window > self.horizon {
            return bad(format!("acquisition_window must lie in [1, {}]", self.horizon));
        }
        if !(self.sigma_delta >= 0.0) || !self.base_propensity.is_finite() || !self.peak_scale.is_finite() {
            return bad("sigma_delta, base_propensity and peak_scale must be finite, sigma_delta >= 0".into());
        }
        if let Some(s) = self
            .spikes
            .iter()
            .find(|s| s.day == 0 || s.day > self.horizon || !s.size.is_finite())
        {
            return bad(format!("spike on day {} outside the horizon", s.day));
        }
        Ok(())
    }

    /// Calendar trend on day `t`, without the cyclic part or spikes.
    pub fn calendar_trend(&self, t: u32) -> f64 {
        match self.calendar_level {
            CalendarLevel::Nocal => 0.0,
            CalendarLevel::NonlinDeccal => nonlinear_decline(t),
            CalendarLevel::Peakcal => self.peak_scale * peak(t),
        }
    }

    pub fn cyclic(&self, t: u32) -> f64 {
        self.cyclic_level.theta() * (2.0 * PI * t as f64 / 7.0).sin()
    }

    pub fn spike(&self, t: u32) -> f64 {
        self.spikes.iter().filter(|s| s.day == t).map(|s| s.size).sum()
    }
}

/// `-0.2 t^0.3`.
pub fn nonlinear_decline(t: u32) -> f64 {
    -0.2 * (t as f64).powf(0.3)
}

/// Piecewise peak: flat, linear ramp up over days 21-40, ramp down over days
/// 41-50, flat again.
pub fn peak(t: u32) -> f64 {
    let t = t as f64;
    if t <= 20.0 {
        0.0
    } else if t <= 40.0 {
        0.5 * (t - 20.0)
    } else if t <= 50.0 {
        0.1 * (50.0 - t)
    } else {
        0.0
    }
}

/// The latent curves used to generate a panel, each over its own grid
/// starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub calendar_trend: Vec<f64>,
    pub cyclic: Vec<f64>,
    pub spikes: Vec<f64>,
    pub recency: Vec<f64>,
    pub lifetime: Vec<f64>,
    pub delta: Vec<f64>,
    pub base_propensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub panel: SpendPanel,
    pub truth: GroundTruth,
}

/// First-spend days drawn uniformly from `1..=window`.
pub fn acquisition_sampler(n: usize, window: u32, seed: u64) -> Result<Vec<u32>> {
    if window == 0 {
        return Err(GppmError::InvalidInput("acquisition window must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| rng.gen_range(1..=window)).collect())
}

/// Simulates the design. Customer `i` draws from ChaCha stream `i + 1` of the
/// seed, so the output does not depend on thread scheduling.
pub fn gppm_simulate(d: &SimDesign) -> Result<Simulation> {
    d.validate()?;
    let h = d.horizon;
    let firsts = acquisition_sampler(d.n_customers, d.acquisition_window, d.seed)?;
    let calendar: Vec<f64> = (1..=h)
        .map(|t| d.base_propensity + d.calendar_trend(t) + d.cyclic(t) + d.spike(t))
        .collect();
    let recency: Vec<f64> = (1..=h).map(|r| d.recency.at(r)).collect();
    let lifetime: Vec<f64> = (1..=h).map(|l| d.lifetime.at(l)).collect();
    let sims = par::map_range(d.n_customers, d.parallelism, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
        rng.set_stream(i as u64 + 1);
        let delta = d.sigma_delta * rng.sample::<f64, _>(StandardNormal);
        let first = firsts[i];
        let days = simulate_spends(
            first,
            h,
            |o| delta + calendar[(o.t - 1) as usize] + recency[(o.r - 1) as usize] + lifetime[(o.l - 1) as usize],
            &mut rng,
        );
        (
            CustomerRecord {
                customer_id: format!("c{i:05}"),
                install_day: first,
                first_spend_day: first,
                channel: "organic".into(),
                spend_days: days,
            },
            delta,
        )
    });
    let (customers, delta): (Vec<_>, Vec<_>) = sims.into_iter().unzip();
    Ok(Simulation {
        panel: SpendPanel::new(customers, h)?,
        truth: GroundTruth {
            calendar_trend: (1..=h).map(|t| d.calendar_trend(t)).collect(),
            cyclic: (1..=h).map(|t| d.cyclic(t)).collect(),
            spikes: (1..=h).map(|t| d.spike(t)).collect(),
            recency,
            lifetime,
            delta,
            base_propensity: d.base_propensity,
        },
    })
}
