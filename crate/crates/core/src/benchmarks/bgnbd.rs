//! BG/NBD: gamma-mixed Poisson purchasing with beta-geometric dropout after
//! each repeat purchase.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{GppmError, Result};
use crate::model::{CustomerRecord, SpendPanel};
use crate::par::{self, Parallelism};
use crate::predict::CountBasis;

use super::optim::{nelder_mead, NelderMeadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BgnbdParams {
    pub r: f64,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
}

impl BgnbdParams {
    pub fn new(r: f64, alpha: f64, a: f64, b: f64) -> Result<Self> {
        let p = Self { r, alpha, a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let v = [self.r, self.alpha, self.a, self.b];
        if v.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(())
        } else {
            Err(GppmError::InvalidInput(format!(
                "BG/NBD parameters must be positive and finite, got {self:?}"
            )))
        }
    }

    fn to_log(self) -> [f64; 4] {
        [self.r.ln(), self.alpha.ln(), self.a.ln(), self.b.ln()]
    }

    fn from_log(x: &[f64]) -> Self {
        Self {
            r: x[0].exp(),
            alpha: x[1].exp(),
            a: x[2].exp(),
            b: x[3].exp(),
        }
    }
}

/// Per-customer sufficient statistics, in days since the first purchase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfmSummary {
    /// Repeat purchases.
    pub x: u32,
    /// Time of the last repeat purchase.
    pub t_x: f64,
    /// Observation length.
    pub t_obs: f64,
}

impl RfmSummary {
    pub fn new(x: u32, t_x: f64, t_obs: f64) -> Result<Self> {
        let s = Self { x, t_x, t_obs };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.t_x.is_finite()
            && self.t_obs.is_finite()
            && self.t_x >= 0.0
            && self.t_x <= self.t_obs
            && (self.x > 0 || self.t_x == 0.0);
        if ok {
            Ok(())
        } else {
            Err(GppmError::InvalidInput(format!("invalid RFM summary {self:?}")))
        }
    }
}

/// Summaries of a daily panel: repeats are spend days after the first spend,
/// observation runs to the panel horizon.
pub fn rfm_from_panel(panel: &SpendPanel) -> Vec<RfmSummary> {
    panel
        .customers
        .iter()
        .map(|c| {
            let first = c.first_spend_day;
            let repeats = c.spend_days.range(first + 1..=panel.horizon);
            let x = repeats.clone().count() as u32;
            let last = repeats.last().copied().unwrap_or(first);
            RfmSummary {
                x,
                t_x: (last - first) as f64,
                t_obs: (panel.horizon - first) as f64,
            }
        })
        .collect()
}

/// Individual log-likelihood. `-inf` for summaries outside the support.
pub fn bgnbd_loglik(p: &BgnbdParams, s: &RfmSummary) -> f64 {
    if s.validate().is_err() || p.validate().is_err() {
        return f64::NEG_INFINITY;
    }
    let BgnbdParams { r, alpha, a, b } = *p;
    let x = s.x as f64;
    let a1 = ln_gamma(r + x) - ln_gamma(r) + r * alpha.ln();
    let a2 = ln_gamma(a + b) + ln_gamma(b + x) - ln_gamma(b) - ln_gamma(a + b + x);
    let a3 = -(r + x) * (alpha + s.t_obs).ln();
    if s.x == 0 {
        return a1 + a2 + a3;
    }
    let a4 = a.ln() - (b + x - 1.0).ln() - (r + x) * (alpha + s.t_x).ln();
    let hi = a3.max(a4);
    a1 + a2 + hi + ((a3 - hi).exp() + (a4 - hi).exp()).ln()
}

pub fn bgnbd_total_loglik(p: &BgnbdParams, data: &[RfmSummary]) -> f64 {
    data.iter().map(|s| bgnbd_loglik(p, s)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgnbdFit {
    pub params: BgnbdParams,
    pub loglik: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

const STARTS: [[f64; 4]; 5] = [
    [0.5, 5.0, 1.0, 2.0],
    [0.25, 4.0, 0.8, 2.5],
    [1.0, 10.0, 0.5, 1.0],
    [2.0, 20.0, 2.0, 5.0],
    [0.1, 1.0, 1.5, 10.0],
];

/// Maximum-likelihood fit by Nelder-Mead on log parameters from five starts
/// (plus `init`, when given), followed by one restart from the best point.
pub fn bgnbd_fit(data: &[RfmSummary], init: Option<BgnbdParams>, parallelism: Parallelism) -> Result<BgnbdFit> {
    if data.is_empty() {
        return Err(GppmError::InvalidInput("no customers to fit".into()));
    }
    for s in data {
        s.validate()?;
    }
    let mut warnings = Vec::new();
    let repeaters = data.iter().filter(|s| s.x > 0).count();
    if repeaters == 0 {
        warnings.push("no repeat purchases: a and b are not identified (flat direction)".to_string());
    } else if repeaters < 2 {
        warnings.push(format!("only {repeaters} customer with repeat purchases"));
    }
    let cost = |x: &[f64]| {
        let ll = bgnbd_total_loglik(&BgnbdParams::from_log(x), data);
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    };
    let mut starts: Vec<[f64; 4]> = STARTS
        .iter()
        .map(|s| BgnbdParams::from_log(&s.map(f64::ln)).to_log())
        .collect();
    if let Some(p) = init {
        p.validate()?;
        starts.insert(0, p.to_log());
    }
    let opts = NelderMeadOptions::default();
    let runs = par::map(&starts, parallelism, |s| nelder_mead(&cost, s, &opts));
    let best = runs
        .into_iter()
        .filter(|r| r.value.is_finite())
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| GppmError::NonFinite("BG/NBD likelihood at every start".into()))?;
    let polished = nelder_mead(&cost, &best.x, &opts);
    let best = if polished.value <= best.value { polished } else { best };
    if !best.converged {
        warnings.push(format!(
            "simplex search stopped after {} evaluations before converging",
            best.evaluations
        ));
    }
    let params = BgnbdParams::from_log(&best.x);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(BgnbdFit {
        params,
        loglik: -best.value,
        converged: best.converged,
        warnings,
    })
}

/// Acquisition day and the continuous repeat-purchase times (since the first
/// purchase) of one simulated customer.
fn simulate_customer<R: Rng>(p: &BgnbdParams, t_obs: f64, rng: &mut R) -> Vec<f64> {
    let lambda = Gamma::new(p.r, 1.0 / p.alpha).expect("valid gamma").sample(rng);
    let q: f64 = Beta::new(p.a, p.b).expect("valid beta").sample(rng);
    let mut times = Vec::new();
    if !(lambda > 0.0) {
        return times;
    }
    let wait = Exp::new(lambda).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += wait.sample(rng);
        if t > t_obs {
            break;
        }
        times.push(t);
        if rng.gen::<f64>() < q {
            break;
        }
    }
    times
}

/// Simulated customers with given acquisition days, seeded per customer.
fn simulate_with_days(
    p: &BgnbdParams,
    first_days: &[u32],
    horizon: u32,
    seed: u64,
    parallelism: Parallelism,
) -> Vec<(u32, Vec<f64>)> {
    par::map_range(first_days.len(), parallelism, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let f = first_days[i];
        (f, simulate_customer(p, (horizon - f) as f64, &mut rng))
    })
}

fn to_panel(sims: &[(u32, Vec<f64>)], horizon: u32) -> Result<SpendPanel> {
    let customers = sims
        .iter()
        .enumerate()
        .map(|(i, (f, times))| {
            let mut days: BTreeSet<u32> = times.iter().map(|t| f + t.ceil() as u32).collect();
            days.insert(*f);
            CustomerRecord {
                customer_id: format!("c{:06}", i + 1),
                install_day: *f,
                first_spend_day: *f,
                channel: "all".into(),
                spend_days: days,
            }
        })
        .collect();
    SpendPanel::new(customers, horizon)
}

#[derive(Debug, Clone)]
pub struct BgnbdSimulation {
    pub panel: SpendPanel,
    pub summaries: Vec<RfmSummary>,
}

/// Simulates `n_customers` acquired uniformly over days `1..=acquisition_days`.
/// Purchase times are continuous; a purchase at time `tau` after the first
/// lands on day `first + ceil(tau)`.
pub fn bgnbd_simulate(
    p: &BgnbdParams,
    n_customers: usize,
    acquisition_days: u32,
    horizon: u32,
    seed: u64,
) -> Result<BgnbdSimulation> {
    p.validate()?;
    if acquisition_days == 0 || acquisition_days > horizon {
        return Err(GppmError::InvalidInput(format!(
            "acquisition_days must lie in [1, {horizon}], got {acquisition_days}"
        )));
    }
    let first_days = crate::simulate::acquisition_sampler(n_customers, acquisition_days, seed)?;
    let sims = simulate_with_days(p, &first_days, horizon, seed, Parallelism::default());
    let summaries = sims
        .iter()
        .map(|(f, times)| RfmSummary {
            x: times.len() as u32,
            t_x: times.last().copied().unwrap_or(0.0),
            t_obs: (horizon - f) as f64,
        })
        .collect();
    Ok(BgnbdSimulation {
        panel: to_panel(&sims, horizon)?,
        summaries,
    })
}

/// Median daily counts over days `1..=horizon` from forward simulations of
/// the fitted model, keeping each customer's observed first spend day.
pub fn bgnbd_daily_counts(
    p: &BgnbdParams,
    panel: &SpendPanel,
    horizon: u32,
    replicates: usize,
    basis: CountBasis,
    seed: u64,
    parallelism: Parallelism,
) -> Result<Vec<f64>> {
    p.validate()?;
    if replicates == 0 {
        return Err(GppmError::InvalidInput("replicates must be >= 1".into()));
    }
    let first_days: Vec<u32> = panel.customers.iter().map(|c| c.first_spend_day).collect();
    let mut samples = Vec::with_capacity(replicates);
    for k in 0..replicates {
        let sims = simulate_with_days(p, &first_days, horizon, seed.wrapping_add(k as u64), parallelism);
        let sim = to_panel(&sims, horizon)?;
        samples.push(crate::predict::actual_counts(&sim, basis));
    }
    Ok((0..horizon as usize)
        .map(|t| {
            let mut day: Vec<f64> = samples.iter().map(|s| s[t] as f64).collect();
            crate::stats::quantiles(&mut day, &[0.5])[0]
        })
        .collect())
}
