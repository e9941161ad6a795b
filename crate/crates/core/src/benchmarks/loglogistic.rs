//! Discrete log-logistic hazard of the next spend as a function of recency,
//! with customer, channel and purchase-number effects and optional calendar
//! event-window indicators, all additive on the logit of the hazard.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GppmError, Result};
use crate::inference::{hmc_sample, HmcConfig, LogDensity, PosteriorDraws};
use crate::model::{derive_triples, simulate_spends, softplus, spend_probability, SpendPanel};
use crate::par::{self, Parallelism};
use crate::predict::{actual_counts, CountBasis};

/// Logit of the discrete hazard `(S(t-1) - S(t)) / S(t-1)` for the survival
/// function `S(t) = 1 / (1 + (t/scale)^shape)`, with its derivatives with
/// respect to `ln shape` and `ln scale`.
pub fn baseline_logit(t: u32, shape: f64, scale: f64) -> (f64, f64, f64) {
    assert!(t >= 1, "hazard defined from t = 1");
    let k = shape;
    let ln_w = (t as f64).ln() - scale.ln();
    if t == 1 {
        // S(0) = 1, so the hazard is 1 - S(1)
        return (k * ln_w, k * ln_w, -k);
    }
    let ln_ratio = ((t - 1) as f64 / t as f64).ln();
    let c = k * ln_ratio;
    let b = k * (ln_w + ln_ratio);
    let em1 = -c.exp_m1();
    let sig_b = spend_probability(b);
    let value = k * ln_w + em1.ln() - softplus(b);
    let d_k = ln_w + c.exp() / c.exp_m1() * ln_ratio - sig_b * (ln_w + ln_ratio);
    let d_ln_scale = -k * (1.0 - sig_b);
    (value, k * d_k, d_ln_scale)
}

/// Hazard at recency `t` with an additive logit shift.
pub fn loglogistic_hazard(t: u32, shape: f64, scale: f64, shift: f64) -> f64 {
    spend_probability(baseline_logit(t, shape, scale).0 + shift)
}

/// Survival function of the continuous log-logistic distribution.
pub fn loglogistic_survival(t: f64, shape: f64, scale: f64) -> f64 {
    1.0 / (1.0 + (t / scale).powf(shape))
}

/// Inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventWindow {
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogLogisticSpec {
    pub customer_effects: bool,
    pub channel_effects: bool,
    pub purchase_number: bool,
    pub max_purchase_number: u32,
    pub event_windows: Vec<EventWindow>,
}

impl Default for LogLogisticSpec {
    fn default() -> Self {
        Self {
            customer_effects: true,
            channel_effects: true,
            purchase_number: true,
            max_purchase_number: 10,
            event_windows: Vec::new(),
        }
    }
}

impl LogLogisticSpec {
    /// Baseline hazard only.
    pub fn plain() -> Self {
        Self {
            customer_effects: false,
            channel_effects: false,
            purchase_number: false,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.purchase_number && self.max_purchase_number < 2 {
            return Err(GppmError::InvalidInput("max_purchase_number must be >= 2".into()));
        }
        for w in &self.event_windows {
            if w.start < 1 || w.end < w.start {
                return Err(GppmError::InvalidInput(format!("bad event window {w:?}")));
            }
        }
        Ok(())
    }
}

/// Constrained parameters of one draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLogisticParams {
    pub shape: f64,
    pub scale: f64,
    /// Purchase numbers `2..=max_purchase_number`.
    pub beta: Vec<f64>,
    /// Channel levels after the reference level.
    pub gamma: Vec<f64>,
    pub event_coefficients: Vec<f64>,
    pub sigma: Option<f64>,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Columns {
    log_shape: usize,
    log_scale: usize,
    beta: Range<usize>,
    gamma: Range<usize>,
    events: Range<usize>,
    log_sigma: Option<usize>,
    u: Range<usize>,
    names: Vec<String>,
}

impl Columns {
    fn new(spec: &LogLogisticSpec, panel: &SpendPanel) -> Self {
        let mut names: Vec<String> = vec!["log_shape".into(), "log_scale".into()];
        let mut block = |labels: Vec<String>| {
            let start = names.len();
            names.extend(labels);
            start..names.len()
        };
        let beta = block(if spec.purchase_number {
            (2..=spec.max_purchase_number).map(|k| format!("beta[{k}]")).collect()
        } else {
            vec![]
        });
        let gamma = block(if spec.channel_effects {
            panel
                .channel_levels
                .iter()
                .skip(1)
                .map(|c| format!("gamma[{c}]"))
                .collect()
        } else {
            vec![]
        });
        let events = block(
            spec.event_windows
                .iter()
                .map(|w| format!("event[{}-{}]", w.start, w.end))
                .collect(),
        );
        let (log_sigma, u) = if spec.customer_effects {
            let s = block(vec!["delta.log_sigma".into()]).start;
            let u = block(
                panel
                    .customers
                    .iter()
                    .map(|c| format!("delta.u[{}]", c.customer_id))
                    .collect(),
            );
            (Some(s), u)
        } else {
            (None, 0..0)
        };
        Self {
            log_shape: 0,
            log_scale: 1,
            beta,
            gamma,
            events,
            log_sigma,
            u,
            names,
        }
    }
}

const COEF_SD: f64 = 2.0;
const LOG_SCALE_PRIOR_MEAN: f64 = 1.945_910_149_055_313_3; // ln 7

/// The log-logistic hazard model as a log density over unconstrained
/// parameters.
#[derive(Debug, Clone)]
pub struct LogLogisticModel {
    spec: LogLogisticSpec,
    cols: Columns,
    /// Observation arrays, customer-major; `offsets[i]..offsets[i+1]` are
    /// customer `i`'s rows.
    offsets: Vec<usize>,
    t: Vec<u32>,
    r: Vec<u32>,
    pn: Vec<u32>,
    y: Vec<bool>,
    channel: Vec<usize>,
    first_spend: Vec<u32>,
    max_recency: u32,
    pub parallelism: Parallelism,
}

const CHUNK: usize = 64;

impl LogLogisticModel {
    pub fn new(panel: &SpendPanel, spec: LogLogisticSpec) -> Result<Self> {
        spec.validate()?;
        if panel.is_empty() {
            return Err(GppmError::InvalidInput("empty panel".into()));
        }
        let cols = Columns::new(&spec, panel);
        let mut offsets = vec![0];
        let (mut t, mut r, mut pn, mut y) = (vec![], vec![], vec![], vec![]);
        for obs in derive_triples(panel) {
            for o in obs {
                t.push(o.triple.t);
                r.push(o.triple.r);
                pn.push(o.triple.purchase_number);
                y.push(o.y);
            }
            offsets.push(t.len());
        }
        let channel = panel
            .customers
            .iter()
            .map(|c| panel.channel_index(&c.channel).expect("channel in vocabulary"))
            .collect();
        Ok(Self {
            max_recency: panel.horizon,
            first_spend: panel.customers.iter().map(|c| c.first_spend_day).collect(),
            spec,
            cols,
            offsets,
            t,
            r,
            pn,
            y,
            channel,
            parallelism: Parallelism::default(),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.cols.names
    }

    pub fn spec(&self) -> &LogLogisticSpec {
        &self.spec
    }

    fn pn_index(&self, pn: u32) -> Option<usize> {
        (self.spec.purchase_number && pn >= 2).then(|| pn.min(self.spec.max_purchase_number) as usize - 2)
    }

    fn channel_col(&self, ch: usize) -> Option<usize> {
        (self.spec.channel_effects && ch >= 1).then(|| self.cols.gamma.start + ch - 1)
    }

    fn event_shift(&self, x: &[f64], t: u32) -> f64 {
        self.spec
            .event_windows
            .iter()
            .zip(self.cols.events.clone())
            .filter(|(w, _)| t >= w.start && t <= w.end)
            .map(|(_, k)| x[k])
            .sum()
    }

    pub fn constrain(&self, x: &[f64]) -> Result<LogLogisticParams> {
        if x.len() != self.dim() {
            return Err(GppmError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let c = &self.cols;
        let sigma = c.log_sigma.map(|k| x[k].exp());
        Ok(LogLogisticParams {
            shape: x[c.log_shape].exp(),
            scale: x[c.log_scale].exp(),
            beta: x[c.beta.clone()].to_vec(),
            gamma: x[c.gamma.clone()].to_vec(),
            event_coefficients: x[c.events.clone()].to_vec(),
            delta: sigma.map_or(vec![], |s| x[c.u.clone()].iter().map(|u| s * u).collect()),
            sigma,
        })
    }

    /// Logit shift of customer `i` on calendar day `t` at purchase number `pn`.
    pub fn shift(&self, p: &LogLogisticParams, i: usize, t: u32, pn: u32) -> f64 {
        let mut s = p.delta.get(i).copied().unwrap_or(0.0);
        if let Some(k) = self.pn_index(pn) {
            s += p.beta[k];
        }
        if let Some(k) = self.channel_col(self.channel[i]) {
            s += p.gamma[k - self.cols.gamma.start];
        }
        for (w, c) in self.spec.event_windows.iter().zip(&p.event_coefficients) {
            if t >= w.start && t <= w.end {
                s += c;
            }
        }
        s
    }
}

struct Partial {
    ll: f64,
    /// Adjoint of the baseline logit, per recency.
    base: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    events: Vec<f64>,
    /// Adjoint of each customer's total shift.
    cust: Vec<f64>,
}

impl LogDensity for LogLogisticModel {
    fn dim(&self) -> usize {
        self.cols.names.len()
    }

    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        if x.len() != self.dim() || grad.len() != self.dim() {
            return Err(GppmError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GppmError::NonFinite("log-logistic parameters".into()));
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let c = &self.cols;
        let (shape, scale) = (x[c.log_shape].exp(), x[c.log_scale].exp());
        let table: Vec<(f64, f64, f64)> = (1..=self.max_recency)
            .map(|t| baseline_logit(t, shape, scale))
            .collect();
        let sigma = c.log_sigma.map_or(0.0, |k| x[k].exp());
        let n_cust = self.offsets.len() - 1;
        let customers: Vec<usize> = (0..n_cust).collect();
        let parts = par::map_chunks(&customers, CHUNK, self.parallelism, |start, chunk| {
            let mut p = Partial {
                ll: 0.0,
                base: vec![0.0; table.len()],
                beta: vec![0.0; c.beta.len()],
                gamma: vec![0.0; c.gamma.len()],
                events: vec![0.0; c.events.len()],
                cust: vec![0.0; chunk.len()],
            };
            for j in 0..chunk.len() {
                let i = start + j;
                let mut fixed = 0.0;
                if self.spec.customer_effects {
                    fixed += sigma * x[c.u.start + i];
                }
                let ch = self.channel_col(self.channel[i]);
                if let Some(k) = ch {
                    fixed += x[k];
                }
                let mut gi = 0.0;
                for k in self.offsets[i]..self.offsets[i + 1] {
                    let r = self.r[k] as usize - 1;
                    let mut eta = table[r].0 + fixed + self.event_shift(x, self.t[k]);
                    let pk = self.pn_index(self.pn[k]);
                    if let Some(b) = pk {
                        eta += x[c.beta.start + b];
                    }
                    let e = (-eta.abs()).exp();
                    let sp = eta.max(0.0) + e.ln_1p();
                    let prob = if eta >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
                    let y = self.y[k];
                    p.ll += if y { eta - sp } else { -sp };
                    let g = if y { 1.0 } else { 0.0 } - prob;
                    p.base[r] += g;
                    if let Some(b) = pk {
                        p.beta[b] += g;
                    }
                    for (w, ew) in self.spec.event_windows.iter().zip(p.events.iter_mut()) {
                        if self.t[k] >= w.start && self.t[k] <= w.end {
                            *ew += g;
                        }
                    }
                    gi += g;
                }
                p.cust[j] = gi;
                if let Some(k) = ch {
                    p.gamma[k - c.gamma.start] += gi;
                }
            }
            p
        });
        let mut ll = 0.0;
        let mut base = vec![0.0; table.len()];
        let mut cust = Vec::with_capacity(n_cust);
        for p in parts {
            ll += p.ll;
            for (a, b) in base.iter_mut().zip(&p.base) {
                *a += b;
            }
            for (k, v) in c.beta.clone().zip(&p.beta) {
                grad[k] += v;
            }
            for (k, v) in c.gamma.clone().zip(&p.gamma) {
                grad[k] += v;
            }
            for (k, v) in c.events.clone().zip(&p.events) {
                grad[k] += v;
            }
            cust.extend(p.cust);
        }
        for (b, (_, dk, ds)) in base.iter().zip(&table) {
            grad[c.log_shape] += b * dk;
            grad[c.log_scale] += b * ds;
        }

        // priors
        let mut lp = 0.0;
        let ls = x[c.log_shape];
        lp -= 0.5 * ls * ls;
        grad[c.log_shape] -= ls;
        let lc = x[c.log_scale] - LOG_SCALE_PRIOR_MEAN;
        lp -= 0.5 * lc * lc;
        grad[c.log_scale] -= lc;
        for k in c.beta.clone().chain(c.gamma.clone()).chain(c.events.clone()) {
            lp -= 0.5 * (x[k] / COEF_SD).powi(2);
            grad[k] -= x[k] / (COEF_SD * COEF_SD);
        }
        if let Some(k) = c.log_sigma {
            let mut sigma_bar = 0.0;
            for (i, ui) in c.u.clone().enumerate() {
                let u = x[ui];
                lp -= 0.5 * u * u;
                grad[ui] += cust[i] * sigma - u;
                sigma_bar += cust[i] * u;
            }
            // half-normal(0, 1) on sigma with the log Jacobian
            lp += -0.5 * sigma * sigma + x[k];
            grad[k] += sigma_bar * sigma - sigma * sigma + 1.0;
        }
        let total = ll + lp;
        if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(GppmError::NonFinite("log-logistic log density".into()));
        }
        Ok(total)
    }
}

#[derive(Debug, Clone)]
pub struct LogLogisticFit {
    pub model: LogLogisticModel,
    pub draws: PosteriorDraws,
}

/// Posterior median and central 95% interval of one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Samples the log-logistic posterior with the shared HMC machinery.
pub fn loglogistic_fit(panel: &SpendPanel, spec: LogLogisticSpec, cfg: &HmcConfig) -> Result<LogLogisticFit> {
    let mut model = LogLogisticModel::new(panel, spec)?;
    model.parallelism = cfg.parallelism;
    let draws = hmc_sample(&model, model.names().to_vec(), cfg, None)?;
    Ok(LogLogisticFit { model, draws })
}

impl LogLogisticFit {
    pub fn constrained(&self, max: usize) -> Result<Vec<LogLogisticParams>> {
        self.draws
            .thinned(max)
            .into_iter()
            .map(|d| self.model.constrain(d))
            .collect()
    }

    fn interval_of(&self, f: impl Fn(&LogLogisticParams) -> f64) -> Result<Interval> {
        let mut v: Vec<f64> = self.constrained(0)?.iter().map(f).collect();
        let q = crate::stats::quantiles(&mut v, &[0.5, 0.025, 0.975]);
        Ok(Interval {
            median: q[0],
            lower: q[1],
            upper: q[2],
        })
    }

    pub fn shape(&self) -> Result<Interval> {
        self.interval_of(|p| p.shape)
    }

    pub fn scale(&self) -> Result<Interval> {
        self.interval_of(|p| p.scale)
    }

    pub fn event_coefficient(&self, w: usize) -> Result<Interval> {
        if w >= self.model.spec.event_windows.len() {
            return Err(GppmError::InvalidInput(format!("no event window {w}")));
        }
        self.interval_of(|p| p.event_coefficients[w])
    }

    /// Median daily counts on days `1..=horizon` from posterior-predictive
    /// simulation of every customer forward from their first spend.
    pub fn daily_counts(
        &self,
        panel: &SpendPanel,
        horizon: u32,
        max_draws: usize,
        basis: CountBasis,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if panel.len() != self.model.first_spend.len() {
            return Err(GppmError::InvalidInput("panel does not match the fitted model".into()));
        }
        let params = self.constrained(max_draws)?;
        if params.is_empty() {
            return Err(GppmError::InvalidInput("no posterior draws".into()));
        }
        let samples = par::map_range(params.len(), self.model.parallelism, |d| {
            let p = &params[d];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            let customers = panel
                .customers
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let mut c = c.clone();
                    c.spend_days = simulate_spends(
                        c.first_spend_day,
                        horizon,
                        |tr| {
                            let r = tr.r;
                            baseline_logit(r, p.shape, p.scale).0 + self.model.shift(p, i, tr.t, tr.purchase_number)
                        },
                        &mut rng,
                    );
                    c
                })
                .collect();
            SpendPanel::new(customers, horizon).map(|sim| actual_counts(&sim, basis))
        });
        let samples: Vec<Vec<u32>> = samples.into_iter().collect::<Result<_>>()?;
        Ok((0..horizon as usize)
            .map(|t| {
                let mut day: Vec<f64> = samples.iter().map(|s| s[t] as f64).collect();
                crate::stats::quantiles(&mut day, &[0.5])[0]
            })
            .collect())
    }
}

/// Simulates a panel whose repeat spends follow the log-logistic hazard with
/// an optional calendar shift.
pub fn loglogistic_simulate(
    shape: f64,
    scale: f64,
    calendar_shift: impl Fn(u32) -> f64 + Sync,
    n_customers: usize,
    acquisition_days: u32,
    horizon: u32,
    seed: u64,
) -> Result<SpendPanel> {
    if !(shape > 0.0 && scale > 0.0) {
        return Err(GppmError::InvalidInput("shape and scale must be positive".into()));
    }
    let first = crate::simulate::acquisition_sampler(n_customers, acquisition_days, seed)?;
    let customers = par::map_range(n_customers, Parallelism::default(), |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let f = first[i];
        crate::model::CustomerRecord {
            customer_id: format!("c{:06}", i + 1),
            install_day: f,
            first_spend_day: f,
            channel: "all".into(),
            spend_days: simulate_spends(
                f,
                horizon,
                |tr| baseline_logit(tr.r, shape, scale).0 + calendar_shift(tr.t),
                &mut rng,
            ),
        }
    });
    SpendPanel::new(customers, horizon)
}
