//! Log posterior of the propensity model over the unconstrained parameter
//! vector, with its analytic gradient.
//!
//! Transforms: amplitudes, length-scales, power-decay parameters and
//! random-effect scales are log-transformed; the long-run length-scale is
//! `rho_short + exp(gap)` so `rho_short < rho_long` always holds. All
//! log-Jacobians are folded into the prior terms, and normalizing constants
//! are dropped.

use nalgebra::{DMatrix, DVector};

use crate::error::{GppmError, Result};
use crate::gp::{power_decay, MeanFunction, WhitenedComponent};
use crate::inference::LogDensity;
use crate::kernels::{gram_dlog_length_scale, CyclicKernelParams, KernelSpec, SeKernelParams};
use crate::linalg::{jittered_cholesky, jittered_cholesky_tangent};
use crate::par::{self, Parallelism};

use super::layout::{cyclic_phase, CurveBlock, EffectBlock, Layout, ModelStructure};
use super::panel::{derive_triples, SpendPanel};
use super::params::{bernoulli_logit, Curve, CustomerIndex, GppmParams};
use super::spec::{LogNormal, ModelSpec, WEEK};

const CHUNK: usize = 64;

/// Compact, index-based copy of the risk-set observations.
#[derive(Debug, Clone, Default)]
struct ObsData {
    offsets: Vec<usize>,
    t: Vec<u16>,
    r: Vec<u16>,
    l: Vec<u16>,
    /// `min(purchase_number, K) - 1`.
    pn: Vec<u8>,
    y: Vec<bool>,
}

/// The propensity model bound to one panel.
#[derive(Debug, Clone)]
pub struct GppmModel {
    structure: ModelStructure,
    layout: Layout,
    customers: Vec<CustomerIndex>,
    data: ObsData,
    calendar_grid: Vec<f64>,
    cyclic_grid: Vec<f64>,
    recency_grid: Vec<f64>,
    lifetime_grid: Vec<f64>,
    /// Multiplies the log-likelihood; 1 for the posterior, 0 for the prior.
    pub likelihood_weight: f64,
    pub parallelism: Parallelism,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CurveKind {
    LongRun,
    ShortRun,
    Cyclic,
    Recency,
    Lifetime,
}

/// Gram matrix of `k` over `grid` and its derivative with respect to the log
/// length-scale. Evenly spaced grids are filled from one value per lag.
fn unit_gram(grid: &[f64], k: &KernelSpec) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = grid.len();
    let even = n < 3 || grid.windows(3).all(|w| w[2] - w[1] == w[1] - w[0]);
    if !even {
        return (
            DMatrix::from_fn(n, n, |i, j| k.eval(grid[i], grid[j])),
            gram_dlog_length_scale(grid, k),
        );
    }
    let lags: Vec<f64> = grid.iter().map(|g| g - grid[0]).collect();
    let value: Vec<f64> = lags.iter().map(|&d| k.eval(d, 0.0)).collect();
    let deriv: Vec<f64> = lags
        .iter()
        .map(|&d| gram_dlog_length_scale(&[d, 0.0], k)[(0, 1)])
        .collect();
    (
        DMatrix::from_fn(n, n, |i, j| value[i.abs_diff(j)]),
        DMatrix::from_fn(n, n, |i, j| deriv[i.abs_diff(j)]),
    )
}

/// A curve evaluated at one parameter vector.
struct CurveEval {
    amplitude: f64,
    length_scale: f64,
    /// Unit-amplitude Cholesky factor.
    lc: DMatrix<f64>,
    /// Derivative of `lc` with respect to the log length-scale.
    dlc: DMatrix<f64>,
    z: DVector<f64>,
    /// `amplitude * lc * z`.
    centered: DVector<f64>,
    mean: Vec<f64>,
    lambda: Option<(f64, f64)>,
    /// Raw values, or identified values when `identified`.
    values: Vec<f64>,
    identified: bool,
}

impl GppmModel {
    pub fn new(panel: &SpendPanel, spec: ModelSpec) -> Result<Self> {
        if !(spec.jitter >= 0.0) {
            return Err(GppmError::InvalidInput("jitter must be >= 0".into()));
        }
        if spec.max_purchase_number < 1 || spec.max_purchase_number > 255 {
            return Err(GppmError::InvalidInput("max_purchase_number must be in 1..=255".into()));
        }
        if panel.horizon > u16::MAX as u32 {
            return Err(GppmError::InvalidInput("horizon too long".into()));
        }
        let structure = ModelStructure::from_panel(panel, spec);
        let layout = Layout::new(&structure);
        let customers = panel
            .customers
            .iter()
            .enumerate()
            .map(|(i, c)| CustomerIndex {
                customer: i,
                channel: panel.channel_index(&c.channel).unwrap_or(0),
                first_spend: structure
                    .first_spend_levels
                    .binary_search(&c.first_spend_day)
                    .unwrap_or(0),
                install: structure.install_levels.binary_search(&c.install_day).unwrap_or(0),
            })
            .collect();
        let k = structure.spec.max_purchase_number;
        let mut data = ObsData {
            offsets: vec![0],
            ..Default::default()
        };
        for obs in derive_triples(panel) {
            for o in obs {
                data.t.push(o.triple.t as u16);
                data.r.push(o.triple.r as u16);
                data.l.push(o.triple.l as u16);
                data.pn.push((o.triple.purchase_number.clamp(1, k) - 1) as u8);
                data.y.push(o.y);
            }
            data.offsets.push(data.t.len());
        }
        Ok(Self {
            calendar_grid: structure.calendar_grid(),
            cyclic_grid: structure.cyclic_grid(),
            recency_grid: structure.recency_grid(),
            lifetime_grid: structure.lifetime_grid(),
            structure,
            layout,
            customers,
            data,
            likelihood_weight: 1.0,
            parallelism: Parallelism::default(),
        })
    }

    pub fn structure(&self) -> &ModelStructure {
        &self.structure
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.structure.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn n_observations(&self) -> usize {
        self.data.t.len()
    }

    pub fn customer_index(&self, i: usize) -> CustomerIndex {
        self.customers[i]
    }

    pub fn customer_indices(&self) -> &[CustomerIndex] {
        &self.customers
    }

    fn grid(&self, kind: CurveKind) -> &[f64] {
        match kind {
            CurveKind::LongRun | CurveKind::ShortRun => &self.calendar_grid,
            CurveKind::Cyclic => &self.cyclic_grid,
            CurveKind::Recency => &self.recency_grid,
            CurveKind::Lifetime => &self.lifetime_grid,
        }
    }

    fn block(&self, kind: CurveKind) -> Option<&CurveBlock> {
        match kind {
            CurveKind::LongRun => self.layout.long_run.as_ref(),
            CurveKind::ShortRun => self.layout.short_run.as_ref(),
            CurveKind::Cyclic => self.layout.cyclic.as_ref(),
            CurveKind::Recency => self.layout.recency.as_ref(),
            CurveKind::Lifetime => self.layout.lifetime.as_ref(),
        }
    }

    fn kernel(kind: CurveKind, amplitude: f64, length_scale: f64) -> KernelSpec {
        match kind {
            CurveKind::Cyclic => KernelSpec::Cyclic(CyclicKernelParams {
                amplitude,
                length_scale,
                period: WEEK,
            }),
            _ => KernelSpec::Se(SeKernelParams {
                amplitude,
                length_scale,
            }),
        }
    }

    /// Length-scale of a curve at `theta`, honoring the ordering transform.
    fn length_scale(&self, kind: CurveKind, theta: &[f64]) -> f64 {
        let b = self.block(kind).expect("curve present");
        match (kind, &self.layout.short_run) {
            (CurveKind::LongRun, Some(s)) => theta[s.log_length].exp() + theta[b.log_length].exp(),
            _ => theta[b.log_length].exp(),
        }
    }

    fn eval_curve(&self, kind: CurveKind, theta: &[f64]) -> Result<Option<CurveEval>> {
        let Some(b) = self.block(kind) else {
            return Ok(None);
        };
        let grid = self.grid(kind);
        let amplitude = theta[b.log_amplitude].exp();
        let length_scale = self.length_scale(kind, theta);
        if !(amplitude.is_finite() && length_scale.is_finite() && amplitude > 0.0 && length_scale > 0.0) {
            return Err(GppmError::NonFinite(format!("{kind:?} kernel parameters")));
        }
        let unit = Self::kernel(kind, 1.0, length_scale);
        let n = grid.len();
        let (c, dc) = unit_gram(grid, &unit);
        let (chol, dlc) = jittered_cholesky_tangent(&c, &dc, self.spec().jitter, 1.0)?;
        let lc = chol.l;
        let z = DVector::from_column_slice(&theta[b.z.clone()]);
        let centered = (&lc * &z) * amplitude;
        let lambda = b.lambda.map(|(a, e)| (theta[a].exp(), theta[e].exp()));
        let mean: Vec<f64> = match (kind, lambda) {
            (CurveKind::LongRun, _) => vec![theta[self.layout.mu]; n],
            (_, Some((s, e))) => grid.iter().map(|&tau| power_decay(tau, s, e)).collect(),
            _ => vec![0.0; n],
        };
        let mut values: Vec<f64> = mean.iter().zip(centered.iter()).map(|(m, c)| m + c).collect();
        let identified = kind != CurveKind::LongRun;
        if identified {
            let v0 = values[0];
            for v in &mut values {
                *v -= v0;
            }
            values[0] = 0.0;
        }
        Ok(Some(CurveEval {
            amplitude,
            length_scale,
            lc,
            dlc,
            z,
            centered,
            mean,
            lambda,
            values,
            identified,
        }))
    }

    /// Maps an unconstrained vector to identified constrained parameters.
    pub fn constrain(&self, theta: &[f64]) -> Result<GppmParams> {
        self.check_dim(theta)?;
        let l = &self.layout;
        let mu = theta[l.mu];
        let curve = |kind: CurveKind| -> Result<Option<Curve>> {
            let Some(b) = self.block(kind) else {
                return Ok(None);
            };
            let amplitude = theta[b.log_amplitude].exp();
            let length_scale = self.length_scale(kind, theta);
            let mean = match (kind, b.lambda) {
                (CurveKind::LongRun, _) => MeanFunction::Constant { level: mu },
                (_, Some((a, e))) => MeanFunction::PowerDecay {
                    scale: theta[a].exp(),
                    exponent: theta[e].exp(),
                },
                _ => MeanFunction::Zero,
            };
            // Same unit-amplitude factor as the gradient path, scaled afterwards.
            let grid = self.grid(kind);
            let (c, _) = unit_gram(grid, &Self::kernel(kind, 1.0, length_scale));
            let chol = jittered_cholesky(&c, self.spec().jitter, 1.0)?.l * amplitude;
            let whitened = WhitenedComponent {
                grid: grid.to_vec(),
                mean,
                kernel: Self::kernel(kind, amplitude, length_scale),
                z: theta[b.z.clone()].to_vec(),
                chol,
            };
            let values = crate::gp::unwhiten(&whitened)?.values;
            Ok(Some(Curve {
                amplitude,
                length_scale,
                whitened,
                values,
                identified: false,
            }))
        };
        let with_reference = |range: std::ops::Range<usize>, total: usize| -> Vec<f64> {
            if total == 0 {
                return Vec::new();
            }
            let mut v = vec![0.0];
            v.extend_from_slice(&theta[range]);
            v
        };
        let effect = |b: &Option<EffectBlock>| -> (Option<f64>, Vec<f64>) {
            match b {
                Some(b) => {
                    let s = theta[b.log_sigma].exp();
                    (Some(s), theta[b.u.clone()].iter().map(|u| s * u).collect())
                }
                None => (None, Vec::new()),
            }
        };
        let s = &self.structure;
        let (sigma_delta, delta) = effect(&l.delta);
        let (sigma_first_spend, first_spend_effects) = effect(&l.first_spend);
        let (sigma_install, install_effects) = effect(&l.install);
        let n_beta = if s.spec.purchase_number {
            s.spec.max_purchase_number as usize
        } else {
            0
        };
        let n_gamma = if s.n_channel_effects() > 0 {
            s.channel_levels.len()
        } else {
            0
        };
        let p = GppmParams {
            mu,
            long_run: curve(CurveKind::LongRun)?,
            short_run: curve(CurveKind::ShortRun)?,
            cyclic: curve(CurveKind::Cyclic)?,
            recency: curve(CurveKind::Recency)?,
            lifetime: curve(CurveKind::Lifetime)?,
            beta: with_reference(l.beta.clone(), n_beta),
            gamma: with_reference(l.gamma.clone(), n_gamma),
            sigma_delta,
            delta,
            sigma_first_spend,
            first_spend_effects,
            sigma_install,
            install_effects,
        };
        Ok(p.apply_identification())
    }

    /// Inverse of [`GppmModel::constrain`] (identification does not touch the
    /// whitened coordinates).
    pub fn unconstrain(&self, p: &GppmParams) -> Result<Vec<f64>> {
        let l = &self.layout;
        let mut theta = vec![0.0; l.dim()];
        theta[l.mu] = p.mu;
        let pairs = [
            (&l.long_run, &p.long_run),
            (&l.short_run, &p.short_run),
            (&l.cyclic, &p.cyclic),
            (&l.recency, &p.recency),
            (&l.lifetime, &p.lifetime),
        ];
        for (b, c) in pairs {
            match (b, c) {
                (Some(b), Some(c)) => {
                    if c.whitened.z.len() != b.len() {
                        return Err(GppmError::Dimension {
                            expected: b.len(),
                            got: c.whitened.z.len(),
                        });
                    }
                    theta[b.log_amplitude] = c.amplitude.ln();
                    theta[b.log_length] = c.length_scale.ln();
                    if let (Some((a, e)), MeanFunction::PowerDecay { scale, exponent }) = (b.lambda, c.mean()) {
                        theta[a] = scale.ln();
                        theta[e] = exponent.ln();
                    }
                    theta[b.z.clone()].copy_from_slice(&c.whitened.z);
                }
                (None, None) => {}
                _ => return Err(GppmError::InvalidInput("component set does not match the model".into())),
            }
        }
        if let (Some(lr), Some(sr)) = (&l.long_run, &p.short_run) {
            let long = p.long_run.as_ref().expect("long run present");
            let gap = long.length_scale - sr.length_scale;
            if !(gap > 0.0) {
                return Err(GppmError::InvalidInput("rho_long must exceed rho_short".into()));
            }
            theta[lr.log_length] = gap.ln();
        }
        for (i, k) in l.beta.clone().enumerate() {
            theta[k] = p.beta[i + 1];
        }
        for (i, k) in l.gamma.clone().enumerate() {
            theta[k] = p.gamma[i + 1];
        }
        let effects = [
            (&l.delta, p.sigma_delta, &p.delta),
            (&l.first_spend, p.sigma_first_spend, &p.first_spend_effects),
            (&l.install, p.sigma_install, &p.install_effects),
        ];
        for (b, s, v) in effects {
            if let (Some(b), Some(s)) = (b, s) {
                theta[b.log_sigma] = s.ln();
                for (k, e) in b.u.clone().zip(v) {
                    theta[k] = e / s;
                }
            }
        }
        Ok(theta)
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(GppmError::Dimension {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        if let Some(i) = theta.iter().position(|x| !x.is_finite()) {
            return Err(GppmError::NonFinite(format!("parameter {}", self.layout.names[i])));
        }
        Ok(())
    }

    /// Bernoulli log-likelihood of the panel under identified parameters,
    /// accumulated observation by observation.
    pub fn log_likelihood(&self, p: &GppmParams) -> Result<f64> {
        let mut total = 0.0;
        for (i, ci) in self.customers.iter().enumerate() {
            let (start, end) = (self.data.offsets[i], self.data.offsets[i + 1]);
            for k in start..end {
                let triple = super::panel::ObservationTriple {
                    t: self.data.t[k] as u32,
                    r: self.data.r[k] as u32,
                    l: self.data.l[k] as u32,
                    purchase_number: self.data.pn[k] as u32 + 1,
                };
                let eta = p.latent_propensity(&triple, ci)?;
                total += bernoulli_logit(self.data.y[k], eta);
            }
        }
        Ok(total)
    }

    /// Log prior of an unconstrained vector, including transform Jacobians.
    /// Adds the prior gradient into `grad` when given.
    fn log_prior(&self, theta: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let pr = &self.spec().priors;
        let l = &self.layout;
        let mut lp = 0.0;
        let mut add = |k: usize, v: f64, g: f64, grad: &mut Option<&mut [f64]>| {
            lp += v;
            if let Some(gr) = grad.as_deref_mut() {
                gr[k] += g;
            }
        };
        let normal = |x: f64, sd: f64| (-0.5 * x * x / (sd * sd), -x / (sd * sd));
        // log-transformed half-normal, Jacobian included
        let half_normal = |u: f64, scale: f64| {
            let x = u.exp();
            (-0.5 * x * x / (scale * scale) + u, -x * x / (scale * scale) + 1.0)
        };
        let log_normal = |u: f64, p: LogNormal| normal(u - p.log_median, p.sd);

        let mu = theta[l.mu];
        let (v, g) = normal(mu, pr.mu_sd);
        add(l.mu, v, g, &mut grad);

        let curves = [
            (
                &l.long_run,
                if l.short_run.is_some() { pr.rho_gap } else { pr.rho_long },
            ),
            (&l.short_run, pr.rho_short),
            (&l.cyclic, pr.rho_cyclic),
            (&l.recency, pr.rho_recency),
            (&l.lifetime, pr.rho_lifetime),
        ];
        for (b, rho_prior) in curves {
            let Some(b) = b else { continue };
            let (v, g) = half_normal(theta[b.log_amplitude], pr.amplitude_scale);
            add(b.log_amplitude, v, g, &mut grad);
            let (v, g) = log_normal(theta[b.log_length], rho_prior);
            add(b.log_length, v, g, &mut grad);
            if let Some((a, e)) = b.lambda {
                let (v, g) = half_normal(theta[a], pr.lambda_scale);
                add(a, v, g, &mut grad);
                let (v, g) = log_normal(theta[e], pr.lambda_exponent);
                add(e, v, g, &mut grad);
            }
            for k in b.z.clone() {
                let (v, g) = normal(theta[k], 1.0);
                add(k, v, g, &mut grad);
            }
        }
        for k in l.beta.clone().chain(l.gamma.clone()) {
            let (v, g) = normal(theta[k], pr.effect_sd);
            add(k, v, g, &mut grad);
        }
        for b in [&l.delta, &l.first_spend, &l.install].into_iter().flatten() {
            let (v, g) = half_normal(theta[b.log_sigma], pr.sigma_scale);
            add(b.log_sigma, v, g, &mut grad);
            for k in b.u.clone() {
                let (v, g) = normal(theta[k], 1.0);
                add(k, v, g, &mut grad);
            }
        }
        lp
    }

    /// Log posterior (up to a constant) computed through the constrained
    /// parameter state.
    pub fn log_posterior(&self, theta: &[f64]) -> Result<f64> {
        let p = self.constrain(theta)?;
        let ll = if self.likelihood_weight == 0.0 {
            0.0
        } else {
            self.likelihood_weight * self.log_likelihood(&p)?
        };
        let v = ll + self.log_prior(theta, None);
        if !v.is_finite() {
            return Err(GppmError::NonFinite("log posterior".into()));
        }
        Ok(v)
    }

    /// Log posterior and its gradient with respect to `theta`.
    pub fn grad_log_posterior(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; self.dim()];
        let v = self.value_and_gradient(theta, &mut g)?;
        Ok((v, g))
    }

    fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_dim(theta)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let l = &self.layout;
        let s = &self.structure;
        let long = self.eval_curve(CurveKind::LongRun, theta)?;
        let short = self.eval_curve(CurveKind::ShortRun, theta)?;
        let cyc = self.eval_curve(CurveKind::Cyclic, theta)?;
        let rec = self.eval_curve(CurveKind::Recency, theta)?;
        let life = self.eval_curve(CurveKind::Lifetime, theta)?;

        let t_len = s.horizon as usize;
        let mu = theta[l.mu];
        let calendar: Vec<f64> = (0..t_len)
            .map(|i| {
                let mut v = long.as_ref().map_or(mu, |c| c.values[i]);
                if let Some(c) = &short {
                    v += c.values[i];
                }
                if let Some(c) = &cyc {
                    v += c.values[cyclic_phase(i as u32 + 1)];
                }
                v
            })
            .collect();
        let recency = rec
            .as_ref()
            .map_or_else(|| vec![0.0; s.recency_max as usize], |c| c.values.clone());
        let lifetime = life
            .as_ref()
            .map_or_else(|| vec![0.0; s.lifetime_max as usize], |c| c.values.clone());
        let k_pn = s.spec.max_purchase_number as usize;
        let mut beta = vec![0.0; k_pn];
        for (i, k) in l.beta.clone().enumerate() {
            beta[i + 1] = theta[k];
        }
        let mut gamma = vec![0.0; s.channel_levels.len().max(1)];
        for (i, k) in l.gamma.clone().enumerate() {
            gamma[i + 1] = theta[k];
        }
        let effect = |b: &Option<EffectBlock>| -> (f64, Vec<f64>) {
            match b {
                Some(b) => {
                    let sd = theta[b.log_sigma].exp();
                    (sd, theta[b.u.clone()].iter().map(|u| sd * u).collect())
                }
                None => (0.0, Vec::new()),
            }
        };
        let (sd_delta, delta) = effect(&l.delta);
        let (sd_first, first) = effect(&l.first_spend);
        let (sd_inst, inst) = effect(&l.install);
        let base: Vec<f64> = self
            .customers
            .iter()
            .map(|c| {
                gamma[c.channel]
                    + delta.get(c.customer).copied().unwrap_or(0.0)
                    + first.get(c.first_spend).copied().unwrap_or(0.0)
                    + inst.get(c.install).copied().unwrap_or(0.0)
            })
            .collect();

        // Likelihood pass over fixed chunks of customers, reduced in order.
        let weight = self.likelihood_weight;
        let n_r = recency.len();
        let n_l = lifetime.len();
        let partials = par::map_chunks(&self.customers, CHUNK, self.parallelism, |start, chunk| {
            let mut part = Partial::new(t_len, n_r, n_l, k_pn, chunk.len());
            if weight == 0.0 {
                return part;
            }
            for (j, _) in chunk.iter().enumerate() {
                let i = start + j;
                let b = base[i];
                let mut gi = 0.0;
                let mut lli = 0.0;
                for k in self.data.offsets[i]..self.data.offsets[i + 1] {
                    let t = self.data.t[k] as usize - 1;
                    let r = self.data.r[k] as usize - 1;
                    let lt = self.data.l[k] as usize - 1;
                    let pn = self.data.pn[k] as usize;
                    let eta = b + calendar[t] + recency[r] + lifetime[lt] + beta[pn];
                    let y = self.data.y[k];
                    let e = (-eta.abs()).exp();
                    let sp = eta.max(0.0) + e.ln_1p();
                    let p = if eta >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
                    lli += if y { eta - sp } else { -sp };
                    let g = if y { 1.0 } else { 0.0 } - p;
                    part.cal[t] += g;
                    part.rec[r] += g;
                    part.life[lt] += g;
                    part.pn[pn] += g;
                    gi += g;
                }
                part.ll += lli;
                part.cust[j] = gi * weight;
            }
            part.ll *= weight;
            for v in part
                .cal
                .iter_mut()
                .chain(part.rec.iter_mut())
                .chain(part.life.iter_mut())
                .chain(part.pn.iter_mut())
            {
                *v *= weight;
            }
            part
        });
        let mut ll = 0.0;
        let mut adj_cal = vec![0.0; t_len];
        let mut adj_rec = vec![0.0; n_r];
        let mut adj_life = vec![0.0; n_l];
        let mut adj_pn = vec![0.0; k_pn];
        let mut adj_cust = Vec::with_capacity(self.customers.len());
        for p in partials {
            ll += p.ll;
            axpy(&mut adj_cal, &p.cal);
            axpy(&mut adj_rec, &p.rec);
            axpy(&mut adj_life, &p.life);
            axpy(&mut adj_pn, &p.pn);
            adj_cust.extend_from_slice(&p.cust);
        }

        // Curves.
        let mut rho_bar_short = 0.0;
        let mut rho_bar_long = 0.0;
        if let (Some(b), Some(c)) = (&l.long_run, &long) {
            let (rho_bar, mean_bar) = self.backprop_curve(CurveKind::LongRun, b, c, &adj_cal, grad);
            rho_bar_long = rho_bar;
            grad[l.mu] += mean_bar;
        } else {
            grad[l.mu] += adj_cal.iter().sum::<f64>();
        }
        if let (Some(b), Some(c)) = (&l.short_run, &short) {
            rho_bar_short = self.backprop_curve(CurveKind::ShortRun, b, c, &adj_cal, grad).0;
        }
        if let (Some(b), Some(c)) = (&l.cyclic, &cyc) {
            let mut adj = vec![0.0; WEEK as usize];
            for (i, a) in adj_cal.iter().enumerate() {
                adj[cyclic_phase(i as u32 + 1)] += a;
            }
            let rho_bar = self.backprop_curve(CurveKind::Cyclic, b, c, &adj, grad).0;
            grad[b.log_length] += rho_bar * c.length_scale;
        }
        if let (Some(b), Some(c)) = (&l.recency, &rec) {
            let rho_bar = self.backprop_curve(CurveKind::Recency, b, c, &adj_rec, grad).0;
            grad[b.log_length] += rho_bar * c.length_scale;
        }
        if let (Some(b), Some(c)) = (&l.lifetime, &life) {
            let rho_bar = self.backprop_curve(CurveKind::Lifetime, b, c, &adj_life, grad).0;
            grad[b.log_length] += rho_bar * c.length_scale;
        }
        match (&l.short_run, &l.long_run) {
            (Some(sb), Some(lb)) => {
                let rho_s = short.as_ref().expect("short").length_scale;
                let gap = theta[lb.log_length].exp();
                grad[sb.log_length] += rho_s * (rho_bar_short + rho_bar_long);
                grad[lb.log_length] += gap * rho_bar_long;
            }
            (Some(sb), None) => {
                grad[sb.log_length] += short.as_ref().expect("short").length_scale * rho_bar_short;
            }
            (None, Some(lb)) => {
                grad[lb.log_length] += long.as_ref().expect("long").length_scale * rho_bar_long;
            }
            (None, None) => {}
        }

        // Effects.
        for (i, k) in l.beta.clone().enumerate() {
            grad[k] += adj_pn[i + 1];
        }
        if !l.gamma.is_empty() {
            let mut adj = vec![0.0; gamma.len()];
            for (c, a) in self.customers.iter().zip(&adj_cust) {
                adj[c.channel] += a;
            }
            for (i, k) in l.gamma.clone().enumerate() {
                grad[k] += adj[i + 1];
            }
        }
        let effect_grad = |b: &Option<EffectBlock>,
                           sd: f64,
                           values: &[f64],
                           level: &dyn Fn(&CustomerIndex) -> usize,
                           grad: &mut [f64]| {
            let Some(b) = b else { return };
            let mut adj = vec![0.0; b.u.len()];
            for (c, a) in self.customers.iter().zip(&adj_cust) {
                adj[level(c)] += a;
            }
            let mut sigma_bar = 0.0;
            for (j, k) in b.u.clone().enumerate() {
                grad[k] += sd * adj[j];
                sigma_bar += adj[j] * values[j];
            }
            grad[b.log_sigma] += sigma_bar;
        };
        effect_grad(&l.delta, sd_delta, &delta, &|c| c.customer, grad);
        effect_grad(&l.first_spend, sd_first, &first, &|c| c.first_spend, grad);
        effect_grad(&l.install, sd_inst, &inst, &|c| c.install, grad);

        let lp = ll + self.log_prior(theta, Some(grad));
        if !lp.is_finite() {
            return Err(GppmError::NonFinite("log posterior".into()));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(GppmError::NonFinite(format!("gradient of {}", l.names[i])));
        }
        Ok(lp)
    }

    /// Pushes the adjoint of a curve's (possibly identified) values back to
    /// its coordinates. Returns the adjoint of the constrained length-scale
    /// and of the mean level.
    fn backprop_curve(
        &self,
        kind: CurveKind,
        b: &CurveBlock,
        c: &CurveEval,
        adj: &[f64],
        grad: &mut [f64],
    ) -> (f64, f64) {
        let mut fbar = DVector::from_column_slice(adj);
        if c.identified {
            let total: f64 = adj.iter().sum();
            fbar[0] -= total;
        }
        let zbar = c.lc.tr_mul(&fbar) * c.amplitude;
        for (k, zb) in b.z.clone().zip(zbar.iter()) {
            grad[k] += zb;
        }
        grad[b.log_amplitude] += fbar.dot(&c.centered);

        let grid = self.grid(kind);
        let dlog_rho = c.amplitude * fbar.dot(&(&c.dlc * &c.z));
        let rho_bar = dlog_rho / c.length_scale;

        let mut mean_bar = 0.0;
        if let (Some((a, e)), Some((_, exponent))) = (b.lambda, c.lambda) {
            let mut ga = 0.0;
            let mut ge = 0.0;
            for (j, &tau) in grid.iter().enumerate() {
                let m = c.mean[j];
                if tau > 1.0 {
                    ga += fbar[j] * m;
                    ge += fbar[j] * m * exponent * (tau - 1.0).ln();
                }
            }
            grad[a] += ga;
            grad[e] += ge;
        } else if kind == CurveKind::LongRun {
            mean_bar = fbar.iter().sum();
        }
        (rho_bar, mean_bar)
    }
}

struct Partial {
    ll: f64,
    cal: Vec<f64>,
    rec: Vec<f64>,
    life: Vec<f64>,
    pn: Vec<f64>,
    cust: Vec<f64>,
}

impl Partial {
    fn new(t: usize, r: usize, l: usize, k: usize, n: usize) -> Self {
        Self {
            ll: 0.0,
            cal: vec![0.0; t],
            rec: vec![0.0; r],
            life: vec![0.0; l],
            pn: vec![0.0; k],
            cust: vec![0.0; n],
        }
    }
}

fn axpy(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

impl LogDensity for GppmModel {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.value_and_gradient(x, grad)
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.log_posterior(x)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::panel::CustomerRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Small random panel with three channels and varied install days.
    pub(crate) fn fixture(n: usize, horizon: u32, seed: u64) -> SpendPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let customers = (0..n)
            .map(|i| {
                let first = rng.gen_range(1..=horizon / 2);
                let install = rng.gen_range(1..=first).max(first.saturating_sub(3)).max(1);
                let mut days: std::collections::BTreeSet<u32> = [first].into_iter().collect();
                for d in first + 1..=horizon {
                    if rng.gen::<f64>() < 0.15 {
                        days.insert(d);
                    }
                }
                CustomerRecord {
                    customer_id: format!("c{i}"),
                    install_day: install,
                    first_spend_day: first,
                    channel: ["ads", "organic", "referral"][i % 3].into(),
                    spend_days: days,
                }
            })
            .collect();
        SpendPanel::new(customers, horizon).unwrap()
    }

    fn random_theta(m: &GppmModel, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m.dim()).map(|_| rng.gen_range(-0.8..0.8)).collect()
    }

    fn full_with_install() -> ModelSpec {
        ModelSpec {
            install_effects: true,
            ..ModelSpec::full()
        }
    }

    #[test]
    fn fast_and_slow_paths_agree() {
        let panel = fixture(20, 30, 1);
        let m = GppmModel::new(&panel, full_with_install()).unwrap();
        for seed in 0..3 {
            let theta = random_theta(&m, seed);
            let slow = m.log_posterior(&theta).unwrap();
            let (fast, _) = m.grad_log_posterior(&theta).unwrap();
            assert!((slow - fast).abs() < 1e-8 * slow.abs().max(1.0), "{slow} vs {fast}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let panel = fixture(20, 30, 2);
        for spec in [full_with_install(), ModelSpec::reduced(), ModelSpec::reduced_cyclic()] {
            let m = GppmModel::new(&panel, spec).unwrap();
            let theta = random_theta(&m, 9);
            let (_, g) = m.grad_log_posterior(&theta).unwrap();
            let h = 1e-5;
            for k in 0..m.dim() {
                let mut tp = theta.clone();
                tp[k] += h;
                let mut tm = theta.clone();
                tm[k] -= h;
                let fd = (m.log_posterior(&tp).unwrap() - m.log_posterior(&tm).unwrap()) / (2.0 * h);
                let err = (g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1.0);
                assert!(err < 1e-5, "{}: analytic {} fd {}", m.layout().names[k], g[k], fd);
            }
        }
    }

    #[test]
    fn constrain_round_trips() {
        let panel = fixture(12, 20, 3);
        let m = GppmModel::new(&panel, full_with_install()).unwrap();
        let theta = random_theta(&m, 4);
        let p = m.constrain(&theta).unwrap();
        assert!(p.is_identified());
        let back = m.unconstrain(&p).unwrap();
        for (a, b) in theta.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        let short = p.short_run.as_ref().unwrap().length_scale;
        let long = p.long_run.as_ref().unwrap().length_scale;
        assert!(short < long);
    }

    #[test]
    fn parallel_and_sequential_gradients_are_identical() {
        let panel = fixture(200, 25, 5);
        let mut m = GppmModel::new(&panel, ModelSpec::full()).unwrap();
        let theta = random_theta(&m, 6);
        m.parallelism = Parallelism::Sequential;
        let a = m.grad_log_posterior(&theta).unwrap();
        m.parallelism = Parallelism::Rayon;
        let b = m.grad_log_posterior(&theta).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weight_leaves_only_the_prior() {
        let panel = fixture(10, 15, 7);
        let mut m = GppmModel::new(&panel, ModelSpec::full()).unwrap();
        m.likelihood_weight = 0.0;
        let theta = random_theta(&m, 8);
        let (v, _) = m.grad_log_posterior(&theta).unwrap();
        assert_eq!(v, m.log_prior(&theta, None));
    }

    #[test]
    fn rejects_wrong_dimension_and_non_finite() {
        let panel = fixture(5, 10, 9);
        let m = GppmModel::new(&panel, ModelSpec::full()).unwrap();
        assert!(matches!(m.log_posterior(&[0.0]), Err(GppmError::Dimension { .. })));
        let mut theta = vec![0.0; m.dim()];
        theta[0] = f64::NAN;
        assert!(matches!(m.grad_log_posterior(&theta), Err(GppmError::NonFinite(_))));
    }
}
