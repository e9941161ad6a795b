//! Grid sizes of a fitted model and the position of every unconstrained
//! coordinate in the sampler's parameter vector.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::panel::{derive_triples, SpendPanel};
use super::spec::{ModelSpec, WEEK};

/// Everything needed to interpret a parameter vector without the panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStructure {
    pub spec: ModelSpec,
    /// Calendar grid is `1..=horizon`.
    pub horizon: u32,
    /// Recency grid is `1..=recency_max`.
    pub recency_max: u32,
    /// Lifetime grid is `1..=lifetime_max`.
    pub lifetime_max: u32,
    pub n_customers: usize,
    pub channel_levels: Vec<String>,
    pub first_spend_levels: Vec<u32>,
    pub install_levels: Vec<u32>,
}

impl ModelStructure {
    pub fn from_panel(panel: &SpendPanel, spec: ModelSpec) -> Self {
        let obs = derive_triples(panel);
        let recency_max = obs.iter().flatten().map(|o| o.triple.r).max().unwrap_or(1).max(1);
        let lifetime_max = obs.iter().flatten().map(|o| o.triple.l).max().unwrap_or(1).max(1);
        let mut first: Vec<u32> = panel.customers.iter().map(|c| c.first_spend_day).collect();
        first.sort_unstable();
        first.dedup();
        let mut install: Vec<u32> = panel.customers.iter().map(|c| c.install_day).collect();
        install.sort_unstable();
        install.dedup();
        Self {
            spec,
            horizon: panel.horizon,
            recency_max,
            lifetime_max,
            n_customers: panel.len(),
            channel_levels: panel.channel_levels.clone(),
            first_spend_levels: first,
            install_levels: install,
        }
    }

    pub fn calendar_grid(&self) -> Vec<f64> {
        (1..=self.horizon).map(f64::from).collect()
    }

    pub fn cyclic_grid(&self) -> Vec<f64> {
        (1..=WEEK as u32).map(f64::from).collect()
    }

    pub fn recency_grid(&self) -> Vec<f64> {
        (1..=self.recency_max).map(f64::from).collect()
    }

    pub fn lifetime_grid(&self) -> Vec<f64> {
        (1..=self.lifetime_max).map(f64::from).collect()
    }

    pub fn n_purchase_dummies(&self) -> usize {
        if self.spec.purchase_number {
            self.spec.max_purchase_number.saturating_sub(1) as usize
        } else {
            0
        }
    }

    pub fn n_channel_effects(&self) -> usize {
        if self.spec.channel_effects {
            self.channel_levels.len().saturating_sub(1)
        } else {
            0
        }
    }
}

/// Index of the cyclic phase for a calendar day (day 1 has phase 0).
#[inline]
pub fn cyclic_phase(t: u32) -> usize {
    ((t - 1) % WEEK as u32) as usize
}

/// Unconstrained coordinates of one latent curve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveBlock {
    pub log_amplitude: usize,
    /// `log(rho)`, or `log(rho_long - rho_short)` for the long-run curve when
    /// a short-run curve exists.
    pub log_length: usize,
    /// `(log lambda_1, log lambda_2)` of a power-decay mean.
    pub lambda: Option<(usize, usize)>,
    pub z: Range<usize>,
}

impl CurveBlock {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Non-centered random-effect block: `effect = sigma * u`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectBlock {
    pub log_sigma: usize,
    pub u: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub mu: usize,
    pub long_run: Option<CurveBlock>,
    pub short_run: Option<CurveBlock>,
    pub cyclic: Option<CurveBlock>,
    pub recency: Option<CurveBlock>,
    pub lifetime: Option<CurveBlock>,
    /// Purchase numbers `2..=max_purchase_number`.
    pub beta: Range<usize>,
    /// Channel levels after the reference level.
    pub gamma: Range<usize>,
    pub delta: Option<EffectBlock>,
    pub first_spend: Option<EffectBlock>,
    pub install: Option<EffectBlock>,
    pub names: Vec<String>,
}

struct Builder {
    names: Vec<String>,
}

impl Builder {
    fn scalar(&mut self, name: String) -> usize {
        self.names.push(name);
        self.names.len() - 1
    }

    fn vector(&mut self, prefix: &str, labels: impl Iterator<Item = String>) -> Range<usize> {
        let start = self.names.len();
        for l in labels {
            self.names.push(format!("{prefix}[{l}]"));
        }
        start..self.names.len()
    }

    fn curve(&mut self, name: &str, length_name: &str, n: usize, decay: bool) -> CurveBlock {
        let log_amplitude = self.scalar(format!("{name}.log_amplitude"));
        let log_length = self.scalar(format!("{name}.{length_name}"));
        let lambda = decay.then(|| {
            (
                self.scalar(format!("{name}.log_lambda1")),
                self.scalar(format!("{name}.log_lambda2")),
            )
        });
        let z = self.vector(&format!("{name}.z"), (1..=n).map(|i| i.to_string()));
        CurveBlock {
            log_amplitude,
            log_length,
            lambda,
            z,
        }
    }

    fn effect(&mut self, name: &str, labels: impl Iterator<Item = String>) -> EffectBlock {
        let log_sigma = self.scalar(format!("{name}.log_sigma"));
        let u = self.vector(&format!("{name}.u"), labels);
        EffectBlock { log_sigma, u }
    }
}

impl Layout {
    pub fn new(s: &ModelStructure) -> Self {
        let spec = &s.spec;
        let mut b = Builder { names: Vec::new() };
        let mu = b.scalar("mu".into());
        let t = s.horizon as usize;
        let short_run = spec
            .short_run
            .then(|| b.curve("short_run", "log_length_scale", t, false));
        let long_length = if short_run.is_some() {
            "log_length_gap"
        } else {
            "log_length_scale"
        };
        let long_run = spec.long_run.then(|| b.curve("long_run", long_length, t, false));
        let cyclic = spec
            .cyclic
            .then(|| b.curve("cyclic", "log_length_scale", WEEK as usize, false));
        let recency = spec
            .recency
            .then(|| b.curve("recency", "log_length_scale", s.recency_max as usize, true));
        let lifetime = spec
            .lifetime
            .then(|| b.curve("lifetime", "log_length_scale", s.lifetime_max as usize, true));
        let beta = b.vector("beta", (2..2 + s.n_purchase_dummies() as u32).map(|k| k.to_string()));
        let gamma = b.vector(
            "gamma",
            s.channel_levels.iter().skip(1).take(s.n_channel_effects()).cloned(),
        );
        let delta = (spec.customer_effects && s.n_customers > 0)
            .then(|| b.effect("delta", (0..s.n_customers).map(|i| i.to_string())));
        let first_spend = (spec.first_spend_effects && !s.first_spend_levels.is_empty())
            .then(|| b.effect("first_spend", s.first_spend_levels.iter().map(u32::to_string)));
        let install = (spec.install_effects && !s.install_levels.is_empty())
            .then(|| b.effect("install", s.install_levels.iter().map(u32::to_string)));
        Self {
            mu,
            long_run,
            short_run,
            cyclic,
            recency,
            lifetime,
            beta,
            gamma,
            delta,
            first_spend,
            install,
            names: b.names,
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// Scalar hyperparameter coordinates: `mu`, kernel and mean-function
    /// parameters and random-effect scales.
    pub fn hyperparameter_indices(&self) -> Vec<usize> {
        let mut out = vec![self.mu];
        for c in self.curves().into_iter().flatten() {
            out.push(c.log_amplitude);
            out.push(c.log_length);
            if let Some((a, b)) = c.lambda {
                out.push(a);
                out.push(b);
            }
        }
        for e in [&self.delta, &self.first_spend, &self.install].into_iter().flatten() {
            out.push(e.log_sigma);
        }
        out
    }

    pub fn curves(&self) -> [Option<&CurveBlock>; 5] {
        [
            self.long_run.as_ref(),
            self.short_run.as_ref(),
            self.cyclic.as_ref(),
            self.recency.as_ref(),
            self.lifetime.as_ref(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::panel::CustomerRecord;
    use std::collections::HashSet;

    #[test]
    fn names_are_unique_and_cover_dim() {
        let customers = (0..3)
            .map(|i| CustomerRecord {
                customer_id: format!("c{i}"),
                install_day: 1,
                first_spend_day: 1 + i,
                channel: if i == 0 { "ads".into() } else { "organic".into() },
                spend_days: [1 + i, 5].into_iter().collect(),
            })
            .collect();
        let panel = SpendPanel::new(customers, 9).unwrap();
        let s = ModelStructure::from_panel(&panel, ModelSpec::full());
        let layout = Layout::new(&s);
        let set: HashSet<_> = layout.names.iter().collect();
        assert_eq!(set.len(), layout.dim());
        assert_eq!(layout.short_run.as_ref().unwrap().len(), 9);
        assert_eq!(layout.cyclic.as_ref().unwrap().len(), 7);
        assert_eq!(layout.gamma.len(), 1);
        assert_eq!(layout.beta.len(), 9);
        assert_eq!(s.recency_max, 4);
        assert!(layout.names.contains(&"long_run.log_length_gap".to_string()));
    }

    #[test]
    fn phases_wrap_weekly() {
        assert_eq!(cyclic_phase(1), 0);
        assert_eq!(cyclic_phase(7), 6);
        assert_eq!(cyclic_phase(8), 0);
    }
}
