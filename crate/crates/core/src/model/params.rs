//! Constrained parameter state of the propensity model.

use serde::{Deserialize, Serialize};

use crate::error::{GppmError, Result};
use crate::gp::{GpComponent, MeanFunction, WhitenedComponent};
use crate::kernels::KernelSpec;

use super::layout::cyclic_phase;
use super::panel::ObservationTriple;

/// One latent curve: its whitened representation and current values on the
/// grid (identified or raw, see `identified`).
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub amplitude: f64,
    pub length_scale: f64,
    pub whitened: WhitenedComponent,
    pub values: Vec<f64>,
    pub identified: bool,
}

impl Curve {
    pub fn mean(&self) -> MeanFunction {
        self.whitened.mean
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.whitened.kernel
    }

    pub fn grid(&self) -> &[f64] {
        &self.whitened.grid
    }

    /// Values shifted so the first grid point is zero.
    fn identify(&mut self) {
        if self.identified {
            return;
        }
        let v0 = self.values[0];
        for v in &mut self.values {
            *v -= v0;
        }
        self.values[0] = 0.0;
        self.identified = true;
    }

    /// Raw (unidentified) curve as a GP component, suitable for conditioning.
    pub fn raw_component(&self) -> Result<GpComponent> {
        crate::gp::unwhiten(&self.whitened)
    }

    /// Shift applied by identification (raw value at the first grid point).
    pub fn identification_offset(&self) -> f64 {
        if self.identified {
            let lz: f64 = (0..self.whitened.z.len())
                .map(|k| self.whitened.chol[(0, k)] * self.whitened.z[k])
                .sum();
            let m0 = self.whitened.mean.at(self.whitened.grid[0]).unwrap_or(0.0);
            m0 + lz
        } else {
            0.0
        }
    }

    #[inline]
    fn at(&self, idx: usize, what: &'static str) -> Result<f64> {
        self.values.get(idx).copied().ok_or(GppmError::OutOfGrid {
            what,
            index: idx + 1,
            len: self.values.len(),
        })
    }
}

/// Resolved effect indices for one customer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomerIndex {
    pub customer: usize,
    pub channel: usize,
    pub first_spend: usize,
    pub install: usize,
}

/// Full constrained parameter state.
///
/// Reference levels are stored explicitly as zeros: `beta[0]` is purchase
/// number 1 and `gamma[0]` is the first channel level.
#[derive(Debug, Clone, PartialEq)]
pub struct GppmParams {
    pub mu: f64,
    pub long_run: Option<Curve>,
    pub short_run: Option<Curve>,
    pub cyclic: Option<Curve>,
    pub recency: Option<Curve>,
    pub lifetime: Option<Curve>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub sigma_delta: Option<f64>,
    pub delta: Vec<f64>,
    pub sigma_first_spend: Option<f64>,
    pub first_spend_effects: Vec<f64>,
    pub sigma_install: Option<f64>,
    pub install_effects: Vec<f64>,
}

impl GppmParams {
    /// Zeroes every curve except the long-run one at its first grid input.
    /// Idempotent.
    pub fn apply_identification(&self) -> GppmParams {
        let mut p = self.clone();
        for c in [&mut p.short_run, &mut p.cyclic, &mut p.recency, &mut p.lifetime]
            .into_iter()
            .flatten()
        {
            c.identify();
        }
        debug_assert!(p.beta.first().is_none_or(|b| *b == 0.0));
        debug_assert!(p.gamma.first().is_none_or(|g| *g == 0.0));
        p
    }

    pub fn is_identified(&self) -> bool {
        [&self.short_run, &self.cyclic, &self.recency, &self.lifetime]
            .into_iter()
            .flatten()
            .all(|c| c.identified && c.values[0] == 0.0)
    }

    /// Calendar part of the propensity on day `t` (includes `mu`).
    pub fn calendar_effect(&self, t: u32) -> Result<f64> {
        if t == 0 {
            return Err(GppmError::OutOfGrid {
                what: "calendar",
                index: 0,
                len: 0,
            });
        }
        let idx = (t - 1) as usize;
        let mut v = match &self.long_run {
            Some(c) => c.at(idx, "long_run")?,
            None => self.mu,
        };
        if let Some(c) = &self.short_run {
            v += c.at(idx, "short_run")?;
        }
        if let Some(c) = &self.cyclic {
            v += c.at(cyclic_phase(t), "cyclic")?;
        }
        Ok(v)
    }

    pub fn customer_effect(&self, c: &CustomerIndex) -> f64 {
        let mut v = self.gamma.get(c.channel).copied().unwrap_or(0.0);
        v += self.delta.get(c.customer).copied().unwrap_or(0.0);
        v += self.first_spend_effects.get(c.first_spend).copied().unwrap_or(0.0);
        v += self.install_effects.get(c.install).copied().unwrap_or(0.0);
        v
    }

    pub fn purchase_effect(&self, purchase_number: u32) -> f64 {
        if self.beta.is_empty() {
            return 0.0;
        }
        let k = (purchase_number.max(1) as usize).min(self.beta.len());
        self.beta[k - 1]
    }

    /// Sum of the curve values at the triple plus every covariate effect.
    pub fn latent_propensity(&self, obs: &ObservationTriple, customer: &CustomerIndex) -> Result<f64> {
        let mut v = self.calendar_effect(obs.t)?;
        if let Some(c) = &self.recency {
            v += c.at(
                obs.r.checked_sub(1).ok_or(GppmError::OutOfGrid {
                    what: "recency",
                    index: 0,
                    len: c.values.len(),
                })? as usize,
                "recency",
            )?;
        }
        if let Some(c) = &self.lifetime {
            v += c.at(
                obs.l.checked_sub(1).ok_or(GppmError::OutOfGrid {
                    what: "lifetime",
                    index: 0,
                    len: c.values.len(),
                })? as usize,
                "lifetime",
            )?;
        }
        v += self.purchase_effect(obs.purchase_number);
        v += self.customer_effect(customer);
        Ok(v)
    }
}

/// Inverse logit.
#[inline]
pub fn spend_probability(propensity: f64) -> f64 {
    if propensity >= 0.0 {
        1.0 / (1.0 + (-propensity).exp())
    } else {
        let e = propensity.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Bernoulli log-likelihood of one observation on the logit scale.
#[inline]
pub fn bernoulli_logit(y: bool, propensity: f64) -> f64 {
    if y {
        -softplus(-propensity)
    } else {
        -softplus(propensity)
    }
}
