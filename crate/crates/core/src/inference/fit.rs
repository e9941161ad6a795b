//! Fitting the propensity model: the model, its draws and draw-level checks.

use crate::error::{GppmError, Result};
use crate::model::{GppmModel, GppmParams, ModelSpec, SpendPanel};

use super::{hmc_sample, rhat, HmcConfig, PosteriorDraws};

#[derive(Debug, Clone)]
pub struct GppmFit {
    pub model: GppmModel,
    pub draws: PosteriorDraws,
}

/// Builds the model for `panel` and samples its posterior.
pub fn fit_gppm(panel: &SpendPanel, spec: ModelSpec, cfg: &HmcConfig) -> Result<GppmFit> {
    let mut model = GppmModel::new(panel, spec)?;
    model.parallelism = cfg.parallelism;
    log::info!(
        "fitting {} customers, {} observations, {} parameters",
        panel.len(),
        model.n_observations(),
        model.dim()
    );
    let draws = hmc_sample(&model, model.layout().names.clone(), cfg, None)?;
    log::info!(
        "sampling done: {} draws, {} divergent",
        draws.n_draws(),
        draws.divergence_count()
    );
    Ok(GppmFit { model, draws })
}

impl GppmFit {
    /// Constrained parameters of at most `max` evenly thinned draws.
    pub fn constrained(&self, max: usize) -> Result<Vec<GppmParams>> {
        self.draws
            .thinned(max)
            .into_iter()
            .map(|d| self.model.constrain(d))
            .collect()
    }

    /// Split-R̂ of every scalar hyperparameter, in layout order.
    pub fn hyperparameter_rhat(&self) -> Result<Vec<(String, f64)>> {
        self.model
            .layout()
            .hyperparameter_indices()
            .into_iter()
            .map(|k| Ok((self.draws.names[k].clone(), rhat(&self.draws.param_chains(k))?)))
            .collect()
    }

    /// Verifies the ordering and identification constraints on every stored
    /// draw. Returns the number of draws checked.
    pub fn check_identification(&self) -> Result<usize> {
        let mut n = 0;
        for (i, d) in self.draws.iter().enumerate() {
            let p = self.model.constrain(d)?;
            if let (Some(s), Some(l)) = (&p.short_run, &p.long_run) {
                if !(s.length_scale < l.length_scale) {
                    return Err(GppmError::Diagnostic(format!(
                        "draw {i}: short-run length-scale {} >= long-run {}",
                        s.length_scale, l.length_scale
                    )));
                }
            }
            for c in [&p.short_run, &p.cyclic, &p.recency, &p.lifetime].into_iter().flatten() {
                if c.values[0] != 0.0 || !(c.amplitude > 0.0 && c.length_scale > 0.0) {
                    return Err(GppmError::Diagnostic(format!("draw {i}: curve not identified")));
                }
            }
            n += 1;
        }
        Ok(n)
    }
}
