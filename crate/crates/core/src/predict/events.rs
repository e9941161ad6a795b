use serde::{Deserialize, Serialize};

use crate::error::{GppmError, Result};
use crate::inference::{fit_gppm, HmcConfig};
use crate::model::{ModelSpec, SpendPanel};

use super::curves::{summarize_curves, CurveSummary};

/// Shortest training window accepted by [`detect_events`], in days.
pub const MIN_FIT_WINDOW: u32 = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCurves {
    pub long_run: CurveSummary,
    pub short_run: CurveSummary,
}

/// Outcome of one refit; failures are kept per cutoff.
#[derive(Debug)]
pub struct EventFit {
    pub cutoff: u32,
    pub outcome: Result<EventCurves>,
}

/// Refits the model on the panel truncated at each cutoff and collects the
/// posterior long- and short-run curves.
pub fn detect_events(
    panel: &SpendPanel,
    cutoffs: &[u32],
    spec: &ModelSpec,
    cfg: &HmcConfig,
    max_draws: usize,
) -> Result<Vec<EventFit>> {
    if !(spec.long_run && spec.short_run) {
        return Err(GppmError::InvalidInput(
            "event detection needs both long-run and short-run curves".into(),
        ));
    }
    if cutoffs.is_empty() {
        return Err(GppmError::InvalidInput("empty refit schedule".into()));
    }
    for w in cutoffs.windows(2) {
        if w[1] <= w[0] {
            return Err(GppmError::InvalidInput("cutoffs must be strictly increasing".into()));
        }
    }
    if let Some(c) = cutoffs.iter().find(|&&c| c < MIN_FIT_WINDOW || c > panel.horizon) {
        return Err(GppmError::InvalidInput(format!(
            "cutoff {c} outside [{MIN_FIT_WINDOW}, {}]",
            panel.horizon
        )));
    }
    Ok(cutoffs
        .iter()
        .map(|&cutoff| {
            let outcome = (|| {
                let fit = fit_gppm(&panel.truncate(cutoff)?, spec.clone(), cfg)?;
                let mut curves = summarize_curves(&fit.model, &fit.draws, max_draws)?;
                let mut take = |name: &str| {
                    let i = curves.iter().position(|c| c.name == name).expect("curve present");
                    curves.swap_remove(i)
                };
                let long_run = take("long_run");
                let short_run = take("short_run");
                Ok(EventCurves { long_run, short_run })
            })();
            if let Err(e) = &outcome {
                log::warn!("refit at cutoff {cutoff} failed: {e}");
            }
            EventFit { cutoff, outcome }
        })
        .collect())
}

/// True when `curve` (indexed from day 1) has a local maximum within `tol`
/// days of `day`. The last point counts when it is at least its neighbor.
pub fn local_max_near(curve: &[f64], day: u32, tol: u32) -> bool {
    let n = curve.len();
    let lo = day.saturating_sub(tol).max(1) as usize;
    let hi = ((day + tol) as usize).min(n);
    (lo..=hi).any(|d| {
        let i = d - 1;
        let left = i == 0 || curve[i] >= curve[i - 1];
        let right = i + 1 == n || curve[i] >= curve[i + 1];
        left && right
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_max_detection() {
        let c = [0.0, 0.1, 0.5, 0.2, 0.0, 0.3];
        assert!(local_max_near(&c, 3, 0));
        assert!(local_max_near(&c, 4, 1));
        assert!(!local_max_near(&c, 5, 0));
        assert!(local_max_near(&c, 6, 0));
    }

    #[test]
    fn schedule_validation() {
        let panel = SpendPanel::new(Vec::new(), 40).unwrap();
        let cfg = HmcConfig::default();
        let spec = ModelSpec::full();
        assert!(detect_events(&panel, &[35, 32], &spec, &cfg, 10).is_err());
        assert!(detect_events(&panel, &[20], &spec, &cfg, 10).is_err());
        assert!(detect_events(&panel, &[41], &spec, &cfg, 10).is_err());
        assert!(detect_events(&panel, &[35], &ModelSpec::reduced(), &cfg, 10).is_err());
    }
}
