use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GppmError, Result};
use crate::gp::{conditional_draw, gp_conditional, GpComponent};
use crate::model::{Curve, GppmModel, GppmParams};

/// How curve values beyond the fitted grid are produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMode {
    /// A draw from the GP conditional.
    #[default]
    Sample,
    /// The GP conditional mean.
    Mean,
}

/// One draw's curves on extended grids, identified like the fitted curves.
/// The cyclic curve keeps its weekly phase grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentForecast {
    pub long_run: Option<GpComponent>,
    pub short_run: Option<GpComponent>,
    pub cyclic: Option<GpComponent>,
    pub recency: Option<GpComponent>,
    pub lifetime: Option<GpComponent>,
}

fn extend<R: Rng + ?Sized>(c: &Curve, len: usize, jitter: f64, mode: ForecastMode, rng: &mut R) -> Result<GpComponent> {
    let raw = c.raw_component()?;
    let n = raw.grid.len();
    let mut values = raw.values.clone();
    let mut grid = raw.grid.clone();
    if len > n {
        let new: Vec<f64> = (n + 1..=len).map(|i| i as f64).collect();
        let jitter = jitter * c.amplitude * c.amplitude;
        let ext = match mode {
            ForecastMode::Mean => gp_conditional(&raw, &new, jitter)?.0.iter().copied().collect(),
            ForecastMode::Sample => conditional_draw(&raw, &new, jitter, rng)?,
        };
        values.extend(ext);
        grid.extend(new);
    }
    if c.identified {
        let v0 = values[0];
        for v in &mut values {
            *v -= v0;
        }
        values[0] = 0.0;
    }
    GpComponent::new(grid, values, raw.mean, raw.kernel)
}

/// Extends the calendar curves to days `1..=horizon` and the recency and
/// lifetime curves to every value reachable by then.
pub fn forecast_components<R: Rng + ?Sized>(
    model: &GppmModel,
    p: &GppmParams,
    horizon: u32,
    mode: ForecastMode,
    rng: &mut R,
) -> Result<ComponentForecast> {
    let s = model.structure();
    if horizon < s.horizon {
        return Err(GppmError::InvalidInput(format!(
            "forecast horizon {horizon} is shorter than the fitted horizon {}",
            s.horizon
        )));
    }
    let jitter = s.spec.jitter;
    let reach = (horizon as usize).saturating_sub(1);
    let mut ext = |c: &Option<Curve>, len: usize| -> Result<Option<GpComponent>> {
        c.as_ref().map(|c| extend(c, len, jitter, mode, rng)).transpose()
    };
    Ok(ComponentForecast {
        long_run: ext(&p.long_run, horizon as usize)?,
        short_run: ext(&p.short_run, horizon as usize)?,
        cyclic: ext(&p.cyclic, 0)?,
        recency: ext(&p.recency, reach.max(s.recency_max as usize))?,
        lifetime: ext(&p.lifetime, reach.max(s.lifetime_max as usize))?,
    })
}
