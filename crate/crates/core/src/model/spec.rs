use serde::{Deserialize, Serialize};

/// Period of the cyclic calendar component, in days.
pub const WEEK: f64 = 7.0;

/// Which latent components and effect blocks a model carries.
///
/// The reduced variants are separate models estimated from scratch, not masks
/// applied to a fitted full model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub long_run: bool,
    pub short_run: bool,
    pub cyclic: bool,
    pub recency: bool,
    pub lifetime: bool,
    pub purchase_number: bool,
    /// Purchase numbers above this share the top dummy.
    pub max_purchase_number: u32,
    pub channel_effects: bool,
    pub customer_effects: bool,
    pub first_spend_effects: bool,
    pub install_effects: bool,
    /// Relative diagonal jitter for the GP covariance factorizations.
    pub jitter: f64,
    pub priors: Priors,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelSpec {
    /// All five latent components plus every effect block.
    pub fn full() -> Self {
        Self {
            long_run: true,
            short_run: true,
            cyclic: true,
            recency: true,
            lifetime: true,
            purchase_number: true,
            max_purchase_number: 10,
            channel_effects: true,
            customer_effects: true,
            first_spend_effects: true,
            install_effects: true,
            jitter: crate::linalg::JITTER_START,
            priors: Priors::default(),
        }
    }

    /// rGPPM: calendar time replaced by the constant `mu`.
    pub fn reduced() -> Self {
        Self {
            long_run: false,
            short_run: false,
            cyclic: false,
            ..Self::full()
        }
    }

    /// rGPPM-c: like [`ModelSpec::reduced`] but keeping the cyclic component.
    pub fn reduced_cyclic() -> Self {
        Self {
            cyclic: true,
            ..Self::reduced()
        }
    }

    pub fn without_effects(mut self) -> Self {
        self.purchase_number = false;
        self.channel_effects = false;
        self.customer_effects = false;
        self.first_spend_effects = false;
        self.install_effects = false;
        self
    }

    pub fn has_calendar(&self) -> bool {
        self.long_run || self.short_run || self.cyclic
    }
}

/// Log-normal prior expressed on the log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormal {
    pub log_median: f64,
    pub sd: f64,
}

impl LogNormal {
    pub fn median(median: f64, sd: f64) -> Self {
        Self {
            log_median: median.ln(),
            sd,
        }
    }
}

/// Hyperparameter priors. Amplitudes, random-effect standard deviations and
/// power-decay scales are half-normal with the given scale; fixed effects and
/// `mu` are centered normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Priors {
    pub mu_sd: f64,
    pub effect_sd: f64,
    pub amplitude_scale: f64,
    pub sigma_scale: f64,
    pub rho_short: LogNormal,
    /// Gap `rho_long - rho_short`.
    pub rho_gap: LogNormal,
    /// Used for the long-run length-scale when no short-run component exists.
    pub rho_long: LogNormal,
    pub rho_cyclic: LogNormal,
    pub rho_recency: LogNormal,
    pub rho_lifetime: LogNormal,
    pub lambda_scale: f64,
    pub lambda_exponent: LogNormal,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            mu_sd: 2.0,
            effect_sd: 2.0,
            amplitude_scale: 1.0,
            sigma_scale: 1.0,
            rho_short: LogNormal::median(14.0, 1.0),
            rho_gap: LogNormal::median(14.0, 1.0),
            rho_long: LogNormal::median(28.0, 1.0),
            rho_cyclic: LogNormal::median(1.0, 1.0),
            rho_recency: LogNormal::median(7.0, 1.0),
            rho_lifetime: LogNormal::median(7.0, 1.0),
            lambda_scale: 1.0,
            lambda_exponent: LogNormal::median(1.0, 0.5),
        }
    }
}
