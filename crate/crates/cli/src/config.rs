use std::path::{Path, PathBuf};

use gppm_core::benchmarks::{BgnbdParams, LogLogisticSpec};
use gppm_core::inference::HmcConfig;
use gppm_core::io::EventShade;
use gppm_core::model::ModelSpec;
use gppm_core::predict::PredictConfig;
use gppm_core::simulate::SimDesign;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub events: PathBuf,
    pub customers: PathBuf,
    /// Last observed day; defaults to the latest day in the files.
    #[serde(default)]
    pub horizon: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BgnbdSimConfig {
    pub params: BgnbdParams,
    pub n_customers: usize,
    pub acquisition_days: u32,
    pub horizon: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulateConfig {
    Gppm(SimDesign),
    Bgnbd(BgnbdSimConfig),
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig::Gppm(SimDesign::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub loglogistic: LogLogisticSpec,
    /// Forward simulations averaged for the BG/NBD daily series.
    pub bgnbd_replicates: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            loglogistic: LogLogisticSpec::default(),
            bgnbd_replicates: 50,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub cutoffs: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DashboardConfig {
    /// Draw file to render; defaults to `<out>/draws.bin`.
    pub draws: Option<PathBuf>,
    pub events: Vec<EventShade>,
    pub max_draws: usize,
}

impl Default for DashboardConfig {
    fn default() -> Self {
        Self {
            draws: None,
            events: Vec::new(),
            max_draws: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<DataConfig>,
    pub model: ModelSpec,
    pub hmc: HmcConfig,
    pub predict: PredictConfig,
    pub holdout_days: u32,
    /// Overrides every seed below when set.
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub simulate: SimulateConfig,
    pub compare: CompareConfig,
    pub detect: DetectConfig,
    pub dashboard: DashboardConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            model: ModelSpec::full(),
            hmc: HmcConfig::default(),
            predict: PredictConfig::default(),
            holdout_days: 30,
            seed: None,
            out: PathBuf::from("out"),
            simulate: SimulateConfig::default(),
            compare: CompareConfig::default(),
            detect: DetectConfig::default(),
            dashboard: DashboardConfig::default(),
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub holdout_days: Option<u32>,
    pub out: Option<PathBuf>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

impl RunConfig {
    /// Reads a config file, applies overrides, resolves relative paths
    /// against the file's directory and validates.
    pub fn load(path: &Path, ov: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: ".".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let mut cfg = parse_config(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(s) = ov.seed {
            cfg.seed = Some(s);
        }
        if let Some(h) = ov.holdout_days {
            cfg.holdout_days = h;
        }
        match &ov.out {
            Some(o) => cfg.out = o.clone(),
            None => cfg.out = resolve(base, &cfg.out),
        }
        if let Some(s) = cfg.seed {
            cfg.hmc.seed = s;
            cfg.predict.seed = s;
            if let SimulateConfig::Gppm(d) = &mut cfg.simulate {
                d.seed = s;
            }
        }
        if let Some(d) = &mut cfg.data {
            d.events = resolve(base, &d.events);
            d.customers = resolve(base, &d.customers);
        }
        if let Some(d) = &mut cfg.dashboard.draws {
            *d = resolve(base, d);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let err = |path: &str, message: String| {
            Err(CliError::Config {
                path: path.into(),
                message,
            })
        };
        if let Some(d) = &self.data {
            for (key, p) in [("data.events", &d.events), ("data.customers", &d.customers)] {
                if !p.is_file() {
                    return err(key, format!("{} does not exist", p.display()));
                }
            }
            if let Some(h) = d.horizon {
                if self.holdout_days >= h {
                    return err(
                        "holdout_days",
                        format!("{} must be smaller than the horizon {h}", self.holdout_days),
                    );
                }
            }
        }
        if let Some(p) = &self.dashboard.draws {
            if !p.is_file() {
                return err("dashboard.draws", format!("{} does not exist", p.display()));
            }
        }
        self.hmc.validate().or_else(|e| err("hmc", e.to_string()))?;
        if let SimulateConfig::Gppm(d) = &self.simulate {
            d.validate().or_else(|e| err("simulate.gppm", e.to_string()))?;
        }
        if let SimulateConfig::Bgnbd(b) = &self.simulate {
            b.params
                .validate()
                .or_else(|e| err("simulate.bgnbd.params", e.to_string()))?;
        }
        if self.compare.bgnbd_replicates == 0 {
            return err("compare.bgnbd_replicates", "must be >= 1".into());
        }
        Ok(())
    }

    pub fn data(&self) -> CliResult<&DataConfig> {
        self.data.as_ref().ok_or_else(|| CliError::Config {
            path: "data".into(),
            message: "this command needs data.events and data.customers".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_reports_its_path() {
        let e = parse_config(r#"{"hmc": {"chains": 2, "warmpu_iters": 5}}"#).unwrap_err();
        match e {
            CliError::Config { path, message } => {
                assert_eq!(path, "hmc.warmpu_iters");
                assert!(message.contains("unknown field"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.holdout_days, 30);
    }

    #[test]
    fn overrides_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("e.csv"), "").unwrap();
        std::fs::write(dir.path().join("c.csv"), "").unwrap();
        let cfg_path = dir.path().join("run.json");
        std::fs::write(
            &cfg_path,
            r#"{"data": {"events": "e.csv", "customers": "c.csv", "horizon": 40}, "seed": 3}"#,
        )
        .unwrap();
        let ov = Overrides {
            seed: Some(9),
            holdout_days: Some(10),
            out: None,
        };
        let c = RunConfig::load(&cfg_path, &ov).unwrap();
        assert_eq!(c.hmc.seed, 9);
        assert_eq!(c.holdout_days, 10);
        assert_eq!(c.data.unwrap().events, dir.path().join("e.csv"));
        assert_eq!(c.out, dir.path().join("out"));

        let ov = Overrides {
            holdout_days: Some(40),
            ..Overrides::default()
        };
        assert!(
            matches!(RunConfig::load(&cfg_path, &ov), Err(CliError::Config { path, .. }) if path == "holdout_days")
        );
    }
}
