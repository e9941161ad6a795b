use std::path::{Path, PathBuf};

use gppm_core::benchmarks::{bgnbd_daily_counts, bgnbd_fit, bgnbd_simulate, loglogistic_fit, rfm_from_panel};
use gppm_core::inference::{fit_gppm, GppmFit};
use gppm_core::io::{
    load_draws, load_panel, parameter_table, render_dashboard, save_draws, write_csv, write_panel, CountRow,
    DashboardSpec, FitRow,
};
use gppm_core::model::{GppmModel, ModelSpec, SpendPanel};
use gppm_core::predict::{
    detect_events, gppm_holdout_forecast, holdout_split, summarize_curves, CurveSummary, HoldoutSplit,
};
use gppm_core::simulate::gppm_simulate;
use serde::Serialize;
use serde_json::json;

use crate::config::{RunConfig, SimulateConfig};
use crate::error::{CliError, CliResult};

fn out_file(cfg: &RunConfig, name: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(&cfg.out)?;
    Ok(cfg.out.join(name))
}

fn write_json(path: &Path, v: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).map_err(gppm_core::GppmError::from)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn panel(cfg: &RunConfig) -> CliResult<SpendPanel> {
    let d = cfg.data()?;
    let loaded = load_panel(&d.events, &d.customers, d.horizon)?;
    if loaded.duplicate_rows > 0 {
        log::warn!("{} duplicate spend rows collapsed", loaded.duplicate_rows);
    }
    Ok(loaded.panel)
}

/// Install-day effects duplicate the first-spend effects when every
/// customer spends on the install day; they are switched off in that case.
pub fn effective_spec(spec: &ModelSpec, panel: &SpendPanel) -> ModelSpec {
    let mut spec = spec.clone();
    let aliased = panel.customers.iter().all(|c| c.install_day == c.first_spend_day);
    if spec.install_effects && spec.first_spend_effects && aliased {
        log::warn!("install effects disabled: install and first-spend days coincide for every customer");
        spec.install_effects = false;
    }
    spec
}

fn metadata(spec: &ModelSpec, horizon: u32, command: &str) -> serde_json::Value {
    json!({ "command": command, "horizon": horizon, "model": spec })
}

fn fit_summary(fit: &GppmFit) -> serde_json::Value {
    let d = &fit.draws;
    let max_rhat = fit
        .hyperparameter_rhat()
        .ok()
        .and_then(|v| v.iter().map(|(_, r)| *r).reduce(f64::max));
    json!({
        "customers": fit.model.structure().n_customers,
        "observations": fit.model.n_observations(),
        "parameters": fit.model.dim(),
        "chains": d.n_chains(),
        "draws": d.n_draws(),
        "divergent": d.divergence_count(),
        "step_sizes": d.chains.iter().map(|c| c.step_size).collect::<Vec<_>>(),
        "max_hyperparameter_rhat": max_rhat,
    })
}

/// Hyperparameters and fixed effects, in layout order.
fn reported_indices(fit: &GppmFit) -> Vec<usize> {
    let l = fit.model.layout();
    let mut idx = l.hyperparameter_indices();
    idx.extend(l.beta.clone());
    idx.extend(l.gamma.clone());
    idx.sort_unstable();
    idx.dedup();
    idx
}

fn write_fit_outputs(cfg: &RunConfig, fit: &GppmFit, horizon: u32, command: &str) -> CliResult<()> {
    let spec = fit.model.spec().clone();
    save_draws(
        &out_file(cfg, "draws.bin")?,
        &fit.draws,
        metadata(&spec, horizon, command),
    )?;
    write_csv(
        &out_file(cfg, "parameters.csv")?,
        &parameter_table(&fit.draws, &reported_indices(fit)),
    )?;
    write_json(&out_file(cfg, "fit.json")?, &fit_summary(fit))?;
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> CliResult<()> {
    let (panel, truth) = match &cfg.simulate {
        SimulateConfig::Gppm(d) => {
            let sim = gppm_simulate(d)?;
            (sim.panel, json!({ "design": d, "truth": sim.truth }))
        }
        SimulateConfig::Bgnbd(b) => {
            let seed = cfg.seed.unwrap_or(1);
            let sim = bgnbd_simulate(&b.params, b.n_customers, b.acquisition_days, b.horizon, seed)?;
            (
                sim.panel,
                json!({ "params": b.params, "seed": seed, "summaries": sim.summaries }),
            )
        }
    };
    write_panel(&panel, &out_file(cfg, "events.csv")?, &out_file(cfg, "customers.csv")?)?;
    write_json(&out_file(cfg, "truth.json")?, &truth)?;
    println!(
        "simulated {} customers over {} days into {}",
        panel.len(),
        panel.horizon,
        cfg.out.display()
    );
    Ok(())
}

pub fn fit(cfg: &RunConfig) -> CliResult<()> {
    let panel = panel(cfg)?;
    let spec = effective_spec(&cfg.model, &panel);
    let fit = fit_gppm(&panel, spec, &cfg.hmc)?;
    write_fit_outputs(cfg, &fit, panel.horizon, "fit")?;
    println!(
        "fit {} parameters: {} draws, {} divergent; outputs in {}",
        fit.model.dim(),
        fit.draws.n_draws(),
        fit.draws.divergence_count(),
        cfg.out.display()
    );
    Ok(())
}

fn split(cfg: &RunConfig) -> CliResult<HoldoutSplit> {
    let panel = panel(cfg)?;
    holdout_split(&panel, cfg.holdout_days).map_err(|e| CliError::Config {
        path: "holdout_days".into(),
        message: e.to_string(),
    })
}

fn count_rows(split: &HoldoutSplit, predicted: &[(f64, f64, f64)], cfg: &RunConfig) -> Vec<CountRow> {
    let actual = split.actual(cfg.predict.count_basis);
    predicted
        .iter()
        .enumerate()
        .map(|(i, &(median, lower, upper))| CountRow {
            day: i as u32 + 1,
            actual: Some(actual[i] as u32),
            median,
            lower,
            upper,
            holdout: i as u32 >= split.train_days,
        })
        .collect()
}

pub fn forecast(cfg: &RunConfig) -> CliResult<()> {
    let split = split(cfg)?;
    let spec = effective_spec(&cfg.model, &split.training);
    let (fit, counts) = gppm_holdout_forecast(&split, spec, &cfg.hmc, &cfg.predict)?;
    write_fit_outputs(cfg, &fit, split.train_days, "forecast")?;
    let bands: Vec<(f64, f64, f64)> = counts.days.iter().map(|d| (d.median, d.lower, d.upper)).collect();
    write_csv(&out_file(cfg, "forecast.csv")?, &count_rows(&split, &bands, cfg))?;
    let m = split.metrics(&counts.medians(), cfg.predict.count_basis)?;
    let row = FitRow::new("gppm", &m);
    write_csv(&out_file(cfg, "metrics.csv")?, std::slice::from_ref(&row))?;
    write_json(&out_file(cfg, "metrics.json")?, &row)?;
    println!(
        "holdout of {} days: MAPE {:.3}, RMSE {:.2}",
        cfg.holdout_days,
        m.holdout.map_or(f64::NAN, |h| h.mape),
        m.holdout.map_or(f64::NAN, |h| h.rmse)
    );
    Ok(())
}

#[derive(Serialize)]
struct CompareCountRow {
    day: u32,
    actual: u32,
    model: String,
    predicted: f64,
}

pub fn compare(cfg: &RunConfig) -> CliResult<()> {
    let split = split(cfg)?;
    let basis = cfg.predict.count_basis;
    let horizon = split.evaluation.horizon;
    let full = effective_spec(&cfg.model, &split.training);
    let variants = [
        ("gppm", full.clone()),
        (
            "rgppm",
            ModelSpec {
                long_run: false,
                short_run: false,
                cyclic: false,
                ..full.clone()
            },
        ),
        (
            "rgppm_c",
            ModelSpec {
                long_run: false,
                short_run: false,
                cyclic: true,
                ..full.clone()
            },
        ),
    ];
    let mut series: Vec<(String, Vec<f64>)> = Vec::new();
    for (name, spec) in variants {
        log::info!("fitting {name}");
        let (_, counts) = gppm_holdout_forecast(&split, spec, &cfg.hmc, &cfg.predict)?;
        series.push((name.into(), counts.medians()));
    }
    log::info!("fitting bgnbd");
    let bg = bgnbd_fit(&rfm_from_panel(&split.training), None, cfg.hmc.parallelism)?;
    let seed = cfg.predict.seed;
    series.push((
        "bgnbd".into(),
        bgnbd_daily_counts(
            &bg.params,
            &split.training,
            horizon,
            cfg.compare.bgnbd_replicates,
            basis,
            seed,
            cfg.hmc.parallelism,
        )?,
    ));
    log::info!("fitting log-logistic");
    let ll = loglogistic_fit(&split.training, cfg.compare.loglogistic.clone(), &cfg.hmc)?;
    series.push((
        "loglogistic".into(),
        ll.daily_counts(&split.training, horizon, cfg.predict.max_draws, basis, seed)?,
    ));

    let actual = split.actual(basis);
    let mut rows = Vec::new();
    let mut counts = Vec::new();
    for (name, pred) in &series {
        rows.push(FitRow::new(name, &split.metrics(pred, basis)?));
        counts.extend(pred.iter().enumerate().map(|(i, p)| CompareCountRow {
            day: i as u32 + 1,
            actual: actual[i] as u32,
            model: name.clone(),
            predicted: *p,
        }));
    }
    write_csv(&out_file(cfg, "compare.csv")?, &rows)?;
    write_csv(&out_file(cfg, "compare_counts.csv")?, &counts)?;
    write_json(&out_file(cfg, "bgnbd.json")?, &bg)?;
    for r in &rows {
        println!(
            "{:<12} overall {:.3}  training {:.3}  holdout {:.3}",
            r.model,
            r.overall_mape,
            r.training_mape,
            r.holdout_mape.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct CurveRow<'a> {
    cutoff: u32,
    curve: &'a str,
    day: f64,
    median: f64,
    lower: f64,
    upper: f64,
}

fn curve_rows<'a>(cutoff: u32, c: &'a CurveSummary) -> impl Iterator<Item = CurveRow<'a>> + 'a {
    (0..c.grid.len()).map(move |j| CurveRow {
        cutoff,
        curve: &c.name,
        day: c.grid[j],
        median: c.median[j],
        lower: c.lower[j],
        upper: c.upper[j],
    })
}

pub fn detect(cfg: &RunConfig) -> CliResult<()> {
    let panel = panel(cfg)?;
    if cfg.detect.cutoffs.is_empty() {
        return Err(CliError::Config {
            path: "detect.cutoffs".into(),
            message: "needs at least one cutoff".into(),
        });
    }
    let spec = effective_spec(&cfg.model, &panel);
    let fits = detect_events(&panel, &cfg.detect.cutoffs, &spec, &cfg.hmc, cfg.predict.max_draws)?;
    let mut rows = Vec::new();
    let mut status = Vec::new();
    for f in &fits {
        match &f.outcome {
            Ok(c) => {
                rows.extend(curve_rows(f.cutoff, &c.long_run));
                rows.extend(curve_rows(f.cutoff, &c.short_run));
                status.push(json!({ "cutoff": f.cutoff, "ok": true }));
            }
            Err(e) => status.push(json!({ "cutoff": f.cutoff, "ok": false, "error": e.to_string() })),
        }
    }
    write_csv(&out_file(cfg, "detect.csv")?, &rows)?;
    write_json(&out_file(cfg, "detect.json")?, &status)?;
    let failed = fits.iter().filter(|f| f.outcome.is_err()).count();
    println!(
        "{} refits, {failed} failed; outputs in {}",
        fits.len(),
        cfg.out.display()
    );
    Ok(())
}

pub fn dashboard(cfg: &RunConfig) -> CliResult<()> {
    let path = match &cfg.dashboard.draws {
        Some(p) => p.clone(),
        None => cfg.out.join("draws.bin"),
    };
    let (draws, header) = load_draws(&path)?;
    let spec: ModelSpec = serde_json::from_value(header.metadata["model"].clone()).map_err(|e| CliError::Config {
        path: "dashboard.draws".into(),
        message: format!("draw file lacks a model specification: {e}"),
    })?;
    let horizon = header.metadata["horizon"].as_u64().ok_or_else(|| CliError::Config {
        path: "dashboard.draws".into(),
        message: "draw file lacks the fitted horizon".into(),
    })? as u32;
    let panel = panel(cfg)?;
    let panel = if horizon < panel.horizon {
        panel.truncate(horizon)?
    } else {
        panel
    };
    let model = GppmModel::new(&panel, spec)?;
    if model.dim() != draws.dim() || model.layout().names != draws.names {
        return Err(CliError::Validation(
            "draw file does not match the panel and model".into(),
        ));
    }
    let curves = summarize_curves(&model, &draws, cfg.dashboard.max_draws)?;
    let spec = DashboardSpec {
        panels: curves,
        events: cfg.dashboard.events.clone(),
    };
    let dir = cfg.out.join("dashboard");
    let paths = render_dashboard(&spec, &dir)?;
    println!("wrote {} files into {}", paths.len(), dir.display());
    Ok(())
}
