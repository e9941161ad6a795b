//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the binary exits non-zero when any of them fails.
//!
//! `GPPM_ACCEPTANCE_ONLY=3,7` restricts the run to the listed criteria.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use gppm_core::benchmarks::{
    bgnbd_daily_counts, bgnbd_fit, bgnbd_loglik, bgnbd_simulate, rfm_from_panel, BgnbdParams, RfmSummary,
};
use gppm_core::gp::{gp_conditional, GpComponent, MeanFunction};
use gppm_core::inference::{fit_gppm, hmc_sample, rhat, GppmFit, HmcConfig, LogDensity};
use gppm_core::kernels::{cyclic_kernel, se_kernel, CyclicKernelParams, KernelSpec, SeKernelParams};
use gppm_core::model::{GppmModel, ModelSpec, SpendPanel};
use gppm_core::predict::{
    detect_events, holdout_split, local_max_near, mape, posterior_predictive, rmse, summarize_curves, CountBasis,
    MuteMask, PredictConfig, SplitMetrics,
};
use gppm_core::simulate::{gppm_simulate, CalendarLevel, CyclicLevel, SimDesign, Spike};
use gppm_core::stats::{autocorrelation, correlation};
use gppm_core::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

/// Sampler settings shared by the model fits below.
fn hmc(chains: usize, seed: u64) -> HmcConfig {
    HmcConfig {
        warmup_iters: 300,
        sampling_iters: 200,
        chains,
        max_leapfrog: 127,
        seed,
        ..HmcConfig::default()
    }
}

/// Full model for single-channel simulated panels, whose install and first
/// spend days coincide.
fn simulated_spec() -> ModelSpec {
    ModelSpec {
        install_effects: false,
        ..ModelSpec::full()
    }
}

fn holdout_mape(m: &SplitMetrics) -> f64 {
    m.holdout.map_or(f64::NAN, |h| h.mape)
}

// 1 -------------------------------------------------------------------------

fn fhl() -> BgnbdParams {
    BgnbdParams::new(0.243, 4.414, 0.793, 2.426).unwrap()
}

fn crit_bgnbd_cross_fit() -> Result<Outcome> {
    let sim = bgnbd_simulate(&fhl(), 1000, 30, 100, 11)?;
    let split = holdout_split(&sim.panel, 50)?;
    let spec = ModelSpec {
        install_effects: false,
        ..ModelSpec::reduced()
    };
    let fit = fit_gppm(&split.training, spec, &hmc(1, 11))?;
    let cfg = PredictConfig {
        horizon: split.evaluation.horizon,
        seed: 11,
        ..PredictConfig::default()
    };
    let counts = posterior_predictive(&fit.model, &fit.draws, &split.training, &MuteMask::none(), &cfg)?;
    let m = split.metrics(&counts.medians(), CountBasis::AllSpends)?;
    let (train, hold) = (m.training.mape, holdout_mape(&m));
    Ok(Outcome::new(
        train <= 0.15 && hold <= 0.20,
        format!(
            "training MAPE {train:.3} (<= 0.15), holdout MAPE {hold:.3} (<= 0.20), overall {:.3}",
            m.overall.mape
        ),
    ))
}

// 2 and 11 ------------------------------------------------------------------

fn design(cyc: CyclicLevel, cal: CalendarLevel, seed: u64) -> SimDesign {
    SimDesign {
        cyclic_level: cyc,
        calendar_level: cal,
        n_customers: 1000,
        horizon: 100,
        peak_scale: 0.1,
        seed,
        ..SimDesign::default()
    }
}

const TRAIN_DAYS: u32 = 70;

fn bgnbd_holdout(panel: &SpendPanel, seed: u64) -> Result<f64> {
    let split = holdout_split(panel, panel.horizon - TRAIN_DAYS)?;
    let fit = bgnbd_fit(&rfm_from_panel(&split.training), None, Default::default())?;
    let pred = bgnbd_daily_counts(
        &fit.params,
        &split.training,
        split.evaluation.horizon,
        50,
        CountBasis::AllSpends,
        seed,
        Default::default(),
    )?;
    Ok(holdout_mape(&split.metrics(&pred, CountBasis::AllSpends)?))
}

struct PeakcalRun {
    bgnbd_plain: f64,
    bgnbd_peak: f64,
    gppm_peak: f64,
    gppm_holdout_series: Vec<f64>,
}

fn peakcal_run() -> Result<PeakcalRun> {
    let plain = gppm_simulate(&design(CyclicLevel::Nocyc, CalendarLevel::Nocal, 21))?.panel;
    let peak = gppm_simulate(&design(CyclicLevel::Strongcyc, CalendarLevel::Peakcal, 22))?.panel;
    let bgnbd_plain = bgnbd_holdout(&plain, 21)?;
    let bgnbd_peak = bgnbd_holdout(&peak, 22)?;
    let split = holdout_split(&peak, peak.horizon - TRAIN_DAYS)?;
    let fit = fit_gppm(&split.training, simulated_spec(), &hmc(1, 22))?;
    let cfg = PredictConfig {
        horizon: split.evaluation.horizon,
        seed: 22,
        ..PredictConfig::default()
    };
    let counts = posterior_predictive(&fit.model, &fit.draws, &split.training, &MuteMask::none(), &cfg)?;
    let pred = counts.medians();
    let gppm_peak = holdout_mape(&split.metrics(&pred, CountBasis::AllSpends)?);
    Ok(PeakcalRun {
        bgnbd_plain,
        bgnbd_peak,
        gppm_peak,
        gppm_holdout_series: pred[TRAIN_DAYS as usize..].to_vec(),
    })
}

fn crit_bgnbd_fails_on_peak(r: &PeakcalRun) -> Outcome {
    let ratio = r.bgnbd_peak / r.bgnbd_plain;
    Outcome::new(
        ratio >= 2.0 && r.gppm_peak <= 0.5 * r.bgnbd_peak,
        format!(
            "BG/NBD holdout MAPE {:.3} peak vs {:.3} plain (ratio {ratio:.2} >= 2); GPPM {:.3} (<= {:.3})",
            r.bgnbd_peak,
            r.bgnbd_plain,
            r.gppm_peak,
            0.5 * r.bgnbd_peak
        ),
    )
}

fn crit_cyclic_forecast(r: &PeakcalRun) -> Outcome {
    let ac = autocorrelation(&r.gppm_holdout_series, 7);
    Outcome::new(
        ac >= 0.5,
        format!("lag-7 autocorrelation of holdout forecast {ac:.3} (>= 0.5)"),
    )
}

// 3 and 7 -------------------------------------------------------------------

fn recovery_fit() -> Result<(GppmFit, SimDesign)> {
    let d = SimDesign {
        cyclic_level: CyclicLevel::Strongcyc,
        calendar_level: CalendarLevel::NonlinDeccal,
        n_customers: 500,
        horizon: 100,
        seed: 31,
        ..SimDesign::default()
    };
    let sim = gppm_simulate(&d)?;
    Ok((fit_gppm(&sim.panel, simulated_spec(), &hmc(2, 31))?, d))
}

fn crit_recovery(fit: &GppmFit, d: &SimDesign) -> Result<Outcome> {
    let curves = summarize_curves(&fit.model, &fit.draws, 400)?;
    let get = |n: &str| curves.iter().find(|c| c.name == n).expect("curve present");
    let cyc = &get("cyclic").median;
    let t: Vec<u32> = (1..=d.horizon).collect();
    let fitted_cyc: Vec<f64> = t.iter().map(|&t| cyc[((t - 1) % 7) as usize]).collect();
    let true_cyc: Vec<f64> = t.iter().map(|&t| d.cyclic(t)).collect();
    let true_trend: Vec<f64> = t.iter().map(|&t| d.calendar_trend(t)).collect();
    let c_cyc = correlation(&fitted_cyc, &true_cyc);
    let c_long = correlation(&get("long_run").median, &true_trend);
    let rh = fit.hyperparameter_rhat()?;
    let (worst, max_rhat) = rh
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(n, r)| (n.clone(), *r))
        .unwrap_or_default();
    Ok(Outcome::new(
        c_cyc >= 0.9 && c_long >= 0.8 && max_rhat < 1.1,
        format!(
            "cyclic corr {c_cyc:.3} (>= 0.9), long-run corr {c_long:.3} (>= 0.8), max R-hat {max_rhat:.3} at {worst} (< 1.1), {} divergent",
            fit.draws.divergence_count()
        ),
    ))
}

fn crit_identification(fit: &GppmFit) -> Outcome {
    match fit.check_identification() {
        Ok(n) => Outcome::new(n == fit.draws.n_draws() && n > 0, format!("{n} stored draws checked")),
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

// 4 -------------------------------------------------------------------------

fn crit_gradient_gate() -> Result<Outcome> {
    let sim = gppm_simulate(&SimDesign {
        cyclic_level: CyclicLevel::Strongcyc,
        calendar_level: CalendarLevel::NonlinDeccal,
        n_customers: 20,
        horizon: 30,
        acquisition_window: 10,
        seed: 41,
        ..SimDesign::default()
    })?;
    let model = GppmModel::new(&sim.panel, ModelSpec::full())?;
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let theta: Vec<f64> = (0..model.dim())
            .map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let (_, g) = model.grad_log_posterior(&theta)?;
        for (k, gk) in g.iter().enumerate() {
            let fd = richardson(&model, &theta, k)?;
            let err = (gk - fd).abs() / gk.abs().max(fd.abs()).max(1e-300);
            worst = worst.max(err);
        }
    }
    Ok(Outcome::new(
        worst < 1e-5,
        format!(
            "worst relative error {worst:.2e} over 20 points x {} coordinates (< 1e-5)",
            model.dim()
        ),
    ))
}

/// Fourth-order central difference.
fn richardson(model: &GppmModel, theta: &[f64], k: usize) -> Result<f64> {
    let h = 1e-3;
    let at = |s: f64| {
        let mut t = theta.to_vec();
        t[k] += s;
        model.log_posterior(&t)
    };
    Ok((8.0 * (at(h)? - at(-h)?) - (at(2.0 * h)? - at(-2.0 * h)?)) / (12.0 * h))
}

// 5 -------------------------------------------------------------------------

/// Conditions the joint Gaussian over `[grid; new]` through an explicit
/// inverse of the grid block.
fn brute_force_conditional(c: &GpComponent, new: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let all: Vec<f64> = c.grid.iter().chain(new).copied().collect();
    let n = c.grid.len();
    let m = new.len();
    let joint = DMatrix::from_fn(n + m, n + m, |i, j| c.kernel.eval(all[i], all[j]));
    let kxx = joint.view((0, 0), (n, n)).into_owned();
    let ksx = joint.view((n, 0), (m, n)).into_owned();
    let kss = joint.view((n, n), (m, m)).into_owned();
    let inv = kxx.try_inverse().expect("invertible grid block");
    let mean_at = |x: f64| c.mean.at(x).unwrap();
    let resid = DVector::from_fn(n, |i, _| c.values[i] - mean_at(c.grid[i]));
    let mean = DVector::from_fn(m, |i, _| mean_at(new[i])) + &ksx * &inv * resid;
    let cov = kss - &ksx * &inv * ksx.transpose();
    (mean, cov)
}

fn random_component(rng: &mut ChaCha8Rng) -> GpComponent {
    let n = rng.gen_range(1..=8);
    let mut grid = Vec::with_capacity(n);
    let mut x = rng.gen_range(1.0..3.0);
    for _ in 0..n {
        grid.push(x);
        x += rng.gen_range(0.5..3.0);
    }
    let eta = rng.gen_range(0.2..2.0);
    let rho = rng.gen_range(0.3..2.0);
    let kernel = if rng.gen_bool(0.5) {
        KernelSpec::Se(SeKernelParams::new(eta, rho).unwrap())
    } else {
        KernelSpec::sum(vec![
            KernelSpec::Se(SeKernelParams::new(eta, rho).unwrap()),
            KernelSpec::Cyclic(CyclicKernelParams::new(0.5 * eta, 1.0, 7.0).unwrap()),
        ])
        .unwrap()
    };
    let mean = match rng.gen_range(0..3) {
        0 => MeanFunction::Zero,
        1 => MeanFunction::Constant {
            level: rng.gen_range(-2.0..2.0),
        },
        _ => MeanFunction::PowerDecay {
            scale: rng.gen_range(0.1..1.0),
            exponent: rng.gen_range(0.1..1.0),
        },
    };
    let values = (0..n).map(|_| eta * rng.sample::<f64, _>(StandardNormal)).collect();
    GpComponent::new(grid, values, mean, kernel).unwrap()
}

fn crit_gp_oracle() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut worst = 0.0f64;
    let mut worst_interp = 0.0f64;
    for _ in 0..100 {
        let c = random_component(&mut rng);
        let new: Vec<f64> = (0..rng.gen_range(1..=6)).map(|_| rng.gen_range(1.0..30.0)).collect();
        let (mean, cov) = gp_conditional(&c, &new, 0.0)?;
        let (om, oc) = brute_force_conditional(&c, &new);
        worst = worst.max((mean - om).amax()).max((cov - oc).amax());
        let (_, at_grid) = gp_conditional(&c, &c.grid, 1e-10)?;
        worst_interp = worst_interp.max(at_grid.diagonal().amax());
    }
    Ok(Outcome::new(
        worst < 1e-8 && worst_interp < 1e-6,
        format!("max deviation from joint conditioning {worst:.2e} (< 1e-8), max variance at training inputs {worst_interp:.2e} (< 1e-6)"),
    ))
}

// 6 -------------------------------------------------------------------------

fn run_property<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> std::result::Result<(), TestCaseError>,
) -> std::result::Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn se_strategy() -> impl Strategy<Value = SeKernelParams> {
    (0.01f64..10.0, 0.1f64..100.0).prop_map(|(a, l)| SeKernelParams::new(a, l).unwrap())
}

fn cyclic_strategy() -> impl Strategy<Value = CyclicKernelParams> {
    (0.01f64..10.0, 0.05f64..10.0).prop_map(|(a, l)| CyclicKernelParams::weekly(a, l).unwrap())
}

fn crit_kernel_properties() -> Outcome {
    let x = || -1e3f64..1e3;
    let results = [
        run_property(
            "symmetry",
            (se_strategy(), cyclic_strategy(), x(), x()),
            |(se, cy, a, b)| {
                prop_assert_eq!(se_kernel(a, b, &se).unwrap(), se_kernel(b, a, &se).unwrap());
                prop_assert!(
                    (cyclic_kernel(a, b, &cy).unwrap() - cyclic_kernel(b, a, &cy).unwrap()).abs()
                        <= 1e-12 * cy.amplitude.powi(2)
                );
                Ok(())
            },
        ),
        run_property(
            "stationarity",
            (se_strategy(), cyclic_strategy(), x(), x(), -1e2f64..1e2),
            |(se, cy, a, b, s)| {
                let tol = 1e-9;
                let d = se_kernel(a + s, b + s, &se).unwrap() - se_kernel(a, b, &se).unwrap();
                prop_assert!(d.abs() <= tol * se.amplitude.powi(2), "se shift {}", d);
                let d = cyclic_kernel(a + s, b + s, &cy).unwrap() - cyclic_kernel(a, b, &cy).unwrap();
                prop_assert!(d.abs() <= tol * cy.amplitude.powi(2), "cyclic shift {}", d);
                Ok(())
            },
        ),
        run_property(
            "bounds",
            (se_strategy(), cyclic_strategy(), x(), x()),
            |(se, cy, a, b)| {
                let v = se_kernel(a, b, &se).unwrap();
                prop_assert!((0.0..=se.amplitude.powi(2)).contains(&v));
                prop_assert_eq!(se_kernel(a, a, &se).unwrap(), se.amplitude.powi(2));
                let v = cyclic_kernel(a, b, &cy).unwrap();
                prop_assert!(v > 0.0 && v <= cy.amplitude.powi(2));
                prop_assert!(v >= cy.amplitude.powi(2) * (-1.0 / cy.length_scale.powi(2)).exp() * (1.0 - 1e-12));
                Ok(())
            },
        ),
        run_property(
            "period 7",
            (cyclic_strategy(), -100i32..100, -100i32..100, -20i32..20),
            |(cy, a, b, k)| {
                let (a, b) = (a as f64, b as f64);
                let shifted = cyclic_kernel(a + 7.0 * k as f64, b, &cy).unwrap();
                prop_assert!((shifted - cyclic_kernel(a, b, &cy).unwrap()).abs() <= 1e-12 * cy.amplitude.powi(2));
                prop_assert!(
                    (cyclic_kernel(a, a + 7.0 * k as f64, &cy).unwrap() - cy.amplitude.powi(2)).abs()
                        <= 1e-12 * cy.amplitude.powi(2)
                );
                Ok(())
            },
        ),
        run_property(
            "sum",
            (se_strategy(), cyclic_strategy(), se_strategy(), x(), x()),
            |(se, cy, se2, a, b)| {
                let children = vec![KernelSpec::Se(se), KernelSpec::Cyclic(cy), KernelSpec::Se(se2)];
                let sum = KernelSpec::sum(children).unwrap();
                let direct =
                    se_kernel(a, b, &se).unwrap() + cyclic_kernel(a, b, &cy).unwrap() + se_kernel(a, b, &se2).unwrap();
                prop_assert!((sum.eval(a, b) - direct).abs() <= 1e-12 * sum.variance());
                prop_assert_eq!(
                    sum.variance(),
                    se.amplitude.powi(2) + cy.amplitude.powi(2) + se2.amplitude.powi(2)
                );
                Ok(())
            },
        ),
    ];
    let failures: Vec<String> = results.into_iter().filter_map(|r| r.err()).collect();
    if failures.is_empty() {
        Outcome::new(true, "symmetry, stationarity, bounds, period 7, sum: 10000 cases each")
    } else {
        Outcome::new(false, failures.join("; "))
    }
}

// 8 -------------------------------------------------------------------------

struct Gaussian {
    mean: Vec<f64>,
    precision: DMatrix<f64>,
}

impl LogDensity for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let r = DVector::from_fn(x.len(), |i, _| x[i] - self.mean[i]);
        let pr = &self.precision * &r;
        for (g, v) in grad.iter_mut().zip(pr.iter()) {
            *g = -v;
        }
        Ok(-0.5 * r.dot(&pr))
    }
}

fn correlated_gaussian() -> (Vec<f64>, DMatrix<f64>) {
    let d = 10;
    let mean: Vec<f64> = (0..d).map(|i| i as f64 - 4.5).collect();
    let sd: Vec<f64> = (0..d).map(|i| 0.5 + 0.25 * i as f64).collect();
    let cov = DMatrix::from_fn(d, d, |i, j| sd[i] * sd[j] * 0.6f64.powi((i as i32 - j as i32).abs()));
    (mean, cov)
}

fn crit_sampler_calibration() -> Result<Outcome> {
    let (mean, cov) = correlated_gaussian();
    let target = Gaussian {
        mean: mean.clone(),
        precision: cov.clone().try_inverse().expect("positive definite"),
    };
    let cfg = HmcConfig {
        warmup_iters: 1000,
        sampling_iters: 1000,
        chains: 4,
        seed: 81,
        ..HmcConfig::default()
    };
    let draws = hmc_sample(&target, (0..10).map(|i| format!("x{i}")).collect(), &cfg, None)?;
    let n = draws.n_draws() as f64;
    let d = mean.len();
    let mut m = vec![0.0; d];
    for x in draws.iter() {
        for (a, v) in m.iter_mut().zip(x) {
            *a += v / n;
        }
    }
    let mut c = DMatrix::zeros(d, d);
    for x in draws.iter() {
        let r = DVector::from_fn(d, |i, _| x[i] - m[i]);
        c += &r * r.transpose() / (n - 1.0);
    }
    let mean_err = m.iter().zip(&mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let cov_err = (&c - &cov).norm() / cov.norm();
    let rh: Vec<f64> = (0..d).map(|k| rhat(&draws.param_chains(k))).collect::<Result<_>>()?;
    let (lo, hi) = rh
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
    Ok(Outcome::new(
        mean_err <= 0.1 && cov_err < 0.2 && lo >= 0.99 && hi <= 1.05,
        format!("max mean error {mean_err:.3} (<= 0.1), covariance Frobenius error {:.1}% (< 20%), R-hat in [{lo:.3}, {hi:.3}]", 100.0 * cov_err),
    ))
}

// 9 -------------------------------------------------------------------------

fn crit_event_detection() -> Result<Outcome> {
    let spike_day = 40;
    let sim = gppm_simulate(&SimDesign {
        cyclic_level: CyclicLevel::Nocyc,
        calendar_level: CalendarLevel::Nocal,
        n_customers: 1000,
        horizon: 60,
        spikes: vec![Spike {
            day: spike_day,
            size: 1.5,
        }],
        seed: 91,
        ..SimDesign::default()
    })?;
    let cutoff = spike_day + 2;
    let fits = detect_events(&sim.panel, &[cutoff], &simulated_spec(), &hmc(1, 91), 400)?;
    let curves = fits.into_iter().next().expect("one cutoff").outcome?;
    let short = &curves.short_run.median;
    let peak = short
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i + 1);
    Ok(Outcome::new(
        local_max_near(short, spike_day, 1),
        format!(
            "cutoff day {cutoff}: short-run local max near day {spike_day} ({}), global max on day {peak}",
            local_max_near(short, spike_day, 1)
        ),
    ))
}

// 10 ------------------------------------------------------------------------

fn crit_metrics_and_bgnbd() -> Result<Outcome> {
    let actual = [10.0, 20.0, 40.0];
    let pred = [12.0, 15.0, 40.0];
    let m = mape(&actual, &pred)?;
    let r = rmse(&actual, &pred)?;
    let m_hand = (0.2 + 0.25 + 0.0) / 3.0;
    let r_hand = (29.0f64 / 3.0).sqrt();
    let metrics_ok = (m - m_hand).abs() <= 1e-15 && (r - r_hand).abs() <= 1e-15;

    let p = fhl();
    let mut closed_worst = 0.0f64;
    for t in [0.5, 3.0, 17.25, 80.0] {
        let s = RfmSummary::new(0, 0.0, t)?;
        let closed = p.r * (p.alpha / (p.alpha + t)).ln();
        closed_worst = closed_worst.max((bgnbd_loglik(&p, &s) - closed).abs());
    }

    let truth = BgnbdParams::new(0.8, 6.0, 0.6, 2.5)?;
    let sim = bgnbd_simulate(&truth, 2000, 30, 100, 2024)?;
    let fit = bgnbd_fit(&sim.summaries, None, Default::default())?;
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    let errs = [
        rel(fit.params.r, truth.r),
        rel(fit.params.alpha, truth.alpha),
        rel(fit.params.a, truth.a),
        rel(fit.params.b, truth.b),
    ];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Ok(Outcome::new(
        metrics_ok && closed_worst <= 1e-12 && worst <= 0.25,
        format!(
            "mape {m} rmse {r} vs hand values; x=0 closed form max error {closed_worst:.1e}; recovery errors r {:.3} alpha {:.3} a {:.3} b {:.3} (<= 0.25)",
            errs[0], errs[1], errs[2], errs[3]
        ),
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let only: Option<Vec<u32>> = std::env::var("GPPM_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));
    let mut failed = Vec::new();
    let mut report = |n: u32, name: &str, start: Instant, r: Result<Outcome>| {
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed.push(n);
        }
        let tag = if pass { "PASS" } else { "FAIL" };
        say(&format!("criterion {n:>2} {tag} {name} [{secs:.1}s]: {detail}"));
    };

    if wanted(4) {
        let t = Instant::now();
        report(4, "gradient gate", t, crit_gradient_gate());
    }
    if wanted(5) {
        let t = Instant::now();
        report(5, "GP conditional oracle", t, crit_gp_oracle());
    }
    if wanted(6) {
        let t = Instant::now();
        report(6, "kernel properties", t, Ok(crit_kernel_properties()));
    }
    if wanted(8) {
        let t = Instant::now();
        report(8, "sampler calibration", t, crit_sampler_calibration());
    }
    if wanted(10) {
        let t = Instant::now();
        report(10, "metrics and BG/NBD closed forms", t, crit_metrics_and_bgnbd());
    }
    if wanted(1) {
        let t = Instant::now();
        report(1, "BG/NBD data, reduced model", t, crit_bgnbd_cross_fit());
    }
    if wanted(3) || wanted(7) {
        let t = Instant::now();
        match recovery_fit() {
            Ok((fit, d)) => {
                if wanted(3) {
                    report(3, "curve recovery", t, crit_recovery(&fit, &d));
                }
                if wanted(7) {
                    report(
                        7,
                        "identification on stored draws",
                        Instant::now(),
                        Ok(crit_identification(&fit)),
                    );
                }
            }
            Err(e) => {
                let msg = e.to_string();
                if wanted(3) {
                    report(3, "curve recovery", t, Err(e));
                }
                if wanted(7) {
                    report(
                        7,
                        "identification on stored draws",
                        t,
                        Ok(Outcome::new(false, format!("fit failed: {msg}"))),
                    );
                }
            }
        }
    }
    if wanted(2) || wanted(11) {
        let t = Instant::now();
        match peakcal_run() {
            Ok(r) => {
                if wanted(2) {
                    report(2, "BG/NBD under a calendar peak", t, Ok(crit_bgnbd_fails_on_peak(&r)));
                }
                if wanted(11) {
                    report(
                        11,
                        "weekly pattern in forecasts",
                        Instant::now(),
                        Ok(crit_cyclic_forecast(&r)),
                    );
                }
            }
            Err(e) => {
                let msg = e.to_string();
                if wanted(2) {
                    report(2, "BG/NBD under a calendar peak", t, Err(e));
                }
                if wanted(11) {
                    report(
                        11,
                        "weekly pattern in forecasts",
                        t,
                        Ok(Outcome::new(false, format!("fit failed: {msg}"))),
                    );
                }
            }
        }
    }
    if wanted(9) {
        let t = Instant::now();
        report(9, "event detection", t, crit_event_detection());
    }

    if failed.is_empty() {
        say("acceptance: all criteria passed");
    } else {
        say(&format!("acceptance: failed criteria {failed:?}"));
        std::process::exit(1);
    }
}
