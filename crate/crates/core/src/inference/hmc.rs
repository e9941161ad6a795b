//! Hamiltonian trajectories, the two transition kernels and the chain driver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::adapt::{DualAveraging, Schedule, VarianceEstimator};
use super::{Algorithm, ChainDraws, HmcConfig, LogDensity, PosteriorDraws};
use crate::error::{GppmError, Result};
use crate::par;

/// Energy error above which a trajectory is flagged divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

const MAX_INIT_TRIES: usize = 100;
const MAX_DIVERGENT_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
struct State {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

impl State {
    fn hamiltonian(&self, inv_mass: &[f64]) -> f64 {
        -self.logp + kinetic(&self.p, inv_mass)
    }
}

fn kinetic(p: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_mass).map(|(p, m)| p * p * m).sum::<f64>()
}

fn sharp(p: &[f64], inv_mass: &[f64]) -> Vec<f64> {
    p.iter().zip(inv_mass).map(|(p, m)| p * m).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// One leapfrog step in place. Numerical failures of the target are reported
/// as `Err` and treated as divergence by the callers.
fn step<T: LogDensity + ?Sized>(target: &T, s: &mut State, eps: f64, inv_mass: &[f64]) -> Result<()> {
    for (p, g) in s.p.iter_mut().zip(&s.grad) {
        *p += 0.5 * eps * g;
    }
    for ((q, p), m) in s.q.iter_mut().zip(&s.p).zip(inv_mass) {
        *q += eps * m * p;
    }
    s.logp = target.log_density_and_gradient(&s.q, &mut s.grad)?;
    for (p, g) in s.p.iter_mut().zip(&s.grad) {
        *p += 0.5 * eps * g;
    }
    if !s.logp.is_finite() || s.p.iter().any(|v| !v.is_finite()) {
        return Err(GppmError::NonFinite("leapfrog state".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeapfrogOutcome {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    /// Final minus initial Hamiltonian, `+inf` on numerical failure.
    pub energy_error: f64,
    pub divergent: bool,
}

/// Integrates `n_steps` leapfrog steps under a diagonal inverse metric.
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    position: &[f64],
    momentum: &[f64],
    step_size: f64,
    n_steps: usize,
    inv_mass: &[f64],
) -> Result<LeapfrogOutcome> {
    let d = target.dim();
    if position.len() != d || momentum.len() != d || inv_mass.len() != d {
        return Err(GppmError::Dimension {
            expected: d,
            got: position.len(),
        });
    }
    let mut grad = vec![0.0; d];
    let logp = target.log_density_and_gradient(position, &mut grad)?;
    let mut s = State {
        q: position.to_vec(),
        p: momentum.to_vec(),
        grad,
        logp,
    };
    let h0 = s.hamiltonian(inv_mass);
    let mut failed = false;
    for _ in 0..n_steps {
        if step(target, &mut s, step_size, inv_mass).is_err() {
            failed = true;
            break;
        }
    }
    let energy_error = if failed {
        f64::INFINITY
    } else {
        s.hamiltonian(inv_mass) - h0
    };
    Ok(LeapfrogOutcome {
        position: s.q,
        momentum: s.p,
        log_density: s.logp,
        energy_error,
        divergent: !(energy_error <= DIVERGENCE_THRESHOLD),
    })
}

#[derive(Debug, Clone, Copy)]
struct Transition {
    accept_stat: f64,
    divergent: bool,
    n_leapfrog: u32,
}

fn draw_momentum(rng: &mut ChaCha8Rng, inv_mass: &[f64]) -> Vec<f64> {
    inv_mass
        .iter()
        .map(|m| rng.sample::<f64, _>(StandardNormal) / m.sqrt())
        .collect()
}

fn jittered_hmc<T: LogDensity + ?Sized>(
    target: &T,
    cur: &mut State,
    eps: f64,
    inv_mass: &[f64],
    max_leapfrog: usize,
    rng: &mut ChaCha8Rng,
) -> Transition {
    let n = rng.gen_range(1..=max_leapfrog);
    cur.p = draw_momentum(rng, inv_mass);
    let h0 = cur.hamiltonian(inv_mass);
    let mut s = cur.clone();
    let mut ok = true;
    for _ in 0..n {
        if step(target, &mut s, eps, inv_mass).is_err() {
            ok = false;
            break;
        }
    }
    let dh = if ok {
        s.hamiltonian(inv_mass) - h0
    } else {
        f64::INFINITY
    };
    let accept = if dh.is_nan() { 0.0 } else { (-dh).exp().min(1.0) };
    if rng.gen::<f64>() < accept {
        *cur = s;
    }
    Transition {
        accept_stat: accept,
        divergent: !(dh <= DIVERGENCE_THRESHOLD),
        n_leapfrog: n as u32,
    }
}

/// Mutable bookkeeping shared across one NUTS tree expansion.
struct Nuts<'a, T: LogDensity + ?Sized> {
    target: &'a T,
    inv_mass: &'a [f64],
    eps: f64,
    h0: f64,
    n_leapfrog: u32,
    sum_metro: f64,
    divergent: bool,
}

/// Edge momenta and momentum sum of a subtree.
struct Edges {
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
    sharp_beg: Vec<f64>,
    sharp_end: Vec<f64>,
    rho: Vec<f64>,
}

fn no_u_turn(sharp_minus: &[f64], sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(sharp_plus, rho) > 0.0 && dot(sharp_minus, rho) > 0.0
}

impl<'a, T: LogDensity + ?Sized> Nuts<'a, T> {
    /// Builds a subtree of `2^depth` steps from the edge state `z`, advancing
    /// `z` to the new edge. Returns the proposal, its log weight and edges, or
    /// `None` if the subtree terminated.
    fn build(&mut self, z: &mut State, depth: u32, sign: f64, rng: &mut ChaCha8Rng) -> Option<(State, f64, Edges)> {
        if depth == 0 {
            self.n_leapfrog += 1;
            let ok = step(self.target, z, sign * self.eps, self.inv_mass).is_ok();
            let h = if ok {
                z.hamiltonian(self.inv_mass)
            } else {
                f64::INFINITY
            };
            let h = if h.is_nan() { f64::INFINITY } else { h };
            if h - self.h0 > DIVERGENCE_THRESHOLD {
                self.divergent = true;
            }
            let log_w = self.h0 - h;
            self.sum_metro += if log_w > 0.0 { 1.0 } else { log_w.exp() };
            if self.divergent {
                return None;
            }
            let s = sharp(&z.p, self.inv_mass);
            let edges = Edges {
                p_beg: z.p.clone(),
                p_end: z.p.clone(),
                sharp_beg: s.clone(),
                sharp_end: s,
                rho: z.p.clone(),
            };
            return Some((z.clone(), log_w, edges));
        }
        let (prop_init, w_init, init) = self.build(z, depth - 1, sign, rng)?;
        let (prop_final, w_final, fin) = self.build(z, depth - 1, sign, rng)?;
        let w = log_add_exp(w_init, w_final);
        let proposal = if w_final > w || rng.gen::<f64>() < (w_final - w).exp() {
            prop_final
        } else {
            prop_init
        };
        let mut rho = init.rho.clone();
        add_assign(&mut rho, &fin.rho);
        let mut persist = no_u_turn(&init.sharp_beg, &fin.sharp_end, &rho);
        let mut ext = init.rho.clone();
        add_assign(&mut ext, &fin.p_beg);
        persist &= no_u_turn(&init.sharp_beg, &fin.sharp_beg, &ext);
        let mut ext = fin.rho.clone();
        add_assign(&mut ext, &init.p_end);
        persist &= no_u_turn(&init.sharp_end, &fin.sharp_end, &ext);
        if !persist {
            return None;
        }
        Some((
            proposal,
            w,
            Edges {
                p_beg: init.p_beg,
                p_end: fin.p_end,
                sharp_beg: init.sharp_beg,
                sharp_end: fin.sharp_end,
                rho,
            },
        ))
    }
}

fn nuts<T: LogDensity + ?Sized>(
    target: &T,
    cur: &mut State,
    eps: f64,
    inv_mass: &[f64],
    max_depth: u32,
    rng: &mut ChaCha8Rng,
) -> Transition {
    cur.p = draw_momentum(rng, inv_mass);
    let mut ctx = Nuts {
        target,
        inv_mass,
        eps,
        h0: cur.hamiltonian(inv_mass),
        n_leapfrog: 0,
        sum_metro: 0.0,
        divergent: false,
    };
    let s0 = sharp(&cur.p, inv_mass);
    let mut z_fwd = cur.clone();
    let mut z_bwd = cur.clone();
    let mut sample = cur.clone();
    let mut log_w = 0.0;
    // inner momenta and outer/inner sharp momenta at both trajectory edges
    let (mut p_fb, mut p_bf) = (cur.p.clone(), cur.p.clone());
    let (mut s_ff, mut s_fb, mut s_bb, mut s_bf) = (s0.clone(), s0.clone(), s0.clone(), s0);
    let mut rho = cur.p.clone();
    for depth in 0..max_depth {
        let forward = rng.gen::<f64>() > 0.5;
        let (z, sign) = if forward { (&mut z_fwd, 1.0) } else { (&mut z_bwd, -1.0) };
        let Some((proposal, w_sub, e)) = ctx.build(z, depth, sign, rng) else {
            break;
        };
        let (rho_fwd, rho_bwd);
        if forward {
            rho_bwd = rho.clone();
            rho_fwd = e.rho;
            p_bf = p_fb.clone();
            s_bf = s_fb.clone();
            p_fb = e.p_beg;
            s_fb = e.sharp_beg;
            s_ff = e.sharp_end;
        } else {
            rho_fwd = rho.clone();
            rho_bwd = e.rho;
            p_fb = p_bf.clone();
            s_fb = s_bf.clone();
            p_bf = e.p_beg;
            s_bf = e.sharp_beg;
            s_bb = e.sharp_end;
        }
        if w_sub > log_w || rng.gen::<f64>() < (w_sub - log_w).exp() {
            sample = proposal;
        }
        log_w = log_add_exp(log_w, w_sub);
        rho = rho_bwd.clone();
        add_assign(&mut rho, &rho_fwd);
        let mut persist = no_u_turn(&s_bb, &s_ff, &rho);
        let mut ext = rho_bwd.clone();
        add_assign(&mut ext, &p_fb);
        persist &= no_u_turn(&s_bb, &s_fb, &ext);
        let mut ext = rho_fwd;
        add_assign(&mut ext, &p_bf);
        persist &= no_u_turn(&s_bf, &s_ff, &ext);
        if !persist {
            break;
        }
    }
    *cur = sample;
    Transition {
        accept_stat: ctx.sum_metro / ctx.n_leapfrog.max(1) as f64,
        divergent: ctx.divergent,
        n_leapfrog: ctx.n_leapfrog,
    }
}

fn init_state<T: LogDensity + ?Sized>(target: &T, rng: &mut ChaCha8Rng, init: Option<&[f64]>) -> Result<State> {
    let d = target.dim();
    let mut grad = vec![0.0; d];
    if let Some(q) = init {
        if q.len() != d {
            return Err(GppmError::Dimension {
                expected: d,
                got: q.len(),
            });
        }
        let logp = target.log_density_and_gradient(q, &mut grad)?;
        return Ok(State {
            q: q.to_vec(),
            p: vec![0.0; d],
            grad,
            logp,
        });
    }
    let mut last = None;
    for _ in 0..MAX_INIT_TRIES {
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        match target.log_density_and_gradient(&q, &mut grad) {
            Ok(lp) if lp.is_finite() && grad.iter().all(|g| g.is_finite()) => {
                return Ok(State {
                    q,
                    p: vec![0.0; d],
                    grad,
                    logp: lp,
                })
            }
            Ok(_) => last = Some(GppmError::NonFinite("initial log density".into())),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| GppmError::NonFinite("initial log density".into())))
}

/// Doubles or halves the step size until a single leapfrog step crosses
/// acceptance 0.8.
fn initial_step_size<T: LogDensity + ?Sized>(
    target: &T,
    cur: &State,
    eps0: f64,
    inv_mass: &[f64],
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut eps = eps0;
    let p = draw_momentum(rng, inv_mass);
    let accept_at = |eps: f64| -> f64 {
        let mut s = cur.clone();
        s.p = p.clone();
        let h0 = s.hamiltonian(inv_mass);
        match step(target, &mut s, eps, inv_mass) {
            Ok(()) => {
                let dh = s.hamiltonian(inv_mass) - h0;
                if dh.is_nan() {
                    0.0
                } else {
                    (-dh).exp()
                }
            }
            Err(_) => 0.0,
        }
    };
    let grow = accept_at(eps) > 0.8;
    for _ in 0..50 {
        let a = accept_at(eps);
        if grow && a <= 0.8 {
            break;
        }
        if !grow && a > 0.8 {
            break;
        }
        eps = if grow { eps * 2.0 } else { eps * 0.5 };
        if !(1e-10..=1e7).contains(&eps) {
            break;
        }
    }
    eps
}

fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    cfg: &HmcConfig,
    chain: usize,
    init: Option<&[f64]>,
) -> Result<ChainDraws> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let d = target.dim();
    let mut cur = init_state(target, &mut rng, init)?;
    let mut inv_mass = vec![1.0; d];
    let max_depth = ((cfg.max_leapfrog + 1) as f64).log2().floor().max(1.0) as u32;
    let transition = |cur: &mut State, eps: f64, inv_mass: &[f64], rng: &mut ChaCha8Rng| match cfg.algorithm {
        Algorithm::Nuts => nuts(target, cur, eps, inv_mass, max_depth, rng),
        Algorithm::JitteredHmc => jittered_hmc(target, cur, eps, inv_mass, cfg.max_leapfrog, rng),
    };

    let mut eps = cfg.initial_step_size;
    if cfg.warmup_iters > 0 {
        eps = initial_step_size(target, &cur, 1.0, &inv_mass, &mut rng);
        let mut da = DualAveraging::new(eps, cfg.target_accept);
        let schedule = Schedule::new(cfg.warmup_iters);
        let mut var = VarianceEstimator::new(d);
        for it in 0..cfg.warmup_iters {
            let t = transition(&mut cur, eps, &inv_mass, &mut rng);
            eps = da.update(t.accept_stat);
            if schedule.collecting(it) {
                var.add(&cur.q);
            }
            if schedule.window_end(it) {
                inv_mass = var.regularized();
                var = VarianceEstimator::new(d);
                eps = initial_step_size(target, &cur, eps, &inv_mass, &mut rng);
                da = DualAveraging::new(eps, cfg.target_accept);
            }
        }
        eps = da.final_step_size();
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(GppmError::NonFinite("adapted step size".into()));
    }

    let n = cfg.sampling_iters;
    let mut out = ChainDraws {
        draws: Vec::with_capacity(n * d),
        accept_stats: Vec::with_capacity(n),
        divergent: Vec::with_capacity(n),
        n_leapfrog: Vec::with_capacity(n),
        step_size: eps,
        inv_mass: inv_mass.clone(),
    };
    for _ in 0..n {
        let t = transition(&mut cur, eps, &inv_mass, &mut rng);
        out.draws.extend_from_slice(&cur.q);
        out.accept_stats.push(t.accept_stat);
        out.divergent.push(t.divergent);
        out.n_leapfrog.push(t.n_leapfrog);
    }
    log::debug!(
        "chain {chain}: step {eps:.4}, mean accept {:.3}, divergent {}",
        out.accept_stats.iter().sum::<f64>() / n as f64,
        out.divergent.iter().filter(|d| **d).count()
    );
    Ok(out)
}

/// Runs `cfg.chains` independent chains. Chain `k` uses the ChaCha stream
/// `k` of `cfg.seed`, so results do not depend on scheduling.
///
/// `init` optionally fixes the starting point of every chain; otherwise each
/// chain starts uniformly in `[-1, 1]^dim`.
pub fn hmc_sample<T: LogDensity + ?Sized>(
    target: &T,
    names: Vec<String>,
    cfg: &HmcConfig,
    init: Option<&[Vec<f64>]>,
) -> Result<PosteriorDraws> {
    cfg.validate()?;
    if names.len() != target.dim() {
        return Err(GppmError::Dimension {
            expected: target.dim(),
            got: names.len(),
        });
    }
    if let Some(i) = init {
        if i.len() != cfg.chains {
            return Err(GppmError::Dimension {
                expected: cfg.chains,
                got: i.len(),
            });
        }
    }
    let results = par::map_range(cfg.chains, cfg.parallelism, |k| {
        run_chain(target, cfg, k, init.map(|i| i[k].as_slice()))
    });
    let chains = results.into_iter().collect::<Result<Vec<_>>>()?;
    let draws = PosteriorDraws {
        names,
        chains,
        seed: cfg.seed,
    };
    let div = draws.divergence_count();
    let total = draws.n_draws();
    if div as f64 > MAX_DIVERGENT_FRACTION * total as f64 {
        return Err(GppmError::TooManyDivergences { divergent: div, total });
    }
    Ok(draws)
}
