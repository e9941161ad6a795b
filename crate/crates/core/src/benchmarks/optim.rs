//! Derivative-free minimization used by the maximum-likelihood fits.

use argmin::core::{CostFunction, Error, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Initial simplex edge along every coordinate.
    pub step: f64,
    /// Stop when the standard deviation of simplex costs falls below this.
    pub tolerance: f64,
    pub max_iters: u64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            step: 0.5,
            tolerance: 1e-10,
            max_iters: 5000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub evaluations: u64,
}

struct Objective<'a, F>(&'a F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, Error> {
        Ok((self.0)(p))
    }
}

/// Nelder-Mead from an axis-aligned simplex at `start`. Never fails: if the
/// search errors out the start point is returned, unconverged.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let fallback = || Minimum {
        x: start.to_vec(),
        value: f(start),
        converged: false,
        evaluations: 1,
    };
    let mut simplex = vec![start.to_vec()];
    for i in 0..start.len() {
        let mut v = start.to_vec();
        v[i] += opts.step;
        simplex.push(v);
    }
    let Ok(solver) = NelderMead::new(simplex).with_sd_tolerance(opts.tolerance) else {
        return fallback();
    };
    let run = Executor::new(Objective(f), solver)
        .configure(|s| s.max_iters(opts.max_iters))
        .run();
    let Ok(res) = run else {
        return fallback();
    };
    let state = res.state();
    let Some(x) = state.get_best_param().cloned() else {
        return fallback();
    };
    let converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );
    Minimum {
        value: state.get_best_cost(),
        x,
        converged,
        evaluations: state.get_func_counts().values().sum(),
    }
}
