//! Warmup tuning: dual-averaging step size and a windowed diagonal metric.

/// Nesterov dual averaging of `log(step_size)` toward a target acceptance.
#[derive(Debug, Clone)]
pub(crate) struct DualAveraging {
    target: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

impl DualAveraging {
    pub fn new(step_size: f64, target: f64) -> Self {
        Self {
            target,
            mu: (10.0 * step_size).ln(),
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        }
    }

    /// Feeds one acceptance statistic, returns the next step size.
    pub fn update(&mut self, accept: f64) -> f64 {
        let accept = if accept.is_finite() { accept.min(1.0) } else { 0.0 };
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / GAMMA;
        let w = self.counter.powf(-KAPPA);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }

    pub fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Welford running variance per coordinate.
#[derive(Debug, Clone)]
pub(crate) struct VarianceEstimator {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VarianceEstimator {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / self.n;
            *s += d * (v - *m);
        }
    }

    /// Variance shrunk toward `1e-3`, as a diagonal inverse metric.
    pub fn regularized(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|s| {
                let var = if n > 1.0 { s / (n - 1.0) } else { 1.0 };
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

/// Warmup schedule: step-size-only opening buffer (15%), two metric windows
/// ending at 50% and 90% of warmup, then a step-size-only closing buffer.
/// The final metric comes from the second half of warmup.
#[derive(Debug, Clone)]
pub(crate) struct Schedule {
    pub metric_start: usize,
    pub window_ends: [usize; 2],
}

impl Schedule {
    pub fn new(warmup: usize) -> Self {
        let f = |x: f64| (warmup as f64 * x).round() as usize;
        Self {
            metric_start: f(0.15),
            window_ends: [f(0.5), f(0.9)],
        }
    }

    pub fn collecting(&self, iter: usize) -> bool {
        iter >= self.metric_start && iter < self.window_ends[1]
    }

    pub fn window_end(&self, iter: usize) -> bool {
        self.window_ends.contains(&(iter + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_averaging_moves_toward_target() {
        let mut da = DualAveraging::new(1.0, 0.8);
        let mut eps: f64 = 1.0;
        // acceptance decays with step size: accept = exp(-eps)
        for _ in 0..2000 {
            eps = da.update((-eps).exp());
        }
        let fin = da.final_step_size();
        assert!(((-fin).exp() - 0.8).abs() < 0.02, "{fin}");
    }

    #[test]
    fn variance_regularization() {
        let mut v = VarianceEstimator::new(1);
        for x in [1.0, 2.0, 3.0, 4.0, 5.0] {
            v.add(&[x]);
        }
        let r = v.regularized()[0];
        assert!((r - (5.0 / 10.0 * 2.5 + 1e-3 * 0.5)).abs() < 1e-12);
    }
}
