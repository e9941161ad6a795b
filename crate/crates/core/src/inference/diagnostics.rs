//! Convergence diagnostics over per-chain draws of one scalar.

use crate::error::{GppmError, Result};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn check_chains(chains: &[Vec<f64>], min_len: usize) -> Result<usize> {
    let n = chains.first().map_or(0, Vec::len);
    if chains.is_empty() || chains.iter().any(|c| c.len() != n) {
        return Err(GppmError::Diagnostic(
            "chains must be non-empty and of equal length".into(),
        ));
    }
    if n < min_len {
        return Err(GppmError::Diagnostic(format!(
            "need at least {min_len} draws per chain, got {n}"
        )));
    }
    if chains.iter().flatten().any(|v| !v.is_finite()) {
        return Err(GppmError::Diagnostic("non-finite draw".into()));
    }
    Ok(n)
}

/// Split potential scale reduction: every chain is cut in half (dropping the
/// middle draw of odd-length chains) and the halves are compared.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let n = check_chains(chains, 4)?;
    let half = n / 2;
    let splits: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[n - half..]]).collect();
    let h = half as f64;
    let means: Vec<f64> = splits.iter().map(|s| mean(s)).collect();
    let w = splits.iter().map(|s| var(s)).sum::<f64>() / splits.len() as f64;
    if !(w > 0.0) {
        return Err(GppmError::Diagnostic("zero within-chain variance".into()));
    }
    let b = h * var(&means);
    let var_plus = (h - 1.0) / h * w + b / h;
    Ok((var_plus / w).sqrt())
}

fn autocovariance(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let m = mean(x);
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Effective sample size across chains from summed autocorrelations, with the
/// sum truncated at the first negative pair of consecutive lags.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64> {
    let n = check_chains(chains, 4)?;
    let m = chains.len() as f64;
    let nf = n as f64;
    let w: f64 = chains.iter().map(|c| var(c)).sum::<f64>() / m;
    if !(w > 0.0) {
        return Err(GppmError::Diagnostic("zero within-chain variance".into()));
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b_over_n = if chains.len() > 1 { var(&means) } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    let rho = |lag: usize| -> f64 {
        let acov = chains.iter().map(|c| autocovariance(c, lag)).sum::<f64>() / m;
        1.0 - (w - acov) / var_plus
    };
    // rho(0) equals 1 up to the (n-1)/n factor; use it as the first term.
    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = if t == 0 { 1.0 + rho(1) } else { rho(t) + rho(t + 1) };
        if pair < 0.0 {
            break;
        }
        // monotone initial sequence
        let pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * sum).max(1.0 / (m * nf).log10().max(1.0));
    Ok(m * nf / tau)
}
