//! Covariance kernels and covariance-matrix construction.
//!
//! Two stationary kernels are provided, the squared exponential and its
//! strictly periodic variant, plus finite sums of them. The periodic kernel is
//! `eta^2 * exp(-sin^2(pi * (a - b) / omega) / rho^2)`; note that the sine
//! argument is the plain difference, not its square, so the kernel is exactly
//! periodic in `omega`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GppmError, Result};
use crate::par::{self, Parallelism};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeKernelParams {
    pub amplitude: f64,
    pub length_scale: f64,
}

impl SeKernelParams {
    pub fn new(amplitude: f64, length_scale: f64) -> Result<Self> {
        check_positive("amplitude", amplitude)?;
        check_positive("length_scale", length_scale)?;
        Ok(Self {
            amplitude,
            length_scale,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclicKernelParams {
    pub amplitude: f64,
    pub length_scale: f64,
    pub period: f64,
}

impl CyclicKernelParams {
    pub fn new(amplitude: f64, length_scale: f64, period: f64) -> Result<Self> {
        check_positive("amplitude", amplitude)?;
        check_positive("length_scale", length_scale)?;
        check_positive("period", period)?;
        Ok(Self {
            amplitude,
            length_scale,
            period,
        })
    }

    /// Day-of-week kernel.
    pub fn weekly(amplitude: f64, length_scale: f64) -> Result<Self> {
        Self::new(amplitude, length_scale, 7.0)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(GppmError::InvalidInput(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Se(SeKernelParams),
    Cyclic(CyclicKernelParams),
    Sum { children: Vec<KernelSpec> },
}

impl KernelSpec {
    pub fn sum(children: Vec<KernelSpec>) -> Result<Self> {
        if children.len() < 2 {
            return Err(GppmError::InvalidInput(
                "a sum kernel needs at least two children".into(),
            ));
        }
        Ok(KernelSpec::Sum { children })
    }

    /// Kernel value without input validation.
    #[inline]
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        match self {
            KernelSpec::Se(p) => se_unchecked(a - b, p),
            KernelSpec::Cyclic(p) => cyclic_unchecked(a - b, p),
            KernelSpec::Sum { children } => children.iter().map(|k| k.eval(a, b)).sum(),
        }
    }

    /// Prior variance at any input (the kernel is stationary).
    pub fn variance(&self) -> f64 {
        match self {
            KernelSpec::Se(p) => p.amplitude * p.amplitude,
            KernelSpec::Cyclic(p) => p.amplitude * p.amplitude,
            KernelSpec::Sum { children } => children.iter().map(KernelSpec::variance).sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Se(p) => SeKernelParams::new(p.amplitude, p.length_scale).map(|_| ()),
            KernelSpec::Cyclic(p) => CyclicKernelParams::new(p.amplitude, p.length_scale, p.period).map(|_| ()),
            KernelSpec::Sum { children } => {
                if children.len() < 2 {
                    return Err(GppmError::InvalidInput(
                        "a sum kernel needs at least two children".into(),
                    ));
                }
                children.iter().try_for_each(KernelSpec::validate)
            }
        }
    }
}

#[inline]
fn se_unchecked(d: f64, p: &SeKernelParams) -> f64 {
    let r = d / p.length_scale;
    p.amplitude * p.amplitude * (-r * r).exp()
}

#[inline]
fn cyclic_unchecked(d: f64, p: &CyclicKernelParams) -> f64 {
    let s = (std::f64::consts::PI * d / p.period).sin();
    let r = s / p.length_scale;
    p.amplitude * p.amplitude * (-r * r).exp()
}

fn check_finite_pair(a: f64, b: f64) -> Result<()> {
    if a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(GppmError::NonFinite(format!("kernel inputs ({a}, {b})")))
    }
}

pub fn se_kernel(a: f64, b: f64, p: &SeKernelParams) -> Result<f64> {
    check_finite_pair(a, b)?;
    Ok(se_unchecked(a - b, p))
}

pub fn cyclic_kernel(a: f64, b: f64, p: &CyclicKernelParams) -> Result<f64> {
    check_finite_pair(a, b)?;
    Ok(cyclic_unchecked(a - b, p))
}

fn check_inputs(inputs: &[f64]) -> Result<()> {
    if inputs.is_empty() {
        return Err(GppmError::InvalidInput("empty kernel input vector".into()));
    }
    if let Some(x) = inputs.iter().find(|x| !x.is_finite()) {
        return Err(GppmError::NonFinite(format!("kernel input {x}")));
    }
    Ok(())
}

/// Gram matrix `K(inputs, inputs) + jitter * I`.
pub fn covariance_matrix(inputs: &[f64], k: &KernelSpec, jitter: f64) -> Result<DMatrix<f64>> {
    covariance_matrix_with(inputs, k, jitter, Parallelism::Sequential)
}

/// As [`covariance_matrix`], optionally building rows in parallel. Every
/// element is computed independently, so both paths are bit-identical.
pub fn covariance_matrix_with(inputs: &[f64], k: &KernelSpec, jitter: f64, par: Parallelism) -> Result<DMatrix<f64>> {
    check_inputs(inputs)?;
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(GppmError::InvalidInput(format!("jitter must be >= 0, got {jitter}")));
    }
    let n = inputs.len();
    let rows = par::map(inputs, par, |&a| {
        inputs.iter().map(|&b| k.eval(a, b)).collect::<Vec<f64>>()
    });
    let mut m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    for i in 0..n {
        m[(i, i)] += jitter;
    }
    Ok(m)
}

/// Cross-covariance `K(a, b)` with `a` indexing rows.
pub fn cross_covariance(inputs_a: &[f64], inputs_b: &[f64], k: &KernelSpec) -> Result<DMatrix<f64>> {
    check_inputs(inputs_a)?;
    check_inputs(inputs_b)?;
    Ok(DMatrix::from_fn(inputs_a.len(), inputs_b.len(), |i, j| {
        k.eval(inputs_a[i], inputs_b[j])
    }))
}

/// Derivative of the kernel Gram matrix with respect to `log(length_scale)`
/// for a single (non-sum) kernel, without jitter.
pub(crate) fn gram_dlog_length_scale(inputs: &[f64], k: &KernelSpec) -> DMatrix<f64> {
    let n = inputs.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d = inputs[i] - inputs[j];
        match k {
            KernelSpec::Se(p) => {
                let r = d / p.length_scale;
                se_unchecked(d, p) * 2.0 * r * r
            }
            KernelSpec::Cyclic(p) => {
                let s = (std::f64::consts::PI * d / p.period).sin() / p.length_scale;
                cyclic_unchecked(d, p) * 2.0 * s * s
            }
            KernelSpec::Sum { .. } => unreachable!("length-scale derivative of a sum kernel"),
        }
    })
}
