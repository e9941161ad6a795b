//! Gaussian-process primitives over one-dimensional input grids: mean
//! functions, the multivariate-normal log density, the whitened
//! (non-centered) representation and conditional prediction.
//!
//! All solves go through Cholesky factors; no explicit inverse is formed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GppmError, Result};
use crate::kernels::{covariance_matrix, cross_covariance, KernelSpec};
use crate::linalg::{jittered_cholesky, log_det_half, solve_lower, JitteredCholesky};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Prior mean of a latent curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanFunction {
    Zero,
    Constant {
        level: f64,
    },
    /// `-scale * (tau - 1)^exponent`, defined for `tau >= 1`.
    PowerDecay {
        scale: f64,
        exponent: f64,
    },
}

impl MeanFunction {
    pub fn power_decay(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale > 0.0 && exponent > 0.0 && scale.is_finite() && exponent.is_finite()) {
            return Err(GppmError::InvalidInput(format!(
                "power-decay mean needs scale, exponent > 0 (got {scale}, {exponent})"
            )));
        }
        Ok(MeanFunction::PowerDecay { scale, exponent })
    }

    /// Value at a single input; power decay at inputs below 1 is an error.
    pub fn at(&self, tau: f64) -> Result<f64> {
        match *self {
            MeanFunction::Zero => Ok(0.0),
            MeanFunction::Constant { level } => Ok(level),
            MeanFunction::PowerDecay { scale, exponent } => {
                if !(tau >= 1.0) {
                    return Err(GppmError::InvalidInput(format!(
                        "power-decay mean evaluated at {tau} < 1"
                    )));
                }
                Ok(power_decay(tau, scale, exponent))
            }
        }
    }
}

#[inline]
pub(crate) fn power_decay(tau: f64, scale: f64, exponent: f64) -> f64 {
    let d = tau - 1.0;
    if d <= 0.0 {
        0.0
    } else {
        -scale * d.powf(exponent)
    }
}

pub fn mean_eval(m: &MeanFunction, inputs: &[f64]) -> Result<Vec<f64>> {
    inputs.iter().map(|&t| m.at(t)).collect()
}

/// A latent curve evaluated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpComponent {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub mean: MeanFunction,
    pub kernel: KernelSpec,
}

impl GpComponent {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, mean: MeanFunction, kernel: KernelSpec) -> Result<Self> {
        if grid.is_empty() {
            return Err(GppmError::InvalidInput("empty GP grid".into()));
        }
        if grid.len() != values.len() {
            return Err(GppmError::Dimension {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if grid.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(GppmError::NonFinite("GP grid or values".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GppmError::InvalidInput("GP grid must be strictly increasing".into()));
        }
        kernel.validate()?;
        Ok(Self {
            grid,
            values,
            mean,
            kernel,
        })
    }

    fn factor(&self, jitter: f64) -> Result<JitteredCholesky> {
        let k = covariance_matrix(&self.grid, &self.kernel, 0.0)?;
        jittered_cholesky(&k, jitter, self.kernel.variance())
    }

    fn centered(&self) -> Result<DVector<f64>> {
        let m = mean_eval(&self.mean, &self.grid)?;
        Ok(DVector::from_iterator(
            self.values.len(),
            self.values.iter().zip(&m).map(|(v, m)| v - m),
        ))
    }
}

/// Log density of `c.values` under its GP prior, including the
/// `-n/2 log(2 pi)` normalizing constant.
pub fn gp_log_density(c: &GpComponent, jitter: f64) -> Result<f64> {
    let f = c.factor(jitter)?;
    let resid = c.centered()?;
    let u = solve_lower(&f.l, &resid);
    let n = c.grid.len() as f64;
    Ok(-0.5 * n * LN_2PI - log_det_half(&f.l) - 0.5 * u.norm_squared())
}

/// Non-centered representation: `values = mean(grid) + chol * z`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedComponent {
    pub grid: Vec<f64>,
    pub mean: MeanFunction,
    pub kernel: KernelSpec,
    pub z: Vec<f64>,
    pub chol: DMatrix<f64>,
}

impl WhitenedComponent {
    /// Factorizes the grid covariance under the jitter policy.
    pub fn new(grid: Vec<f64>, mean: MeanFunction, kernel: KernelSpec, z: Vec<f64>, jitter: f64) -> Result<Self> {
        if grid.len() != z.len() {
            return Err(GppmError::Dimension {
                expected: grid.len(),
                got: z.len(),
            });
        }
        let k = covariance_matrix(&grid, &kernel, 0.0)?;
        let f = jittered_cholesky(&k, jitter, kernel.variance())?;
        Ok(Self {
            grid,
            mean,
            kernel,
            z,
            chol: f.l,
        })
    }

    /// Log density of `z` under iid standard normals.
    pub fn z_log_density(&self) -> f64 {
        let n = self.z.len() as f64;
        -0.5 * n * LN_2PI - 0.5 * self.z.iter().map(|z| z * z).sum::<f64>()
    }

    /// `log |det chol|`, the constant Jacobian of the whitening map.
    pub fn log_jacobian(&self) -> f64 {
        log_det_half(&self.chol)
    }
}

pub fn unwhiten(w: &WhitenedComponent) -> Result<GpComponent> {
    let n = w.grid.len();
    if w.z.len() != n || w.chol.nrows() != n || w.chol.ncols() != n {
        return Err(GppmError::Dimension {
            expected: n,
            got: w.z.len().min(w.chol.nrows()),
        });
    }
    let m = mean_eval(&w.mean, &w.grid)?;
    let z = DVector::from_column_slice(&w.z);
    let lz = &w.chol * z;
    let values = m.iter().zip(lz.iter()).map(|(m, d)| m + d).collect();
    GpComponent::new(w.grid.clone(), values, w.mean, w.kernel.clone())
}

/// Inverse of [`unwhiten`]: solves `chol * z = values - mean`.
pub fn whiten(c: &GpComponent, jitter: f64) -> Result<WhitenedComponent> {
    let f = c.factor(jitter)?;
    let z = solve_lower(&f.l, &c.centered()?);
    Ok(WhitenedComponent {
        grid: c.grid.clone(),
        mean: c.mean,
        kernel: c.kernel.clone(),
        z: z.iter().copied().collect(),
        chol: f.l,
    })
}

/// Conditional mean and covariance of the curve at `new_inputs` given its
/// grid values.
pub fn gp_conditional(c: &GpComponent, new_inputs: &[f64], jitter: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if new_inputs.iter().any(|x| !x.is_finite()) {
        return Err(GppmError::NonFinite("conditional inputs".into()));
    }
    let f = c.factor(jitter)?;
    let resid = c.centered()?;
    let ks = cross_covariance(&c.grid, new_inputs, &c.kernel)?;
    let kss = covariance_matrix(new_inputs, &c.kernel, 0.0)?;
    let u = solve_lower(&f.l, &resid);
    let v =
        f.l.solve_lower_triangular(&ks)
            .expect("triangular factor has a zero pivot");
    let prior_mean = mean_eval(&c.mean, new_inputs)?;
    let mean = DVector::from_column_slice(&prior_mean) + v.tr_mul(&u);
    let mut cov = kss - v.tr_mul(&v);
    let n = cov.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }
    Ok((mean, cov))
}

/// Draws one vector from a Gaussian with the given mean and covariance, using
/// the jitter policy relative to `scale`. An all-zero covariance returns the
/// mean exactly.
pub fn sample_gaussian<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    scale: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if cov.iter().all(|&v| v == 0.0) {
        return Ok(mean.clone());
    }
    // Clamp tiny negative diagonals left by cancellation before factorizing.
    let mut c = cov.clone();
    for i in 0..c.nrows() {
        if c[(i, i)] < 0.0 {
            c[(i, i)] = 0.0;
        }
    }
    let f = jittered_cholesky(&c, 0.0, scale)?;
    let e = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + f.l * e)
}

pub(crate) fn conditional_draw<R: Rng + ?Sized>(
    c: &GpComponent,
    new_inputs: &[f64],
    jitter: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (mean, cov) = gp_conditional(c, new_inputs, jitter)?;
    let draw = sample_gaussian(&mean, &cov, c.kernel.variance(), rng)?;
    Ok(draw.iter().copied().collect())
}

/// Seeded draw from the conditional distribution at `new_inputs`.
pub fn gp_sample_conditional(c: &GpComponent, new_inputs: &[f64], rng_seed: u64, jitter: f64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    conditional_draw(c, new_inputs, jitter, &mut rng)
}
