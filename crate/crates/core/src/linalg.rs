//! Dense linear-algebra helpers shared by the GP code: a jittered Cholesky
//! factorization and its tangent with respect to a matrix direction.

use nalgebra::{DMatrix, DVector};

use crate::error::{GppmError, Result};

/// Smallest relative jitter tried.
pub const JITTER_START: f64 = 1e-8;
/// Largest relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Lower Cholesky factor together with the diagonal jitter that made it work.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    pub l: DMatrix<f64>,
    pub jitter: f64,
}

/// Runs `attempt` under the jitter policy.
///
/// The first attempt uses `base_jitter`. On failure the jitter is raised to at
/// least `JITTER_START * scale` and multiplied by ten per retry, stopping once
/// it would exceed `JITTER_MAX * scale`. `scale` is normally the prior
/// variance (`eta^2`) of the kernel that produced the matrix.
fn with_jitter<T>(base_jitter: f64, scale: f64, mut attempt: impl FnMut(f64) -> Option<T>) -> Result<(T, f64)> {
    let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
    let max = JITTER_MAX * scale;
    let mut jitter = base_jitter.max(0.0);
    loop {
        if let Some(v) = attempt(jitter) {
            return Ok((v, jitter));
        }
        let next = (jitter * 10.0).max(JITTER_START * scale);
        if next > max * (1.0 + 1e-12) {
            return Err(GppmError::Cholesky { jitter });
        }
        jitter = next;
    }
}

/// Factorizes `m + jitter * I` under the jitter policy of [`with_jitter`].
pub fn jittered_cholesky(m: &DMatrix<f64>, base_jitter: f64, scale: f64) -> Result<JitteredCholesky> {
    let (l, jitter) = with_jitter(base_jitter, scale, |j| factor(m, None, j).map(|(l, _)| l))?;
    Ok(JitteredCholesky { l, jitter })
}

/// Factorizes `m + jitter * I` and returns, with it, the derivative of the
/// factor when `m` moves in direction `dm` (the jitter is held fixed).
pub fn jittered_cholesky_tangent(
    m: &DMatrix<f64>,
    dm: &DMatrix<f64>,
    base_jitter: f64,
    scale: f64,
) -> Result<(JitteredCholesky, DMatrix<f64>)> {
    let ((l, dl), jitter) = with_jitter(base_jitter, scale, |j| {
        factor(m, Some(dm), j).map(|(l, dl)| (l, dl.expect("tangent requested")))
    })?;
    Ok((JitteredCholesky { l, jitter }, dl))
}

/// Plain Cholesky; `None` when a pivot is not strictly positive.
pub fn cholesky_lower(a: DMatrix<f64>) -> Option<DMatrix<f64>> {
    factor(&a, None, 0.0).map(|(l, _)| l)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

/// Row-oriented Cholesky of `m + jitter * I`, optionally with its forward-mode
/// tangent along `dm`. Works on row-major copies so every inner product is
/// over contiguous memory.
fn factor(m: &DMatrix<f64>, dm: Option<&DMatrix<f64>>, jitter: f64) -> Option<(DMatrix<f64>, Option<DMatrix<f64>>)> {
    let n = m.nrows();
    if m.ncols() != n {
        return None;
    }
    let mut l = vec![0.0; n * n];
    let mut dl = dm.map(|_| vec![0.0; n * n]);
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            let a = m[(i, j)] + if i == j { jitter } else { 0.0 };
            if i == j {
                let d = a - s;
                if !(d > 0.0 && d.is_finite()) {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a - s) / l[j * n + j];
            }
            if let (Some(dl), Some(dm)) = (dl.as_mut(), dm) {
                let ds =
                    dot(&dl[i * n..i * n + j], &l[j * n..j * n + j]) + dot(&l[i * n..i * n + j], &dl[j * n..j * n + j]);
                dl[i * n + j] = if i == j {
                    (dm[(i, i)] - ds) / (2.0 * l[i * n + i])
                } else {
                    (dm[(i, j)] - ds - l[i * n + j] * dl[j * n + j]) / l[j * n + j]
                };
            }
        }
    }
    let to_matrix = |v: Vec<f64>| DMatrix::from_row_slice(n, n, &v);
    Some((to_matrix(l), dl.map(to_matrix)))
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.solve_lower_triangular(b).expect("triangular factor has a zero pivot")
}

/// Solves `L^T x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.tr_solve_lower_triangular(b)
        .expect("triangular factor has a zero pivot")
}

/// `sum_i log L_ii`.
pub fn log_det_half(l: &DMatrix<f64>) -> f64 {
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, shift: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            let d = i as f64 - j as f64;
            (-(d * d) / 4.0).exp() + if i == j { shift } else { 0.0 }
        })
    }

    #[test]
    fn jitter_rescues_singular_matrix() {
        let ones = DMatrix::from_element(3, 3, 1.0);
        let f = jittered_cholesky(&ones, 0.0, 1.0).unwrap();
        assert!(f.jitter >= JITTER_START);
        let rebuilt = &f.l * f.l.transpose();
        assert!((rebuilt - &ones).amax() < 1e-6);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            jittered_cholesky(&m, 0.0, 1.0),
            Err(GppmError::Cholesky { .. })
        ));
    }

    #[test]
    fn zero_base_jitter_used_when_possible() {
        let f = jittered_cholesky(&spd(4, 0.1), 0.0, 1.0).unwrap();
        assert_eq!(f.jitter, 0.0);
    }

    #[test]
    fn matches_reference_factorization() {
        let m = spd(7, 0.05);
        let ours = cholesky_lower(m.clone()).unwrap();
        let reference = nalgebra::Cholesky::new(m).unwrap().unpack();
        assert!((ours - reference).amax() < 1e-13);
    }

    #[test]
    fn tangent_matches_finite_difference() {
        let n = 6;
        let c = spd(n, 0.3);
        let dc = DMatrix::from_fn(n, n, |i, j| ((i + j) as f64 * 0.3).cos() * 0.1);
        let dc = (&dc + dc.transpose()) * 0.5;
        let w = DVector::from_fn(n, |i, _| (i as f64).sin());
        let z = DVector::from_fn(n, |i, _| 1.0 - 0.3 * i as f64);
        let val = |h: f64| {
            let l = cholesky_lower(&c + &dc * h).unwrap();
            w.dot(&(&l * &z))
        };
        let h = 1e-6;
        let fd = (val(h) - val(-h)) / (2.0 * h);
        let (f, dl) = jittered_cholesky_tangent(&c, &dc, 0.0, 1.0).unwrap();
        assert_eq!(f.l, cholesky_lower(c.clone()).unwrap());
        let an = w.dot(&(&dl * &z));
        assert!((fd - an).abs() < 1e-7, "{fd} vs {an}");
    }
}
