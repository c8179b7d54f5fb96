use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::mat::{dot, Mat};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `A = U · diag(S) · Vᵀ`.
///
/// `S` is sorted nonincreasing and has `min(rows, cols)` entries. Columns of `U`
/// belonging to zero singular values are completed to an orthonormal set. The
/// largest-magnitude entry of every left singular vector is positive.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> Mat {
        Mat::weighted_outer(&self.u, &self.s, &self.v)
    }

    /// Number of singular values above `tol · σ₁`.
    pub fn rank(&self, tol: f64) -> usize {
        let top = self.s.first().copied().unwrap_or(0.0);
        self.s.iter().filter(|&&x| x > tol * top && x > 0.0).count()
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.s.iter().sum()
    }
}

/// Full thin SVD by one-sided (Hestenes) Jacobi rotations.
pub fn svd(a: &Mat) -> Result<SvdFactors> {
    if !a.is_finite() {
        return Err(Error::InvalidParameter("svd input has non-finite entries".into()));
    }
    if a.rows() >= a.cols() {
        let (u, s, v) = jacobi(a, true)?;
        Ok(finish(u, s, v.expect("vectors requested")))
    } else {
        let (w, s, v) = jacobi(&a.transpose(), true)?;
        let f = finish(w, s, v.expect("vectors requested"));
        let (mut u, mut v) = (f.v, f.u);
        fix_signs(&mut u, &mut v);
        Ok(SvdFactors { u, s: f.s, v })
    }
}

/// Singular values only, nonincreasing.
pub fn singular_values(a: &Mat) -> Result<Vec<f64>> {
    if !a.is_finite() {
        return Err(Error::InvalidParameter("svd input has non-finite entries".into()));
    }
    let tall = if a.rows() >= a.cols() {
        a.clone()
    } else {
        a.transpose()
    };
    let (_, mut s, _) = jacobi(&tall, false)?;
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Runs Jacobi sweeps on the columns of a tall matrix. Returns the rotated
/// columns (column-major, unnormalised), their norms, and optionally the
/// accumulated right rotation `V` (column-major).
#[allow(clippy::type_complexity)]
fn jacobi(a: &Mat, want_v: bool) -> Result<(Vec<f64>, Vec<f64>, Option<Vec<f64>>)> {
    let (m, n) = a.shape();
    let mut w = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            w[j * m + i] = a[(i, j)];
        }
    }
    let mut v = want_v.then(|| {
        let mut v = vec![0.0; n * n];
        for j in 0..n {
            v[j * n + j] = 1.0;
        }
        v
    });

    let eps = f64::EPSILON * (m as f64);
    let mut norms: Vec<f64> = (0..n).map(|j| sq(&w[j * m..(j + 1) * m])).collect();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let (lo, hi) = w.split_at_mut(q * m);
                let wp = &mut lo[p * m..(p + 1) * m];
                let wq = &mut hi[..m];
                let gamma = dot(wp, wq);
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate(wp, wq, c, s);
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
                if let Some(v) = v.as_mut() {
                    let (lo, hi) = v.split_at_mut(q * n);
                    rotate(&mut lo[p * n..(p + 1) * n], &mut hi[..n], c, s);
                }
            }
        }
        // refresh cached norms to stop drift
        for (j, nj) in norms.iter_mut().enumerate() {
            *nj = sq(&w[j * m..(j + 1) * m]);
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericFailure {
            what: "jacobi svd",
            iterations: sweeps,
            last: norms.iter().fold(0.0, |a: f64, &b| a.max(b)).sqrt(),
        });
    }
    let s = norms.iter().map(|x| x.sqrt()).collect();
    Ok((w, s, v))
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

#[inline]
fn sq(x: &[f64]) -> f64 {
    dot(x, x)
}

/// Sorts, normalises and sign-fixes the raw Jacobi output. `w` is m×n
/// column-major, `v` is n×n column-major.
fn finish(w: Vec<f64>, s: Vec<f64>, v: Vec<f64>) -> SvdFactors {
    let n = s.len();
    let m = w.len() / n;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let smax = order.first().map(|&j| s[j]).unwrap_or(0.0);
    let cutoff = smax * f64::EPSILON * (m.max(n) as f64);

    let mut u = Mat::zeros(m, n);
    let mut vm = Mat::zeros(n, n);
    let mut sv = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let sj = s[j];
        for i in 0..n {
            vm[(i, k)] = v[j * n + i];
        }
        if sj > cutoff && sj > 0.0 {
            for i in 0..m {
                u[(i, k)] = w[j * m + i] / sj;
            }
            sv.push(sj);
        } else {
            missing.push(k);
            sv.push(if sj > cutoff { sj } else { 0.0 });
        }
    }
    complete_columns(&mut u, &missing);
    fix_signs(&mut u, &mut vm);
    SvdFactors { u, s: sv, v: vm }
}

/// Flips singular pairs so the largest-magnitude entry of each left vector is
/// positive.
fn fix_signs(u: &mut Mat, v: &mut Mat) {
    let (m, n) = (u.rows(), v.rows());
    for k in 0..u.cols() {
        let mut best = 0;
        for i in 1..m {
            if u[(i, k)].abs() > u[(best, k)].abs() {
                best = i;
            }
        }
        if u[(best, k)] < 0.0 {
            for i in 0..m {
                u[(i, k)] = -u[(i, k)];
            }
            for i in 0..n {
                v[(i, k)] = -v[(i, k)];
            }
        }
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all other
/// columns, drawing candidates from the standard basis.
pub(crate) fn complete_columns(u: &mut Mat, missing: &[usize]) {
    let m = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|k| !missing.contains(k)).collect();
    let mut candidate = 0;
    for &k in missing {
        while candidate < m {
            let mut x = vec![0.0; m];
            x[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &j in &filled {
                    let col = u.column(j);
                    let c = dot(&col, &x);
                    for (xi, ci) in x.iter_mut().zip(&col) {
                        *xi -= c * ci;
                    }
                }
            }
            let nx = sq(&x).sqrt();
            if nx > 1e-8 {
                for xi in &mut x {
                    *xi /= nx;
                }
                u.set_column(k, &x);
                filled.push(k);
                break;
            }
        }
    }
}
