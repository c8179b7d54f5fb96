use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;

use super::mat::{dot, Mat};
use super::svd::singular_values;
use crate::error::{Error, Result};

/// Thin Householder QR of a tall matrix with the signs fixed so that
/// `diag(R) ≥ 0`.
pub fn qr(a: &Mat) -> (Mat, Mat) {
    let (m, n) = a.shape();
    assert!(m >= n, "qr expects rows >= cols");
    let mut r = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vn = dot(&v, &v).sqrt();
        if vn == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for x in &mut v {
            *x /= vn;
        }
        for j in k..n {
            let s: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum();
            for i in k..m {
                r[(i, j)] -= 2.0 * s * v[i - k];
            }
        }
        reflectors.push(v);
    }

    let mut q = Mat::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 });
    for k in (0..n).rev() {
        let v = &reflectors[k];
        if v.is_empty() {
            continue;
        }
        for j in 0..n {
            let s: f64 = (k..m).map(|i| v[i - k] * q[(i, j)]).sum();
            for i in k..m {
                q[(i, j)] -= 2.0 * s * v[i - k];
            }
        }
    }
    let mut rr = Mat::from_fn(n, n, |i, j| if j >= i { r[(i, j)] } else { 0.0 });
    for k in 0..n {
        if rr[(k, k)] < 0.0 {
            for i in 0..m {
                q[(i, k)] = -q[(i, k)];
            }
            for j in 0..n {
                rr[(k, j)] = -rr[(k, j)];
            }
        }
    }
    (q, rr)
}

/// Haar-distributed `n×n` orthogonal matrix: QR of an i.i.d. Gaussian matrix
/// with the diagonal of `R` made positive.
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Mat> {
    if n == 0 {
        return Err(Error::InvalidParameter("haar_orthogonal needs n >= 1".into()));
    }
    let g = Mat::gaussian(n, n, rng);
    Ok(qr(&g).0)
}

/// Orthonormal basis for the column span of a full-column-rank matrix.
pub fn orthonormalize(g: &Mat) -> Result<Mat> {
    if !g.is_finite() {
        return Err(Error::InvalidParameter("orthonormalize input has non-finite entries".into()));
    }
    if g.rows() < g.cols() {
        return Err(Error::DegenerateInput(alloc::format!(
            "{} columns cannot be independent in dimension {}",
            g.cols(),
            g.rows()
        )));
    }
    let s = singular_values(g)?;
    let top = s[0];
    let bottom = *s.last().expect("nonempty");
    if top == 0.0 || bottom <= 1e-12 * top {
        return Err(Error::DegenerateInput(alloc::format!(
            "rank-deficient input: smallest singular value {bottom:e}, largest {top:e}"
        )));
    }
    Ok(qr(g).0)
}
