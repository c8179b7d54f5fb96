use alloc::vec::Vec;

use super::mat::Mat;

/// Extreme eigenvalues of a symmetric operator on a subspace of matrix
/// space, from Lanczos with full reorthogonalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LanczosExtremes {
    pub min: f64,
    pub max: f64,
    /// Krylov dimension reached. Equal to the subspace dimension when the
    /// iteration ran to exhaustion, in which case the values are exact.
    pub steps: usize,
    /// The Krylov space became invariant before `max_steps`.
    pub invariant: bool,
}

/// `apply` must be symmetric in the Frobenius inner product on the
/// subspace onto which `restrict` projects. Each new Krylov vector is passed
/// through `restrict`; without it, rounding components outside the
/// subspace grow geometrically through the three-term recurrence. A zero
/// `start` reports `(0, 0)`.
pub fn lanczos_extremes(
    mut apply: impl FnMut(&Mat) -> Mat,
    mut restrict: impl FnMut(&Mat) -> Mat,
    start: &Mat,
    max_steps: usize,
) -> LanczosExtremes {
    let mut basis: Vec<Mat> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut q = restrict(start);
    let n0 = q.frobenius_norm();
    if n0 == 0.0 || max_steps == 0 {
        return LanczosExtremes {
            min: 0.0,
            max: 0.0,
            steps: 0,
            invariant: true,
        };
    }
    q.scale_mut(1.0 / n0);
    // Scale for the breakdown test, grown with the largest |α|, |β| seen.
    let mut scale: f64 = 0.0;
    let mut invariant = false;
    loop {
        let mut w = restrict(&apply(&q));
        let a = w.dot(&q);
        w.axpy(-a, &q);
        if let (Some(prev), Some(b)) = (basis.last(), beta.last()) {
            w.axpy(-b, prev);
        }
        // Two passes of classical Gram-Schmidt against everything kept.
        for _ in 0..2 {
            for v in basis.iter().chain(core::iter::once(&q)) {
                let c = w.dot(v);
                w.axpy(-c, v);
            }
        }
        w = restrict(&w);
        alpha.push(a);
        basis.push(q);
        let b = w.frobenius_norm();
        scale = scale.max(a.abs()).max(b);
        if b <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
            invariant = true;
            break;
        }
        if basis.len() >= max_steps {
            break;
        }
        beta.push(b);
        q = w.scale(1.0 / b);
    }
    let (min, max) = tridiagonal_extremes(&alpha, &beta);
    LanczosExtremes {
        min,
        max,
        steps: alpha.len(),
        invariant,
    }
}

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly
/// below `x` (Sturm sequence).
fn count_below(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..alpha.len() {
        let b2 = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
        d = alpha[i] - x - if i == 0 { 0.0 } else { b2 / d };
        if d == 0.0 {
            d = -f64::EPSILON * (x.abs() + 1.0);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

fn tridiagonal_extremes(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let k = alpha.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..k {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + beta.get(i).map_or(0.0, |b| b.abs());
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    let bisect = |target: usize| {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if count_below(alpha, beta, mid) > target {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    };
    (bisect(0), bisect(k - 1))
}
