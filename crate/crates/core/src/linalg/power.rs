#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::mat::{norm2, Mat};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

const START_SEED: u64 = 0x5eed_0f_5e1f;

/// Largest singular value by power iteration on `AᵀA` from `restarts` random
/// starting vectors; the largest converged estimate wins.
///
/// A run stops once the eigen-residual `‖AᵀAx − θx‖` drops below `tol·θ`.
pub fn spectral_norm(a: &Mat, tol: f64, max_iter: usize, restarts: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("spectral_norm tolerance must be positive".into()));
    }
    if a.is_zero() {
        return Ok(0.0);
    }
    let mut best: f64 = 0.0;
    for restart in 0..restarts.max(1) {
        let mut rng = StreamRng::new(START_SEED, restart as u64);
        let mut x = Mat::gaussian(a.cols(), 1, &mut rng).into_vec();
        normalize(&mut x);
        let mut theta = 0.0;
        let mut done = false;
        for _ in 0..max_iter {
            let y = a.matvec(&x);
            let z = a.t_matvec(&y);
            theta = crate::linalg::mat::dot(&y, &y);
            let resid = z
                .iter()
                .zip(&x)
                .map(|(zi, xi)| (zi - theta * xi).powi(2))
                .sum::<f64>()
                .sqrt();
            let zn = norm2(&z);
            if zn == 0.0 || resid <= tol * theta {
                done = true;
                break;
            }
            x = z;
            for xi in &mut x {
                *xi /= zn;
            }
        }
        if !done {
            return Err(Error::NumericFailure {
                what: "spectral_norm power iteration",
                iterations: max_iter,
                last: theta.sqrt(),
            });
        }
        best = best.max(theta.sqrt());
    }
    Ok(best)
}

fn normalize(x: &mut [f64]) {
    let n = norm2(x);
    if n > 0.0 {
        for xi in x {
            *xi /= n;
        }
    }
}
