use rand::Rng;

use super::mat::Mat;
use super::qr::qr;
use super::svd::{svd, SvdFactors};
use crate::error::{invalid, Result};

/// Leading singular triplets by subspace iteration, warm-started from the
/// previous call. Suited to a slowly changing sequence of matrices, where a
/// single step per matrix keeps the basis converged.
#[derive(Clone, Debug)]
pub struct SubspaceSvd {
    /// Orthonormal `cols×k` basis for the right singular subspace.
    q: Mat,
}

impl SubspaceSvd {
    pub fn new<R: Rng + ?Sized>(cols: usize, k: usize, rng: &mut R) -> Result<Self> {
        if k == 0 || k > cols {
            return Err(invalid!("subspace size must lie in 1..={cols}, got {k}"));
        }
        Ok(Self {
            q: qr(&Mat::gaussian(cols, k, rng)).0,
        })
    }

    pub fn k(&self) -> usize {
        self.q.cols()
    }

    /// `extra` additional power steps, then Rayleigh-Ritz on `A·Q`. Returns
    /// `k` triplets with `u: rows×k`, `v: cols×k`; `A` must have at least `k`
    /// rows.
    pub fn step(&mut self, a: &Mat, extra: usize) -> Result<SvdFactors> {
        if a.cols() != self.q.rows() || a.rows() < self.k() {
            return Err(invalid!(
                "matrix is {}x{}, subspace expects {} columns and at least {} rows",
                a.rows(),
                a.cols(),
                self.q.rows(),
                self.k()
            ));
        }
        for _ in 0..extra {
            let p = qr(&a.matmul(&self.q)).0;
            self.q = qr(&a.t_matmul(&p)).0;
        }
        let p = qr(&a.matmul(&self.q)).0;
        let b = p.t_matmul(a);
        let f = svd(&b)?;
        let u = p.matmul(&f.u);
        self.q = f.v.clone();
        Ok(SvdFactors { u, s: f.s, v: f.v })
    }
}
