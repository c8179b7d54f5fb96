//! Nuclear-norm minimization subject to agreement on the observed entries.
//!
//! Two first-order schemes are available, both built on singular-value
//! soft thresholding:
//!
//! * [`Algorithm::Admm`] (default) splits `X = Z` with `Z` confined to the
//!   affine set `P_Ω(Z) = P_Ω(M)`:
//!   `X ← shrink(Z − U, 1/β)`, `Z ← proj(X + U)`, `U ← U + X − Z`, with
//!   over-relaxation and residual balancing of `β`. Its limit is the exact
//!   minimizer.
//! * [`Algorithm::Svt`], the linearized Bregman iteration
//!   `Xᵏ = shrink(Yᵏ⁻¹, τ)`, `Yᵏ = Yᵏ⁻¹ + δ·P_Ω(M − Xᵏ)`. For `τ` large
//!   enough its fixed point is also the minimizer, but it converges slowly
//!   near the recovery threshold.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{invalid, Result};
use crate::linalg::{singular_values, svd, Mat, SubspaceSvd};
use crate::rng::StreamRng;
use crate::sampling::{project_unchecked, SampleSet};

/// Default relative Frobenius tolerance for declaring exact recovery.
pub const RECOVERY_TOL: f64 = 1e-4;

const RELAXATION: f64 = 1.6;
const SUBSPACE_SEED: u64 = 0x5b5_9ace;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Admm,
    Svt,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Admm => "admm",
            Algorithm::Svt => "svt",
        }
    }
}

impl core::str::FromStr for Algorithm {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "admm" => Ok(Algorithm::Admm),
            "svt" => Ok(Algorithm::Svt),
            other => Err(invalid!("unknown solver '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    pub algorithm: Algorithm,
    /// SVT step `δ` as a multiple of `1/p`.
    pub step: f64,
    /// SVT threshold `τ` as a multiple of `n·mean|observed|`.
    pub tau: f64,
    /// Relative feasibility `‖P_Ω(X − M)‖_F / ‖P_Ω(M)‖_F` required to stop.
    /// ADMM also requires the same relative change in `Z`.
    pub tol_feas: f64,
    /// Relative change of `‖X‖_*` between iterations required to stop.
    pub tol_obj: f64,
    pub max_iter: usize,
    /// Keep at most this many singular values per shrink and compute them
    /// by warm-started subspace iteration instead of a full SVD.
    pub rank_cap: Option<usize>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Admm,
            step: 1.2,
            tau: 5.0,
            tol_feas: 1e-7,
            tol_obj: 1e-7,
            max_iter: 3000,
            rank_cap: None,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid!("step must be positive, got {}", self.step));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid!("tau must be positive, got {}", self.tau));
        }
        if !(self.tol_feas > 0.0 && self.tol_obj > 0.0) {
            return Err(invalid!("tolerances must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid!("max_iter must be at least 1"));
        }
        if self.rank_cap == Some(0) {
            return Err(invalid!("rank_cap must be at least 1"));
        }
        Ok(())
    }

    /// `min(n, 4r + 10)`, the cap used when a rank hint is known.
    pub fn with_rank_hint(mut self, n: usize, r: usize) -> Self {
        self.rank_cap = Some(n.min(4 * r + 10));
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub xhat: Mat,
    pub iters: usize,
    /// `‖P_Ω(X̂ − M)‖_F`.
    pub feas_resid: f64,
    /// `‖X̂‖_*`.
    pub nuclear_value: f64,
    pub converged: bool,
    /// Rank of the returned iterate.
    pub rank: usize,
}

/// Singular-value soft thresholding `U·diag(max(s − τ, 0))·Vᵀ`.
pub fn shrink(x: &Mat, tau: f64) -> Result<Mat> {
    if !(tau >= 0.0) {
        return Err(invalid!("threshold must be non-negative, got {tau}"));
    }
    Ok(Shrinker::Full.apply(x, tau)?.0)
}

enum Shrinker {
    Full,
    Partial { sub: SubspaceSvd, warm: bool },
}

impl Shrinker {
    fn new(rows: usize, cols: usize, cap: Option<usize>) -> Result<Self> {
        match cap {
            Some(k) if k < rows.min(cols) => {
                let mut rng = StreamRng::new(SUBSPACE_SEED, 0);
                Ok(Shrinker::Partial {
                    sub: SubspaceSvd::new(cols, k, &mut rng)?,
                    warm: false,
                })
            }
            _ => Ok(Shrinker::Full),
        }
    }

    /// Shrunk matrix, its nuclear norm and its rank.
    fn apply(&mut self, x: &Mat, tau: f64) -> Result<(Mat, f64, usize)> {
        let f = match self {
            Shrinker::Full => svd(x)?,
            Shrinker::Partial { sub, warm } => {
                let extra = if *warm { 0 } else { 3 };
                *warm = true;
                let f = sub.step(x, extra)?;
                // The cap only approximates the prox when something below
                // the threshold was seen; otherwise fall back to the full SVD.
                if f.s.last().is_some_and(|s| *s > tau) {
                    svd(x)?
                } else {
                    f
                }
            }
        };
        let keep = f.s.iter().take_while(|s| **s > tau).count();
        if keep == 0 {
            return Ok((Mat::zeros(x.rows(), x.cols()), 0.0, 0));
        }
        let w: Vec<f64> = f.s[..keep].iter().map(|s| s - tau).collect();
        let nuc = w.iter().sum();
        let out = Mat::weighted_outer(&f.u.leading_columns(keep), &w, &f.v.leading_columns(keep));
        Ok((out, nuc, keep))
    }
}

/// Minimizes `‖X‖_*` subject to `P_Ω(X) = P_Ω(observed)`. Entries of
/// `observed` off `Ω` are ignored. Running out of iterations is reported
/// through `converged = false`, not as an error.
pub fn complete(s: &SampleSet, observed: &Mat, params: &SolverParams) -> Result<SolveResult> {
    params.validate()?;
    let (n1, n2) = (s.n1(), s.n2());
    if observed.shape() != (n1, n2) {
        return Err(invalid!(
            "observations are {}x{} but the sample set is {n1}x{n2}",
            observed.rows(),
            observed.cols()
        ));
    }
    if !observed.is_finite() {
        return Err(invalid!("observations contain non-finite values"));
    }
    let b = project_unchecked(observed, s);
    if s.is_empty() || b.is_zero() {
        // The zero matrix is feasible and has zero nuclear norm.
        return Ok(SolveResult {
            xhat: Mat::zeros(n1, n2),
            iters: 0,
            feas_resid: 0.0,
            nuclear_value: 0.0,
            converged: true,
            rank: 0,
        });
    }
    let mut shrinker = Shrinker::new(n1, n2, params.rank_cap)?;
    match params.algorithm {
        Algorithm::Admm => admm(s, &b, params, &mut shrinker),
        Algorithm::Svt => svt(s, &b, params, &mut shrinker),
    }
}

fn feasibility(s: &SampleSet, b: &Mat, x: &Mat) -> f64 {
    let mut r = project_unchecked(x, s);
    r.axpy(-1.0, b);
    r.frobenius_norm()
}

fn admm(s: &SampleSet, b: &Mat, params: &SolverParams, shrinker: &mut Shrinker) -> Result<SolveResult> {
    let (n1, n2) = b.shape();
    let b_norm = b.frobenius_norm();
    // Start with a threshold at the RMS observed entry; residual balancing
    // moves it to the right scale within a few iterations.
    let mut beta = (s.len() as f64).sqrt() / b_norm;
    let mut z = b.clone();
    let mut u = Mat::zeros(n1, n2);
    let mut x = Mat::zeros(n1, n2);
    let (mut nuc, mut rank) = (0.0, 0);
    let mut prev_nuc = f64::NAN;
    for it in 1..=params.max_iter {
        let mut w = z.clone();
        w.axpy(-1.0, &u);
        (x, nuc, rank) = shrinker.apply(&w, 1.0 / beta)?;

        let mut xr = x.scale(RELAXATION);
        xr.axpy(1.0 - RELAXATION, &z);
        let z_prev = core::mem::replace(&mut z, xr.add(&u));
        for ((zi, bi), &keep) in z.as_mut_slice().iter_mut().zip(b.as_slice()).zip(s.mask()) {
            if keep {
                *zi = *bi;
            }
        }
        u.axpy(1.0, &xr.sub(&z));

        let primal = x.sub(&z).frobenius_norm();
        let change = z.sub(&z_prev).frobenius_norm();
        let obj_change = (nuc - prev_nuc).abs() / nuc.max(f64::MIN_POSITIVE);
        prev_nuc = nuc;
        let feas = feasibility(s, b, &x);
        if feas <= params.tol_feas * b_norm
            && change <= params.tol_feas * b_norm
            && obj_change <= params.tol_obj
        {
            return Ok(SolveResult {
                xhat: x,
                iters: it,
                feas_resid: feas,
                nuclear_value: nuc,
                converged: true,
                rank,
            });
        }
        let dual = beta * change;
        if primal > 10.0 * dual {
            beta *= 2.0;
            u.scale_mut(0.5);
        } else if dual > 10.0 * primal {
            beta *= 0.5;
            u.scale_mut(2.0);
        }
    }
    Ok(SolveResult {
        feas_resid: feasibility(s, b, &x),
        xhat: x,
        iters: params.max_iter,
        nuclear_value: nuc,
        converged: false,
        rank,
    })
}

fn svt(s: &SampleSet, b: &Mat, params: &SolverParams, shrinker: &mut Shrinker) -> Result<SolveResult> {
    let (n1, n2) = b.shape();
    let b_norm = b.frobenius_norm();
    let p = s.len() as f64 / (n1 * n2) as f64;
    let mean_abs = b.as_slice().iter().map(|x| x.abs()).sum::<f64>() / s.len() as f64;
    let tau = params.tau * n1.max(n2) as f64 * mean_abs;
    let delta = params.step / p;

    // Kick-start: skip the iterations during which shrink(Y) would be zero.
    let top = singular_values(b)?[0];
    let k0 = (tau / (delta * top)).ceil().max(1.0);
    let mut y = b.scale(k0 * delta);

    let mut x = Mat::zeros(n1, n2);
    let (mut nuc, mut rank) = (0.0, 0);
    let mut prev_nuc = f64::NAN;
    let mut feas = b_norm;
    for it in 1..=params.max_iter {
        (x, nuc, rank) = shrinker.apply(&y, tau)?;
        let mut resid = b.clone();
        resid.axpy(-1.0, &project_unchecked(&x, s));
        feas = resid.frobenius_norm();
        let obj_change = (nuc - prev_nuc).abs() / nuc.max(f64::MIN_POSITIVE);
        if feas <= params.tol_feas * b_norm && obj_change <= params.tol_obj {
            return Ok(SolveResult {
                xhat: x,
                iters: it,
                feas_resid: feas,
                nuclear_value: nuc,
                converged: true,
                rank,
            });
        }
        if !(feas.is_finite() && feas < 1e6 * b_norm) {
            // Step too long for this sampling pattern; report, don't throw.
            break;
        }
        prev_nuc = nuc;
        y.axpy(delta, &resid);
    }
    Ok(SolveResult {
        xhat: x,
        iters: params.max_iter,
        feas_resid: feas,
        nuclear_value: nuc,
        converged: false,
        rank,
    })
}

/// `(relerr ≤ tol, relerr)` with `relerr = ‖X̂ − M‖_F / max(1, ‖M‖_F)`.
pub fn recovered(m: &Mat, xhat: &Mat, tol: f64) -> Result<(bool, f64)> {
    if m.shape() != xhat.shape() {
        return Err(invalid!(
            "shapes differ: {}x{} vs {}x{}",
            m.rows(),
            m.cols(),
            xhat.rows(),
            xhat.cols()
        ));
    }
    let err = xhat.sub(m).frobenius_norm() / m.frobenius_norm().max(1.0);
    Ok((err <= tol, err))
}
