//! Dual certificates for nuclear-norm recovery and the operator quantities
//! that control their existence.
//!
//! A certificate is a matrix `Y` supported on `Ω` with `P_T(Y) = E` and
//! `‖P_{T⊥}(Y)‖ < 1`; together with injectivity of `P_Ω` on `T` it proves
//! that `M` is the unique minimizer. The canonical choice is
//! `Y = P_Ω P_T (P_T P_Ω P_T)⁻¹ E`, built either from the Neumann series
//! `p⁻¹ Σ_k (−1)^k (P_T Q_Ω P_T)^k` or by conjugate gradients on `T`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::geometry::TangentSpace;
use crate::linalg::{lanczos_extremes, singular_values, Mat};
use crate::models::ModelSpec;
use crate::rng::StreamRng;
use crate::sampling::{project_unchecked, q_omega_unchecked, sample_bernoulli, SampleSet};

/// Threshold `σ₀ = 1/576` below which `5√σ/(1 − 4√σ) < 1/4`; only used in
/// diagnostics.
pub const SIGMA0: f64 = 1.0 / 576.0;

/// Krylov budget for the restricted spectrum.
pub const LANCZOS_STEPS: usize = 300;

/// Largest power accepted by [`neumann_term_norms`].
pub const MAX_TERM_ORDER: usize = 8;

/// Largest order accepted by [`expand_identity_check`].
pub const MAX_IDENTITY_ORDER: usize = 4;

const START_SEED: u64 = 0xce47_1f1c_a7e5;

fn check_pair(t: &TangentSpace, s: &SampleSet) -> Result<()> {
    let n = t.n();
    if s.n1() != n || s.n2() != n {
        return Err(invalid!(
            "sample set is {}x{} but the tangent space lives in {n}x{n}",
            s.n1(),
            s.n2()
        ));
    }
    if s.is_empty() || !(s.p() > 0.0) {
        return Err(invalid!("sample set is empty"));
    }
    Ok(())
}

/// Extreme eigenvalues of `P_T P_Ω P_T` restricted to `T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RestrictedSpectrum {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `p⁻¹‖P_T P_Ω P_T − pP_T‖ = max(|λ_max − p|, |λ_min − p|)/p`.
    pub a_stat: f64,
    pub steps: usize,
    /// The Krylov space filled `T` or became invariant, so the values are
    /// exact rather than inner bounds.
    pub exhausted: bool,
}

pub fn restricted_spectrum(t: &TangentSpace, s: &SampleSet) -> Result<RestrictedSpectrum> {
    check_pair(t, s)?;
    let n = t.n();
    let p = s.p();
    let mut rng = StreamRng::new(START_SEED, 0);
    let start = t.pt(&Mat::gaussian(n, n, &mut rng));
    let dim = t.dim();
    let ext = lanczos_extremes(
        |w| t.pt(&project_unchecked(w, s)),
        |w| t.pt(w),
        &start,
        LANCZOS_STEPS.min(dim),
    );
    if !(ext.min.is_finite() && ext.max.is_finite()) {
        return Err(Error::NumericFailure {
            what: "restricted Lanczos",
            iterations: ext.steps,
            last: ext.max,
        });
    }
    Ok(RestrictedSpectrum {
        lambda_min: ext.min,
        lambda_max: ext.max,
        a_stat: (ext.max - p).abs().max((ext.min - p).abs()) / p,
        steps: ext.steps,
        exhausted: ext.steps == dim || ext.invariant,
    })
}

/// `p⁻¹‖P_T P_Ω P_T − pP_T‖`; zero for a full sample.
pub fn deviation_stat(t: &TangentSpace, s: &SampleSet) -> Result<f64> {
    Ok(restricted_spectrum(t, s)?.a_stat)
}

/// `P_Ω` is injective on `T` with room to spare: enough samples, a
/// deviation below one and a smallest eigenvalue above `p(1 − a)/2`.
fn injective(t: &TangentSpace, s: &SampleSet, spec: &RestrictedSpectrum) -> bool {
    s.len() >= t.dim() && spec.a_stat < 1.0 && spec.lambda_min > 0.5 * s.p() * (1.0 - spec.a_stat)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Neumann {
        k_max: usize,
        /// Number of series terms summed.
        terms: usize,
        /// `k_max` was reached before a term fell below the tolerance.
        truncated: bool,
    },
    IterativeSolve {
        tol: f64,
        iterations: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateReport {
    pub y: Mat,
    /// `‖P_T(Y) − E‖_F`.
    pub resid_t: f64,
    /// `Y` vanishes off `Ω`.
    pub supp_ok: bool,
    /// `‖P_{T⊥}(Y)‖`, spectral.
    pub ptperp_norm: f64,
    pub a_stat: f64,
    pub lambda_min: f64,
    pub injective: bool,
    pub method: Method,
    /// Frobenius norms of the Neumann terms `(P_T Q_Ω P_T)^k E`; empty for
    /// the iterative builder.
    pub term_norms: Vec<f64>,
}

impl CertificateReport {
    pub fn certified(&self, tol: f64) -> bool {
        self.supp_ok && self.resid_t <= tol && self.ptperp_norm < 1.0 && self.injective
    }

    fn assemble(
        t: &TangentSpace,
        s: &SampleSet,
        y: Mat,
        spec: &RestrictedSpectrum,
        method: Method,
        term_norms: Vec<f64>,
    ) -> Result<Self> {
        let (resid_t, supp_ok, ptperp_norm) = measure(t, s, &y)?;
        Ok(Self {
            y,
            resid_t,
            supp_ok,
            ptperp_norm,
            a_stat: spec.a_stat,
            lambda_min: spec.lambda_min,
            injective: injective(t, s, spec),
            method,
            term_norms,
        })
    }
}

fn measure(t: &TangentSpace, s: &SampleSet, y: &Mat) -> Result<(f64, bool, f64)> {
    let n = t.n();
    let supp_ok = (0..n).all(|i| (0..n).all(|j| s.contains(i, j) || y[(i, j)] == 0.0));
    let resid = t.pt(y).sub(t.e()).frobenius_norm();
    let perp = singular_values(&t.ptperp(y))?[0];
    Ok((resid, supp_ok, perp))
}

/// `Y = p⁻¹P_Ω(Σ_{k≤k_max} (−1)^k (P_T Q_Ω P_T)^k E)`, stopping once a term
/// drops below `tol` in Frobenius norm.
pub fn build_certificate_neumann(
    t: &TangentSpace,
    s: &SampleSet,
    k_max: usize,
    tol: f64,
) -> Result<CertificateReport> {
    check_pair(t, s)?;
    let spec = restricted_spectrum(t, s)?;
    if spec.a_stat >= 1.0 {
        return Err(Error::Divergence { a_stat: spec.a_stat });
    }
    let mut term = t.e().clone();
    let mut sum = term.clone();
    let mut norms = vec![term.frobenius_norm()];
    let mut truncated = true;
    for k in 1..=k_max {
        term = t.pt(&q_omega_unchecked(&term, s)).scale(-1.0);
        let norm = term.frobenius_norm();
        norms.push(norm);
        sum.axpy(1.0, &term);
        if norm < tol {
            truncated = false;
            break;
        }
        if k == k_max {
            break;
        }
    }
    if k_max == 0 {
        truncated = norms[0] >= tol;
    }
    let y = project_unchecked(&sum, s).scale(1.0 / s.p());
    let method = Method::Neumann {
        k_max,
        terms: norms.len(),
        truncated,
    };
    CertificateReport::assemble(t, s, y, &spec, method, norms)
}

/// Solves `P_T P_Ω P_T(W) = E` on `T` by conjugate gradients and returns
/// `Y = P_Ω(W)`.
pub fn build_certificate_solve(
    t: &TangentSpace,
    s: &SampleSet,
    tol: f64,
    max_iter: usize,
) -> Result<CertificateReport> {
    check_pair(t, s)?;
    if !(tol > 0.0) {
        return Err(invalid!("solve tolerance must be positive"));
    }
    let spec = restricted_spectrum(t, s)?;
    if s.len() < t.dim() || spec.lambda_min <= 1e-9 * s.p() {
        return Err(Error::InjectivityFailure {
            lambda_min: spec.lambda_min,
        });
    }
    let op = |w: &Mat| t.pt(&project_unchecked(w, s));
    let mut w = Mat::zeros(t.n(), t.n());
    let mut r = t.e().clone();
    let mut d = r.clone();
    let mut rr = r.dot(&r);
    let mut iterations = 0;
    while rr.sqrt() > tol {
        if iterations == max_iter {
            return Err(Error::NonConvergence {
                iterations,
                residual: rr.sqrt(),
            });
        }
        let ad = op(&d);
        let step = rr / d.dot(&ad);
        w.axpy(step, &d);
        r.axpy(-step, &ad);
        // Recompute the residual now and then to stop drift.
        if iterations % 50 == 49 {
            r = t.e().sub(&op(&w));
        }
        let rr_new = r.dot(&r);
        d.scale_mut(rr_new / rr);
        d.axpy(1.0, &r);
        rr = rr_new;
        iterations += 1;
    }
    let y = project_unchecked(&w, s);
    let method = Method::IterativeSolve { tol, iterations };
    CertificateReport::assemble(t, s, y, &spec, method, Vec::new())
}

/// Re-checks the certificate conditions on `rep.y`: support in `Ω`,
/// `‖P_T(Y) − E‖_F ≤ tol`, `‖P_{T⊥}(Y)‖ < 1`, and the injectivity margin
/// recorded in the report.
pub fn verify_certificate(t: &TangentSpace, s: &SampleSet, rep: &CertificateReport, tol: f64) -> bool {
    if check_pair(t, s).is_err() || rep.y.shape() != (t.n(), t.n()) {
        return false;
    }
    let Ok((resid, supp_ok, perp)) = measure(t, s, &rep.y) else {
        return false;
    };
    let spec = RestrictedSpectrum {
        lambda_min: rep.lambda_min,
        lambda_max: f64::NAN,
        a_stat: rep.a_stat,
        steps: 0,
        exhausted: false,
    };
    supp_ok && resid <= tol && perp < 1.0 && injective(t, s, &spec)
}

/// Spectral norms of `(Q_Ω P_T)^k Q_Ω(E)` and `(Q_Ω Q_T)^k Q_Ω(E)` for
/// `k = 0..=k_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeumannTermNorms {
    pub pt: Vec<f64>,
    pub qt: Vec<f64>,
}

pub fn neumann_term_norms(t: &TangentSpace, s: &SampleSet, k_max: usize) -> Result<NeumannTermNorms> {
    check_pair(t, s)?;
    if k_max > MAX_TERM_ORDER {
        return Err(invalid!("term order {k_max} exceeds {MAX_TERM_ORDER}"));
    }
    let start = q_omega_unchecked(t.e(), s);
    let mut a = start.clone();
    let mut b = start;
    let mut out = NeumannTermNorms {
        pt: Vec::with_capacity(k_max + 1),
        qt: Vec::with_capacity(k_max + 1),
    };
    for k in 0..=k_max {
        if k > 0 {
            a = q_omega_unchecked(&t.pt(&a), s);
            b = q_omega_unchecked(&t.qt(&b), s);
        }
        out.pt.push(singular_values(&a)?[0]);
        out.qt.push(singular_values(&b)?[0]);
    }
    Ok(out)
}

/// Outcome of transferring `Q_T`-string bounds to `P_T`-string bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivCheck {
    /// Smallest `σ` with `‖(Q_Ω Q_T)^k Q_Ω(E)‖ ≤ σ^{(k+1)/2}` for every k.
    pub sigma: f64,
    /// `σ < 1` and `8nr/m < σ^{3/2}`.
    pub applicable: bool,
    /// `max_k ‖(Q_Ω P_T)^k Q_Ω(E)‖ / ((1 + 4^{k+1}) σ^{(k+1)/2})`.
    pub worst_ratio: f64,
    /// Not applicable, or every ratio is at most one.
    pub holds: bool,
    pub below_sigma0: bool,
}

pub fn equiv_lemma_check(norms: &NeumannTermNorms, n: usize, r: usize, m: f64) -> EquivCheck {
    let sigma = norms
        .qt
        .iter()
        .enumerate()
        .map(|(k, q)| q.powf(2.0 / (k as f64 + 1.0)))
        .fold(0.0, f64::max);
    let applicable = sigma > 0.0 && sigma < 1.0 && 8.0 * (n * r) as f64 / m < sigma.powf(1.5);
    let worst_ratio = norms
        .pt
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let e = k as f64 + 1.0;
            let bound = (1.0 + 4f64.powf(e)) * sigma.powf(e / 2.0);
            if bound > 0.0 {
                v / bound
            } else if *v == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    EquivCheck {
        sigma,
        applicable,
        worst_ratio,
        holds: !applicable || worst_ratio <= 1.0 + 1e-12,
        below_sigma0: sigma < SIGMA0,
    }
}

/// Coefficients expressing `(Q_Ω P_T)^k Q_Ω` in the strings
/// `(Q_Ω Q_T)^j Q_Ω`, `(Q_Ω Q_T)^j`, `Q_T(Q_Ω Q_T)^j Q_Ω` and
/// `Q_T(Q_Ω Q_T)^j`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeumannCoeffs {
    pub k: usize,
    pub rho_prime: f64,
    pub p: f64,
    /// Indexed by `j = 0..=k`.
    pub alpha: Vec<f64>,
    /// `j = 0..k`.
    pub beta: Vec<f64>,
    /// `j = 0..k−1`.
    pub gamma: Vec<f64>,
    /// `j = 0..k−2`.
    pub delta: Vec<f64>,
}

impl NeumannCoeffs {
    /// `λ^{⌈(k−j)/2⌉} 4^k` with `λ = ρ′/p`.
    pub fn bound(&self, j: usize) -> f64 {
        let lambda = self.rho_prime / self.p;
        let e = (self.k.saturating_sub(j) + 1) / 2;
        lambda.powi(e as i32) * 4f64.powi(self.k as i32)
    }

    /// Largest `|coef|/bound` over all four sequences.
    pub fn worst_bound_ratio(&self) -> f64 {
        [&self.alpha, &self.beta, &self.gamma, &self.delta]
            .iter()
            .flat_map(|seq| seq.iter().enumerate().map(|(j, c)| c.abs() / self.bound(j)))
            .fold(0.0, f64::max)
    }
}

pub fn neumann_coeffs(k: usize, rho_prime: f64, p: f64) -> Result<NeumannCoeffs> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid!("p must lie in (0, 1], got {p}"));
    }
    if !(0.0..1.0).contains(&rho_prime) {
        return Err(invalid!("rho' must lie in [0, 1), got {rho_prime}"));
    }
    let c1 = rho_prime * (1.0 - 2.0 * p) / p;
    let c2 = rho_prime * (1.0 - p) / p;
    let get = |v: &[f64], j: isize| if j >= 0 { v.get(j as usize).copied().unwrap_or(0.0) } else { 0.0 };
    let (mut alpha, mut beta, mut gamma, mut delta) = (vec![1.0], Vec::new(), Vec::new(), Vec::new());
    for kk in 0..k {
        let a = |j: isize| get(&alpha, j) + (1.0 - rho_prime) * get(&gamma, j);
        let b = |j: isize| get(&beta, j) + (1.0 - rho_prime) * get(&delta, j);
        let next_alpha: Vec<f64> = (0..=kk as isize + 1)
            .map(|j| a(j - 1) + c1 * a(j) + if j == 0 { rho_prime * b(0) } else { 0.0 })
            .collect();
        let next_beta: Vec<f64> = (0..=kk as isize)
            .map(|j| b(j - 1) + if j > 0 { c1 * b(j) } else { c2 * a(0) })
            .collect();
        let next_gamma: Vec<f64> = (0..kk as isize).map(|j| c2 * a(j + 1)).collect();
        let next_delta: Vec<f64> = (0..kk as isize - 1).map(|j| c2 * b(j + 1)).collect();
        alpha = next_alpha;
        beta = next_beta;
        gamma = next_gamma;
        delta = next_delta;
    }
    Ok(NeumannCoeffs {
        k,
        rho_prime,
        p,
        alpha,
        beta,
        gamma,
        delta,
    })
}

/// Applies both sides of the expansion of `(Q_Ω P_T)^k Q_Ω` to `trials`
/// random unit-Frobenius matrices and returns the largest
/// `‖lhs − rhs‖_F / max(1, ‖lhs‖_F)`.
pub fn expand_identity_check(
    t: &TangentSpace,
    s: &SampleSet,
    k: usize,
    trials: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    check_pair(t, s)?;
    if k > MAX_IDENTITY_ORDER {
        return Err(invalid!("identity order {k} exceeds {MAX_IDENTITY_ORDER}"));
    }
    let c = neumann_coeffs(k, t.rho_prime(), s.p())?;
    let n = t.n();
    let qo = |x: &Mat| q_omega_unchecked(x, s);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mut x = Mat::gaussian(n, n, rng);
        x.scale_mut(1.0 / x.frobenius_norm());

        let mut lhs = qo(&x);
        for _ in 0..k {
            lhs = qo(&t.pt(&lhs));
        }

        // (Q_Ω Q_T)^j applied to Q_Ω x and to x, for every j ≤ k.
        let mut with_q = Vec::with_capacity(k + 1);
        let mut without_q = Vec::with_capacity(k + 1);
        with_q.push(qo(&x));
        without_q.push(x.clone());
        for j in 1..=k {
            with_q.push(qo(&t.qt(&with_q[j - 1])));
            without_q.push(qo(&t.qt(&without_q[j - 1])));
        }
        let mut rhs = Mat::zeros(n, n);
        for (j, a) in c.alpha.iter().enumerate() {
            rhs.axpy(*a, &with_q[j]);
        }
        for (j, b) in c.beta.iter().enumerate() {
            rhs.axpy(*b, &without_q[j]);
        }
        for (j, g) in c.gamma.iter().enumerate() {
            rhs.axpy(*g, &t.qt(&with_q[j]));
        }
        for (j, d) in c.delta.iter().enumerate() {
            rhs.axpy(*d, &t.qt(&without_q[j]));
        }
        let scale = lhs.frobenius_norm().max(1.0);
        worst = worst.max(lhs.sub(&rhs).frobenius_norm() / scale);
    }
    Ok(worst)
}

/// Monte-Carlo estimate of `E tr((AᵀA)^j)` with `A = (Q_Ω Q_T)^k Q_Ω(E)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentEstimate {
    pub j: usize,
    pub k: usize,
    pub trials: usize,
    pub mean: f64,
    pub stderr: f64,
    /// Mean of `max(μ₁, μ₂)` over the drawn instances.
    pub mu: f64,
    /// `(j(k+1))^{2j(k+1)} n (n r_μ²/m)^{j(k+1)}` with `r_μ = μ²r`, `m = pn²`.
    pub moment1_bound: f64,
    /// `((j(k+1))⁶ n r_μ/m)^{j(k+1)}`.
    pub moment2_bound: f64,
    /// `(1 − p)r/p` when `j = 1`, `k = 0`.
    pub closed_form: Option<f64>,
}

impl MomentEstimate {
    /// Estimate divided by the second bound.
    pub fn moment2_ratio(&self) -> f64 {
        if self.moment2_bound > 0.0 {
            self.mean / self.moment2_bound
        } else if self.mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Largest `j(k+1)` accepted by [`trace_moment_estimate`].
pub const MAX_MOMENT_ORDER: usize = 6;

/// Largest dimension accepted by [`trace_moment_estimate`].
pub const MAX_MOMENT_N: usize = 64;

#[allow(clippy::too_many_arguments)]
pub fn trace_moment_estimate(
    model: &ModelSpec,
    n: usize,
    r: usize,
    p: f64,
    j: usize,
    k: usize,
    trials: usize,
    rng: &mut StreamRng,
) -> Result<MomentEstimate> {
    if j == 0 || j * (k + 1) > MAX_MOMENT_ORDER {
        return Err(invalid!("need 1 <= j(k+1) <= {MAX_MOMENT_ORDER}, got j={j}, k={k}"));
    }
    if n > MAX_MOMENT_N {
        return Err(invalid!("moment estimates are limited to n <= {MAX_MOMENT_N}"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid!("p must lie in (0, 1], got {p}"));
    }
    if trials < 2 {
        return Err(invalid!("need at least two trials"));
    }
    let mut values = Vec::with_capacity(trials);
    let mut mu_sum = 0.0;
    for _ in 0..trials {
        let mut trial = rng.fork();
        let gt = model.generate(n, r, &mut trial)?;
        let t = gt.tangent_space()?;
        mu_sum += t.incoherence().mu();
        let s = sample_bernoulli(n, p, &mut trial)?;
        let mut a = q_omega_unchecked(t.e(), &s);
        for _ in 0..k {
            a = q_omega_unchecked(&t.qt(&a), &s);
        }
        let ata = a.t_matmul(&a);
        let mut pow = ata.clone();
        for _ in 1..j {
            pow = pow.matmul(&ata);
        }
        values.push(pow.trace());
    }
    let tn = trials as f64;
    let mean = values.iter().sum::<f64>() / tn;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (tn - 1.0);
    let mu = mu_sum / tn;
    let nf = n as f64;
    let m = p * nf * nf;
    let r_mu = mu * mu * r as f64;
    let e = (j * (k + 1)) as f64;
    Ok(MomentEstimate {
        j,
        k,
        trials,
        mean,
        stderr: (var / tn).sqrt(),
        mu,
        moment1_bound: e.powf(2.0 * e) * nf * (nf * r_mu * r_mu / m).powf(e),
        moment2_bound: (e.powi(6) * nf * r_mu / m).powf(e),
        closed_form: (j == 1 && k == 0).then(|| (1.0 - p) * r as f64 / p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::gen_random_orthogonal;
    use crate::models::default_sigma;

    fn instance(n: usize, r: usize, p: f64, seed: u64) -> (TangentSpace, SampleSet) {
        let mut rng = StreamRng::new(seed, 0);
        let gt = gen_random_orthogonal(n, r, &default_sigma(r), &mut rng).unwrap();
        let s = sample_bernoulli(n, p, &mut rng).unwrap();
        (gt.tangent_space().unwrap(), s)
    }

    #[test]
    fn full_sample() {
        let (t, _) = instance(12, 2, 0.5, 1);
        let full = SampleSet::full(12, 12).unwrap();
        let spec = restricted_spectrum(&t, &full).unwrap();
        assert!(spec.a_stat < 1e-12);
        assert!(spec.exhausted);
        let neu = build_certificate_neumann(&t, &full, 10, 1e-12).unwrap();
        assert!(neu.y.sub(t.e()).max_abs() < 1e-12);
        assert!(neu.ptperp_norm < 1e-12);
        assert!(neu.certified(1e-10));
        let sol = build_certificate_solve(&t, &full, 1e-12, 100).unwrap();
        assert!(sol.y.sub(t.e()).max_abs() < 1e-12);
        assert!(verify_certificate(&t, &full, &sol, 1e-10));
        let norms = neumann_term_norms(&t, &full, 3).unwrap();
        assert!(norms.pt.iter().chain(&norms.qt).all(|x| *x == 0.0));
    }

    #[test]
    fn spectrum_matches_dense_operator() {
        let n = 6;
        let (t, s) = instance(n, 2, 0.6, 2);
        // dense matrix of P_T P_Ω P_T − pP_T on all of n×n
        let p = s.p();
        let mut op = Mat::zeros(n * n, n * n);
        for c in 0..n * n {
            let mut unit = Mat::zeros(n, n);
            unit.as_mut_slice()[c] = 1.0;
            let mut img = t.pt(&project_unchecked(&t.pt(&unit), &s));
            img.axpy(-p, &t.pt(&unit));
            for (i, x) in img.as_slice().iter().enumerate() {
                op[(i, c)] = *x;
            }
        }
        let top = singular_values(&op).unwrap()[0] / p;
        let a = deviation_stat(&t, &s).unwrap();
        assert!((a - top).abs() < 1e-9, "{a} vs {top}");
    }

    #[test]
    fn builders_agree() {
        let mut done = 0;
        for seed in 0..40 {
            let (t, s) = instance(20, 1, 0.85, 100 + seed);
            let a = deviation_stat(&t, &s).unwrap();
            if a >= 0.5 {
                continue;
            }
            let neu = build_certificate_neumann(&t, &s, 200, 1e-12).unwrap();
            let sol = build_certificate_solve(&t, &s, 1e-11, 1000).unwrap();
            assert!(neu.y.sub(&sol.y).frobenius_norm() <= 1e-6);
            assert!(neu.supp_ok && sol.supp_ok);
            // Pythagoras on the minimal-norm certificate
            let perp = t.ptperp(&sol.y).frobenius_norm().powi(2);
            assert!((sol.y.frobenius_norm().powi(2) - t.rank() as f64 - perp).abs() < 1e-8);
            // geometric decay at roughly the deviation rate
            for w in neu.term_norms.windows(2).skip(1).take(5) {
                assert!(w[1] <= w[0] * a * 1.1 + 1e-14);
            }
            done += 1;
        }
        assert!(done >= 5, "only {done} instances with a < 1/2");
    }

    #[test]
    fn solve_gives_minimum_norm_certificate() {
        let n = 10;
        let (t, s) = instance(n, 1, 0.7, 7);
        let rep = build_certificate_solve(&t, &s, 1e-12, 1000).unwrap();
        let mut rng = StreamRng::new(7, 1);
        // P_Ω-supported directions Z with P_T P_Ω(Z) = 0
        for _ in 0..50 {
            let g = project_unchecked(&Mat::gaussian(n, n, &mut rng), &s);
            // remove the component with P_T(g) != 0 by solving on T
            let target = t.pt(&g);
            let mut w = Mat::zeros(n, n);
            let mut r = target.clone();
            let mut d = r.clone();
            let mut rr = r.dot(&r);
            for _ in 0..500 {
                if rr.sqrt() < 1e-13 {
                    break;
                }
                let ad = t.pt(&project_unchecked(&d, &s));
                let step = rr / d.dot(&ad);
                w.axpy(step, &d);
                r.axpy(-step, &ad);
                let rn = r.dot(&r);
                d.scale_mut(rn / rr);
                d.axpy(1.0, &r);
                rr = rn;
            }
            let null = g.sub(&project_unchecked(&w, &s));
            assert!(t.pt(&null).frobenius_norm() < 1e-9);
            let z = rep.y.add(&null);
            assert!(z.frobenius_norm() >= rep.y.frobenius_norm() - 1e-12);
        }
    }

    #[test]
    fn too_few_samples_fail_injectivity() {
        let n = 16;
        let (t, _) = instance(n, 2, 0.5, 3);
        let mut rng = StreamRng::new(3, 9);
        let s = crate::sampling::sample_uniform(n, t.dim() - 5, &mut rng).unwrap();
        let spec = restricted_spectrum(&t, &s).unwrap();
        assert!(spec.lambda_min < 1e-8);
        assert!(matches!(
            build_certificate_solve(&t, &s, 1e-10, 500),
            Err(Error::InjectivityFailure { .. })
        ));
        assert!(matches!(
            build_certificate_neumann(&t, &s, 50, 1e-10),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn term_norms_and_equivalence() {
        let (t, s) = instance(24, 1, 0.7, 4);
        let norms = neumann_term_norms(&t, &s, 4).unwrap();
        assert_eq!(norms.pt[0], norms.qt[0]);
        let eq = equiv_lemma_check(&norms, 24, 1, s.p() * 576.0);
        assert!(eq.holds, "{eq:?}");
        assert!(neumann_term_norms(&t, &s, 9).is_err());
    }

    #[test]
    fn coefficient_closed_forms() {
        let c = neumann_coeffs(0, 0.3, 0.5).unwrap();
        assert_eq!(c.alpha, vec![1.0]);
        assert!(c.beta.is_empty() && c.gamma.is_empty() && c.delta.is_empty());
        let (rp, p) = (0.2, 0.6);
        let base = rp * (1.0 - p) / p;
        for k in 1..=6 {
            let c = neumann_coeffs(k, rp, p).unwrap();
            assert_eq!(c.alpha.len(), k + 1);
            assert_eq!(c.beta.len(), k);
            assert_eq!(c.gamma.len(), k.saturating_sub(1));
            assert_eq!(c.delta.len(), k.saturating_sub(2));
            assert!((c.alpha[k] - 1.0).abs() < 1e-12);
            assert!((c.beta[k - 1] - base).abs() < 1e-12);
            if k >= 2 {
                assert!((c.gamma[k - 2] - base).abs() < 1e-12);
            }
            if k >= 3 {
                assert!((c.delta[k - 3] - base * base).abs() < 1e-12);
            }
        }
        assert!(neumann_coeffs(2, 1.0, 0.5).is_err());
        assert!(neumann_coeffs(2, 0.5, 0.0).is_err());
    }

    #[test]
    fn expansion_identity() {
        let (t, s) = instance(24, 2, 0.5, 5);
        let mut rng = StreamRng::new(5, 3);
        assert_eq!(expand_identity_check(&t, &s, 0, 3, &mut rng).unwrap(), 0.0);
        for k in 1..=3 {
            let d = expand_identity_check(&t, &s, k, 3, &mut rng).unwrap();
            assert!(d <= 1e-8, "k={k}: {d}");
        }
        let full = SampleSet::full(24, 24).unwrap();
        assert_eq!(expand_identity_check(&t, &full, 2, 2, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn first_moment_closed_form() {
        let mut rng = StreamRng::new(6, 0);
        let est = trace_moment_estimate(&ModelSpec::RandomOrthogonal, 16, 2, 0.5, 1, 0, 200, &mut rng).unwrap();
        let cf = est.closed_form.unwrap();
        assert!((est.mean - cf).abs() <= 3.0 * est.stderr, "{est:?}");
        let full = trace_moment_estimate(&ModelSpec::RandomOrthogonal, 8, 1, 1.0, 2, 1, 3, &mut rng).unwrap();
        assert_eq!(full.mean, 0.0);
        assert!(trace_moment_estimate(&ModelSpec::RandomOrthogonal, 8, 1, 0.5, 4, 1, 3, &mut rng).is_err());
    }
}
