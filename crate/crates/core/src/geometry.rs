//! Tangent space `T` at a rank-r matrix and its operator algebra.
//!
//! With `P_U = UUᵀ`, `P_V = VVᵀ` and `E = UVᵀ`:
//!
//! * `P_T(X) = P_U X + X P_V − P_U X P_V`, `P_{T⊥}(X) = (I − P_U) X (I − P_V)`
//! * `Q_T = P_T − ρ′I` with `ρ = r/n` and `ρ′ = 2ρ − ρ²`
//! * `Q_U = P_U − ρI`, `Q_V = P_V − ρI`
//!
//! The `apply_*` operators work factor-wise in `O(n²r)`. The dense
//! projections are kept for identity checks and coefficient lookups.

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::linalg::Mat;

/// Largest tolerated `‖UᵀU − I‖_F` when building a tangent space.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct TangentSpace {
    u: Mat,
    v: Mat,
    e: Mat,
    pu: Mat,
    pv: Mat,
    qu: Mat,
    qv: Mat,
    rho: f64,
    rho_prime: f64,
}

impl TangentSpace {
    /// Tangent space spanned by the column-orthonormal factors `U`, `V`
    /// (both `n×r`).
    pub fn new(u: &Mat, v: &Mat) -> Result<Self> {
        let t = Self::new_unchecked(u, v)?;
        for (name, f) in [("U", u), ("V", v)] {
            let defect = f.orthonormality_defect();
            if !(defect <= ORTHONORMALITY_TOL) {
                return Err(invalid!("{name} is not column-orthonormal (defect {defect:e})"));
            }
        }
        Ok(t)
    }

    /// Skips the orthonormality check. Only shapes are validated; used to
    /// probe how the identities degrade on malformed factors.
    pub fn new_unchecked(u: &Mat, v: &Mat) -> Result<Self> {
        let (n, r) = u.shape();
        if v.shape() != (n, r) {
            return Err(invalid!(
                "U is {}x{} but V is {}x{}",
                n,
                r,
                v.rows(),
                v.cols()
            ));
        }
        if r > n {
            return Err(invalid!("rank {r} exceeds dimension {n}"));
        }
        let pu = u.matmul_t(u);
        let pv = v.matmul_t(v);
        let e = u.matmul_t(v);
        let rho = r as f64 / n as f64;
        let shift = |p: &Mat| {
            let mut q = p.clone();
            for i in 0..n {
                q[(i, i)] -= rho;
            }
            q
        };
        Ok(Self {
            qu: shift(&pu),
            qv: shift(&pv),
            u: u.clone(),
            v: v.clone(),
            e,
            pu,
            pv,
            rho,
            rho_prime: 2.0 * rho - rho * rho,
        })
    }

    pub fn n(&self) -> usize {
        self.u.rows()
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    pub fn u(&self) -> &Mat {
        &self.u
    }

    pub fn v(&self) -> &Mat {
        &self.v
    }

    /// Sign pattern `E = Σ uᵢvᵢᵀ`.
    pub fn e(&self) -> &Mat {
        &self.e
    }

    pub fn pu(&self) -> &Mat {
        &self.pu
    }

    pub fn pv(&self) -> &Mat {
        &self.pv
    }

    pub fn qu(&self) -> &Mat {
        &self.qu
    }

    pub fn qv(&self) -> &Mat {
        &self.qv
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn rho_prime(&self) -> f64 {
        self.rho_prime
    }

    /// `dim T = 2nr − r²`.
    pub fn dim(&self) -> usize {
        let (n, r) = (self.n(), self.rank());
        2 * n * r - r * r
    }

    fn check(&self, x: &Mat) -> Result<()> {
        let n = self.n();
        if x.shape() != (n, n) {
            return Err(invalid!(
                "operand is {}x{}, tangent space lives in {n}x{n}",
                x.rows(),
                x.cols()
            ));
        }
        Ok(())
    }

    pub fn apply_pt(&self, x: &Mat) -> Result<Mat> {
        self.check(x)?;
        Ok(self.pt(x))
    }

    pub fn apply_ptperp(&self, x: &Mat) -> Result<Mat> {
        self.check(x)?;
        Ok(self.ptperp(x))
    }

    /// `Q_T(X) = P_T(X) − ρ′X`.
    pub fn apply_qt(&self, x: &Mat) -> Result<Mat> {
        self.check(x)?;
        Ok(self.qt(x))
    }

    /// `Q_T` through the centered products
    /// `(1−ρ)Q_U X + (1−ρ)X Q_V − Q_U X Q_V`, using the dense `Q_U`, `Q_V`.
    pub fn apply_qt_centered(&self, x: &Mat) -> Result<Mat> {
        self.check(x)?;
        let qux = self.qu.matmul(x);
        let xqv = x.matmul(&self.qv);
        let mut out = qux.scale(1.0 - self.rho);
        out.axpy(1.0 - self.rho, &xqv);
        out.axpy(-1.0, &qux.matmul(&self.qv));
        Ok(out)
    }

    pub(crate) fn pt(&self, x: &Mat) -> Mat {
        // U(UᵀX) + (XV − U(UᵀXV))Vᵀ
        let utx = self.u.t_matmul(x);
        let xv = x.matmul(&self.v);
        let utxv = utx.matmul(&self.v);
        let mut left = xv;
        left.axpy(-1.0, &self.u.matmul(&utxv));
        let mut out = self.u.matmul(&utx);
        out.axpy(1.0, &left.matmul_t(&self.v));
        out
    }

    pub(crate) fn ptperp(&self, x: &Mat) -> Mat {
        let mut out = x.clone();
        out.axpy(-1.0, &self.pt(x));
        out
    }

    pub(crate) fn qt(&self, x: &Mat) -> Mat {
        let mut out = self.pt(x);
        out.axpy(-self.rho_prime, x);
        out
    }

    /// `c_{ab,a′b′} = ⟨e_a e_bᵀ, Q_T(e_{a′} e_{b′}ᵀ)⟩`.
    pub fn qt_coefficient(&self, a: usize, b: usize, a2: usize, b2: usize) -> Result<f64> {
        let n = self.n();
        if a >= n || b >= n || a2 >= n || b2 >= n {
            return Err(invalid!("coefficient index out of range for n = {n}"));
        }
        let uu = self.qu[(a, a2)];
        let vv = self.qv[(b, b2)];
        let mut c = -uu * vv;
        if b == b2 {
            c += (1.0 - self.rho) * uu;
        }
        if a == a2 {
            c += (1.0 - self.rho) * vv;
        }
        Ok(c)
    }

    pub fn incoherence(&self) -> IncoherenceReport {
        let (n, r) = (self.n(), self.rank());
        let nf = n as f64;
        let sr = (r as f64).sqrt();

        let mut mu0 = (f64::NEG_INFINITY, Side::U, 0);
        for (side, p) in [(Side::U, &self.pu), (Side::V, &self.pv)] {
            for a in 0..n {
                if p[(a, a)] > mu0.0 {
                    mu0 = (p[(a, a)], side, a);
                }
            }
        }

        let deviation = |p: &Mat| {
            let mut best = (f64::NEG_INFINITY, 0, 0);
            for a in 0..n {
                for a2 in a..n {
                    let d = (p[(a, a2)] - if a == a2 { self.rho } else { 0.0 }).abs();
                    if d > best.0 {
                        best = (d, a, a2);
                    }
                }
            }
            best
        };
        let du = deviation(&self.pu);
        let dv = deviation(&self.pv);
        let scale1 = nf / sr;

        let mut emax = (f64::NEG_INFINITY, 0, 0);
        for a in 0..n {
            for b in 0..n {
                let x = self.e[(a, b)].abs();
                if x > emax.0 {
                    emax = (x, a, b);
                }
            }
        }

        let mut bmax = (f64::NEG_INFINITY, Side::U, 0, 0);
        for (side, f) in [(Side::U, &self.u), (Side::V, &self.v)] {
            for i in 0..n {
                for k in 0..r {
                    let x = f[(i, k)] * f[(i, k)];
                    if x > bmax.0 {
                        bmax = (x, side, i, k);
                    }
                }
            }
        }

        let (mu1_at, mu1) = if du.0 >= dv.0 {
            ((Side::U, du.1, du.2), du.0 * scale1)
        } else {
            ((Side::V, dv.1, dv.2), dv.0 * scale1)
        };
        IncoherenceReport {
            mu0: mu0.0 * nf / r as f64,
            mu1,
            mu1_u: du.0 * scale1,
            mu1_v: dv.0 * scale1,
            mu2: emax.0 * scale1,
            mu_b: bmax.0 * nf,
            mu0_at: (mu0.1, mu0.2),
            mu1_at,
            mu2_at: (emax.1, emax.2),
            mu_b_at: (bmax.1, bmax.2, bmax.3),
        }
    }

    /// Largest violation of the three projection-identity families
    /// (both `U` and `V` forms), computed with dense matrix algebra.
    pub fn cancellation_identities_check(&self, tol: f64) -> CancellationReport {
        let n = self.n();
        let rho = self.rho;
        let eye = Mat::identity(n);

        // Σ_a′ U_{a,a′}U_{a′,a″} = (1−2ρ)U_{a,a″} + ρ(1−ρ)1_{a=a″}
        let square = |q: &Mat| {
            let mut rhs = q.scale(1.0 - 2.0 * rho);
            rhs.axpy(rho * (1.0 - rho), &eye);
            q.matmul(q).sub(&rhs).max_abs()
        };
        let proj_id = square(&self.qu).max(square(&self.qv));

        // Q_U E = (1−ρ)E = E Q_V
        let e1 = self.e.scale(1.0 - rho);
        let proj_i2d = self
            .qu
            .matmul(&self.e)
            .sub(&e1)
            .max_abs()
            .max(self.e.matmul(&self.qv).sub(&e1).max_abs());

        // E Eᵀ = Q_U + ρI, EᵀE = Q_V + ρI
        let mut pu = self.qu.clone();
        pu.axpy(rho, &eye);
        let mut pv = self.qv.clone();
        pv.axpy(rho, &eye);
        let proj_i3d = self
            .e
            .matmul_t(&self.e)
            .sub(&pu)
            .max_abs()
            .max(self.e.t_matmul(&self.e).sub(&pv).max_abs());

        let max = proj_id.max(proj_i2d).max(proj_i3d);
        CancellationReport {
            proj_id,
            proj_i2d,
            proj_i3d,
            max,
            passed: max <= tol,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    U,
    V,
}

/// Measured incoherence parameters, each the exact maximum with a witness.
///
/// * `mu0 = (n/r)·max(‖P_U e_a‖², ‖P_V e_b‖²)`
/// * `mu1 = (n/√r)·max |⟨e_a, P e_{a′}⟩ − (r/n)1_{a=a′}|` over both sides
///   (`mu1_u`, `mu1_v` keep the per-side values)
/// * `mu2 = (n/√r)·max |E_ab|`
/// * `mu_b = n·max entry² of the singular vectors`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IncoherenceReport {
    pub mu0: f64,
    pub mu1: f64,
    pub mu1_u: f64,
    pub mu1_v: f64,
    pub mu2: f64,
    pub mu_b: f64,
    pub mu0_at: (Side, usize),
    pub mu1_at: (Side, usize, usize),
    pub mu2_at: (usize, usize),
    pub mu_b_at: (Side, usize, usize),
}

impl IncoherenceReport {
    /// Strong incoherence parameter `max(μ₁, μ₂)`.
    pub fn mu(&self) -> f64 {
        self.mu1.max(self.mu2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CancellationReport {
    pub proj_id: f64,
    pub proj_i2d: f64,
    pub proj_i3d: f64,
    pub max: f64,
    pub passed: bool,
}

impl From<CancellationReport> for Result<()> {
    fn from(r: CancellationReport) -> Self {
        if r.passed {
            Ok(())
        } else {
            Err(Error::DegenerateInput(alloc::format!(
                "cancellation identities violated by {:e}",
                r.max
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{haar_orthogonal, svd};
    use crate::rng::StreamRng;

    fn random_space(n: usize, r: usize, seed: u64) -> TangentSpace {
        let mut rng = StreamRng::new(seed, 0);
        let u = haar_orthogonal(n, &mut rng).unwrap().leading_columns(r);
        let v = haar_orthogonal(n, &mut rng).unwrap().leading_columns(r);
        TangentSpace::new(&u, &v).unwrap()
    }

    fn ones_over_root(n: usize) -> Mat {
        Mat::from_fn(n, 1, |_, _| 1.0 / (n as f64).sqrt())
    }

    #[test]
    fn full_rank_space() {
        let i = Mat::identity(5);
        let t = TangentSpace::new(&i, &i).unwrap();
        assert_eq!(t.rho(), 1.0);
        assert_eq!(t.rho_prime(), 1.0);
        assert_eq!(t.e(), &i);
        assert_eq!(t.pu(), &i);
        assert!(t.cancellation_identities_check(1e-10).passed);
    }

    #[test]
    fn rank_one_flat_vector() {
        let n = 7;
        let u = ones_over_root(n);
        let t = TangentSpace::new(&u, &u).unwrap();
        let flat = Mat::from_fn(n, n, |_, _| 1.0 / n as f64);
        assert!(t.e().sub(&flat).max_abs() < 1e-15);
        assert!((t.e().frobenius_norm().powi(2) - 1.0).abs() < 1e-14);
        let inc = t.incoherence();
        assert!((inc.mu0 - 1.0).abs() < 1e-12);
        assert!((inc.mu2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn delta_vector_is_maximally_coherent() {
        let n = 9;
        let e1 = Mat::identity(n).leading_columns(1);
        let inc = TangentSpace::new(&e1, &e1).unwrap().incoherence();
        assert!((inc.mu0 - n as f64).abs() < 1e-12);
        assert_eq!(inc.mu0_at.1, 0);
    }

    #[test]
    fn sign_pattern_identities() {
        let t = random_space(20, 3, 1);
        let e = t.e();
        assert!(e.t_matmul(e).sub(t.pv()).frobenius_norm() < 1e-10);
        assert!(e.matmul_t(e).sub(t.pu()).frobenius_norm() < 1e-10);
        assert!(t.pu().matmul(e).sub(e).frobenius_norm() < 1e-10);
        assert!(e.matmul(t.pv()).sub(e).frobenius_norm() < 1e-10);
        let n2 = 400.0;
        assert!((n2 * t.rho_prime() - (2.0 * 20.0 * 3.0 - 9.0)).abs() < 1e-8);
    }

    #[test]
    fn projections() {
        let t = random_space(12, 2, 2);
        let mut rng = StreamRng::new(2, 1);
        let x = Mat::gaussian(12, 12, &mut rng);
        let ptx = t.apply_pt(&x).unwrap();
        let perp = t.apply_ptperp(&x).unwrap();
        assert!(t.apply_pt(&ptx).unwrap().sub(&ptx).max_abs() < 1e-12);
        assert!(ptx.dot(&perp).abs() < 1e-10);
        assert!(t.apply_pt(t.e()).unwrap().sub(t.e()).max_abs() < 1e-12);
        assert!(t.apply_ptperp(t.e()).unwrap().max_abs() < 1e-12);
        assert!(t.apply_pt(&perp).unwrap().max_abs() < 1e-12);
        // explicit dense formulas
        let dense_pt = t.pu().matmul(&x).add(&x.matmul(t.pv())).sub(&t.pu().matmul(&x).matmul(t.pv()));
        assert!(dense_pt.sub(&ptx).max_abs() < 1e-12);
        let i = Mat::identity(12);
        let dense_perp = i.sub(t.pu()).matmul(&x).matmul(&i.sub(t.pv()));
        assert!(dense_perp.sub(&perp).max_abs() < 1e-12);
        assert!(t.apply_ptperp(&dense_perp).unwrap().sub(&dense_perp).max_abs() < 1e-12);
        // rows/cols orthogonal to U and V are annihilated
        assert!(t.apply_pt(&dense_perp).unwrap().max_abs() < 1e-12);
        assert!(t.apply_pt(&Mat::zeros(3, 3)).is_err());
    }

    #[test]
    fn qt_forms_agree() {
        let t = random_space(10, 3, 3);
        let mut rng = StreamRng::new(3, 1);
        for _ in 0..20 {
            let x = Mat::gaussian(10, 10, &mut rng);
            let a = t.apply_qt(&x).unwrap();
            let b = t.apply_qt_centered(&x).unwrap();
            assert!(a.sub(&b).max_abs() <= 1e-12);
        }
        let qe = t.apply_qt(t.e()).unwrap();
        assert!(qe.sub(&t.e().scale(1.0 - t.rho_prime())).max_abs() < 1e-12);
    }

    #[test]
    fn coefficients_match_operator() {
        let t = random_space(6, 2, 4);
        let n = 6;
        for a2 in 0..n {
            for b2 in 0..n {
                let mut unit = Mat::zeros(n, n);
                unit[(a2, b2)] = 1.0;
                let img = t.apply_qt(&unit).unwrap();
                for a in 0..n {
                    for b in 0..n {
                        let c = t.qt_coefficient(a, b, a2, b2).unwrap();
                        assert!((c - img[(a, b)]).abs() <= 1e-12);
                    }
                }
            }
        }
        let c = t.qt_coefficient(0, 1, 2, 3).unwrap();
        assert!((c + t.qu()[(0, 2)] * t.qv()[(1, 3)]).abs() < 1e-15);
        assert!(t.qt_coefficient(6, 0, 0, 0).is_err());
    }

    #[test]
    fn transfer_bounds_hold() {
        for seed in 0..10 {
            let t = random_space(16, 1 + (seed as usize % 4), seed);
            let inc = t.incoherence();
            let sr = (t.rank() as f64).sqrt();
            assert!(inc.mu0 >= 1.0 - 1e-12);
            assert!(inc.mu2 >= 1.0 - 1e-9);
            assert!(inc.mu0 <= 1.0 + inc.mu1 / sr + 1e-12);
            assert!(inc.mu1 <= inc.mu0 * sr + 1e-12);
            assert!(inc.mu2 <= inc.mu0 * sr + 1e-12);
        }
    }

    #[test]
    fn cancellation_identities_random_and_faulty() {
        let t = random_space(16, 3, 5);
        let rep = t.cancellation_identities_check(1e-10);
        assert!(rep.passed, "{rep:?}");

        let mut u = t.u().clone();
        u[(0, 0)] += 1e-3;
        assert!(TangentSpace::new(&u, t.v()).is_err());
        let bad = TangentSpace::new_unchecked(&u, t.v()).unwrap();
        let rep = bad.cancellation_identities_check(1e-10);
        assert!(!rep.passed);
        assert!(rep.max > 1e-4, "{rep:?}");
    }

    #[test]
    fn dimension_of_tangent_space() {
        let n = 6;
        for r in 1..=3 {
            let t = random_space(n, r, 10 + r as u64);
            let mut cols = Mat::zeros(n * n, n * n);
            for k in 0..n * n {
                let mut unit = Mat::zeros(n, n);
                unit.as_mut_slice()[k] = 1.0;
                let img = t.apply_pt(&unit).unwrap();
                for (i, &x) in img.as_slice().iter().enumerate() {
                    cols[(i, k)] = x;
                }
            }
            let f = svd(&cols).unwrap();
            assert_eq!(f.rank(1e-9), t.dim());
        }
    }
}
