//! Observation sets Ω and the sampling operators `P_Ω` and `Q_Ω = p⁻¹P_Ω − I`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::linalg::Mat;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SamplingModel {
    /// Each entry observed independently with probability `p`.
    Bernoulli { p: f64 },
    /// A uniformly random subset of exactly `m` entries.
    Uniform { m: usize },
}

impl SamplingModel {
    pub fn name(&self) -> &'static str {
        match self {
            SamplingModel::Bernoulli { .. } => "bernoulli",
            SamplingModel::Uniform { .. } => "uniform",
        }
    }
}

/// An observed index set together with the model that produced it.
///
/// `omega` is sorted row-major and duplicate free. `p` is the nominal
/// sampling rate: the Bernoulli parameter, or `m / (n1·n2)` for the uniform
/// model.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    n1: usize,
    n2: usize,
    omega: Vec<(usize, usize)>,
    mask: Vec<bool>,
    model: SamplingModel,
    p: f64,
    m_nominal: usize,
}

impl SampleSet {
    /// Builds a sample set from explicit coordinates. Coordinates are sorted;
    /// duplicates and out-of-range pairs are rejected.
    pub fn from_pairs(
        n1: usize,
        n2: usize,
        mut omega: Vec<(usize, usize)>,
        model: SamplingModel,
    ) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(invalid!("sample set dimensions must be positive"));
        }
        omega.sort_unstable();
        let mut mask = vec![false; n1 * n2];
        for (k, &(i, j)) in omega.iter().enumerate() {
            if i >= n1 || j >= n2 {
                return Err(invalid!("index ({i}, {j}) outside {n1}x{n2}"));
            }
            if k > 0 && omega[k - 1] == (i, j) {
                return Err(invalid!("duplicate index ({i}, {j})"));
            }
            mask[i * n2 + j] = true;
        }
        let total = (n1 * n2) as f64;
        let (p, m_nominal) = match model {
            SamplingModel::Bernoulli { p } => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(invalid!("Bernoulli rate must lie in (0, 1], got {p}"));
                }
                (p, libm::round(p * total) as usize)
            }
            SamplingModel::Uniform { m } => {
                if m != omega.len() {
                    return Err(invalid!(
                        "uniform model expects {m} entries, got {}",
                        omega.len()
                    ));
                }
                (m as f64 / total, m)
            }
        };
        Ok(Self {
            n1,
            n2,
            omega,
            mask,
            model,
            p,
            m_nominal,
        })
    }

    /// The complete grid, recorded as Bernoulli with `p = 1`.
    pub fn full(n1: usize, n2: usize) -> Result<Self> {
        let omega = (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).collect();
        Self::from_pairs(n1, n2, omega, SamplingModel::Bernoulli { p: 1.0 })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn omega(&self) -> &[(usize, usize)] {
        &self.omega
    }

    pub fn model(&self) -> SamplingModel {
        self.model
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn m_nominal(&self) -> usize {
        self.m_nominal
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n2 + j]
    }

    /// Row-major indicator of Ω.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Same model and rate, with every observation in row `i` removed.
    pub fn without_row(&self, i: usize) -> Self {
        let omega: Vec<_> = self.omega.iter().copied().filter(|&(a, _)| a != i).collect();
        let model = match self.model {
            SamplingModel::Uniform { .. } => SamplingModel::Uniform { m: omega.len() },
            m => m,
        };
        Self::from_pairs(self.n1, self.n2, omega, model).expect("subset of a valid set")
    }

    fn check_dims(&self, x: &Mat) -> Result<()> {
        if x.shape() != (self.n1, self.n2) {
            return Err(invalid!(
                "matrix is {}x{} but sample set is {}x{}",
                x.rows(),
                x.cols(),
                self.n1,
                self.n2
            ));
        }
        Ok(())
    }
}

/// Each of the `n²` entries is kept independently with probability `p`.
pub fn sample_bernoulli<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<SampleSet> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid!("Bernoulli rate must lie in (0, 1], got {p}"));
    }
    let mut omega = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if rng.random::<f64>() < p {
                omega.push((i, j));
            }
        }
    }
    SampleSet::from_pairs(n, n, omega, SamplingModel::Bernoulli { p })
}

/// Exactly `m` distinct entries chosen uniformly among all `m`-subsets.
pub fn sample_uniform<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<SampleSet> {
    let total = n * n;
    if m > total {
        return Err(invalid!("cannot draw {m} distinct entries from {total}"));
    }
    let omega = rand::seq::index::sample(rng, total, m)
        .into_iter()
        .map(|k| (k / n, k % n))
        .collect();
    SampleSet::from_pairs(n, n, omega, SamplingModel::Uniform { m })
}

/// `P_Ω(X)`: keeps the observed entries and zeroes the rest.
pub fn project_omega(x: &Mat, s: &SampleSet) -> Result<Mat> {
    s.check_dims(x)?;
    Ok(project_unchecked(x, s))
}

pub(crate) fn project_unchecked(x: &Mat, s: &SampleSet) -> Mat {
    let mut out = x.clone();
    for (v, &keep) in out.as_mut_slice().iter_mut().zip(&s.mask) {
        if !keep {
            *v = 0.0;
        }
    }
    out
}

/// `Q_Ω(X) = p⁻¹P_Ω(X) − X`.
pub fn q_omega(x: &Mat, s: &SampleSet) -> Result<Mat> {
    s.check_dims(x)?;
    if !(s.p > 0.0) {
        return Err(invalid!("Q_Ω needs a positive sampling rate"));
    }
    Ok(q_omega_unchecked(x, s))
}

pub(crate) fn q_omega_unchecked(x: &Mat, s: &SampleSet) -> Mat {
    let scale = 1.0 / s.p - 1.0;
    let mut out = x.clone();
    for (v, &keep) in out.as_mut_slice().iter_mut().zip(&s.mask) {
        *v *= if keep { scale } else { -1.0 };
    }
    out
}
