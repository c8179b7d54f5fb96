//! Ground-truth generators: uniformly bounded, low-coherence, random
//! orthogonal and the block construction used by the lower bound.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::geometry::{TangentSpace, ORTHONORMALITY_TOL};
use crate::linalg::{haar_orthogonal, svd, Mat};
use crate::rng::StreamRng;

/// Relative cutoff below which a merged singular value counts as zero.
const RANK_TOL: f64 = 1e-10;

/// Rejection budget for [`gen_low_coherence`].
pub const MAX_REJECTIONS: usize = 1000;

/// Largest rank accepted by [`gen_low_coherence`].
pub const LOW_COHERENCE_MAX_RANK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    UniformlyBounded,
    LowCoherence,
    RandomOrthogonal,
    Block,
    /// Read from a file or assembled by hand.
    Custom,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::UniformlyBounded => "unif_bounded",
            ModelKind::LowCoherence => "low_coherence",
            ModelKind::RandomOrthogonal => "random_orth",
            ModelKind::Block => "block",
            ModelKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "unif_bounded" => ModelKind::UniformlyBounded,
            "low_coherence" => ModelKind::LowCoherence,
            "random_orth" => ModelKind::RandomOrthogonal,
            "block" => ModelKind::Block,
            "custom" => ModelKind::Custom,
            other => return Err(invalid!("unknown model '{other}'")),
        })
    }
}

/// A rank-r matrix `M = U·diag(signs·sigma)·Vᵀ` together with its factors.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    u: Mat,
    v: Mat,
    sigma: Vec<f64>,
    signs: Vec<f64>,
    m: Mat,
    model: ModelKind,
    seed: u64,
}

impl GroundTruth {
    pub fn new(
        u: Mat,
        v: Mat,
        sigma: Vec<f64>,
        signs: Vec<f64>,
        model: ModelKind,
        seed: u64,
    ) -> Result<Self> {
        let (n, r) = u.shape();
        if v.shape() != (n, r) {
            return Err(invalid!("factor shapes differ: U {n}x{r}, V {}x{}", v.rows(), v.cols()));
        }
        if r == 0 || r > n {
            return Err(invalid!("rank must lie in 1..={n}, got {r}"));
        }
        if sigma.len() != r || signs.len() != r {
            return Err(invalid!(
                "expected {r} singular values and signs, got {} and {}",
                sigma.len(),
                signs.len()
            ));
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(invalid!("singular values must be positive and finite, got {s}"));
        }
        if let Some(s) = signs.iter().find(|s| **s != 1.0 && **s != -1.0) {
            return Err(invalid!("signs must be +1 or -1, got {s}"));
        }
        for (name, f) in [("U", &u), ("V", &v)] {
            let d = f.orthonormality_defect();
            if !(d <= ORTHONORMALITY_TOL) {
                return Err(invalid!("{name} is not column-orthonormal (defect {d:e})"));
            }
        }
        let w: Vec<f64> = sigma.iter().zip(&signs).map(|(s, e)| s * e).collect();
        let m = Mat::weighted_outer(&u, &w, &v);
        Ok(Self {
            u,
            v,
            sigma,
            signs,
            m,
            model,
            seed,
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

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn matrix(&self) -> &Mat {
        &self.m
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Right factor with the signs folded in, so `M = U·diag(σ)·Ṽᵀ` is an SVD.
    pub fn signed_v(&self) -> Mat {
        let mut v = self.v.clone();
        for i in 0..v.rows() {
            for (k, e) in self.signs.iter().enumerate() {
                v[(i, k)] *= e;
            }
        }
        v
    }

    /// Tangent space at `M`, with the signs folded into `V` so that its sign
    /// pattern is the `E` of `M`'s SVD.
    pub fn tangent_space(&self) -> Result<TangentSpace> {
        TangentSpace::new(&self.u, &self.signed_v())
    }

    /// `n·max(‖u_k‖_∞², ‖v_k‖_∞²)`.
    pub fn mu_b(&self) -> f64 {
        let a = self.u.max_abs().max(self.v.max_abs());
        self.n() as f64 * a * a
    }
}

/// `σ_k = 1 + (r − k)/r` for `k = 1..=r`.
pub fn default_sigma(r: usize) -> Vec<f64> {
    (1..=r).map(|k| 1.0 + (r - k) as f64 / r as f64).collect()
}

fn check_sigma(sigma: &[f64], r: usize) -> Result<()> {
    if sigma.len() != r {
        return Err(invalid!("expected {r} singular values, got {}", sigma.len()));
    }
    for (i, s) in sigma.iter().enumerate() {
        if !(s.is_finite() && *s > 0.0) {
            return Err(invalid!("singular values must be positive, got {s}"));
        }
        if sigma[..i].contains(s) {
            return Err(invalid!("singular values must be distinct, {s} repeats"));
        }
    }
    Ok(())
}

fn check_family(name: &str, f: &Mat) -> Result<()> {
    if !f.is_square() {
        return Err(invalid!("{name} family must be square, got {}x{}", f.rows(), f.cols()));
    }
    let d = f.orthonormality_defect();
    if !(d <= ORTHONORMALITY_TOL) {
        return Err(invalid!("{name} family is not orthonormal (defect {d:e})"));
    }
    Ok(())
}

/// Normalized Sylvester Hadamard matrix, entries `±1/√n`. `n` must be a
/// power of two.
pub fn hadamard(n: usize) -> Result<Mat> {
    if n == 0 || !n.is_power_of_two() {
        return Err(invalid!("Hadamard order must be a power of two, got {n}"));
    }
    let s = 1.0 / (n as f64).sqrt();
    Ok(Mat::from_fn(n, n, |i, j| {
        if (i & j).count_ones() % 2 == 0 {
            s
        } else {
            -s
        }
    }))
}

/// Orthonormal DCT-II basis; column `k` is the k-th cosine mode.
/// Entries are bounded by `√(2/n)`.
pub fn dct(n: usize) -> Result<Mat> {
    if n == 0 {
        return Err(invalid!("DCT order must be positive"));
    }
    let nf = n as f64;
    let c0 = (1.0 / nf).sqrt();
    let c = (2.0 / nf).sqrt();
    Ok(Mat::from_fn(n, n, |i, k| {
        if k == 0 {
            c0
        } else {
            c * (core::f64::consts::PI * (i as f64 + 0.5) * k as f64 / nf).cos()
        }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UniformlyBoundedOptions {
    /// Use `β = α` instead of drawing the right indices independently.
    pub coupled: bool,
    /// Draw indices with replacement; repeated pairs are summed and the
    /// result re-factored.
    pub with_replacement: bool,
    /// Attach i.i.d. uniform signs `ε_k`.
    pub random_signs: bool,
}

impl Default for UniformlyBoundedOptions {
    fn default() -> Self {
        Self {
            coupled: false,
            with_replacement: false,
            random_signs: true,
        }
    }
}

fn draw_indices(n: usize, r: usize, replace: bool, rng: &mut StreamRng) -> Vec<usize> {
    if replace {
        (0..r).map(|_| rng.random_range(0..n)).collect()
    } else {
        rand::seq::index::sample(rng, n, r).into_vec()
    }
}

/// `M = Σ_k ε_k σ_k u_{α(k)} v_{β(k)}ᵀ` with columns taken from the two
/// orthonormal families.
pub fn gen_uniformly_bounded(
    fam_u: &Mat,
    fam_v: &Mat,
    r: usize,
    sigma: &[f64],
    opts: UniformlyBoundedOptions,
    rng: &mut StreamRng,
) -> Result<GroundTruth> {
    check_family("left", fam_u)?;
    check_family("right", fam_v)?;
    let n = fam_u.rows();
    if fam_v.rows() != n {
        return Err(invalid!("families have orders {n} and {}", fam_v.rows()));
    }
    if r == 0 || r > n {
        return Err(invalid!("rank must lie in 1..={n}, got {r}"));
    }
    check_sigma(sigma, r)?;
    let seed = rng.seed();

    let alpha = draw_indices(n, r, opts.with_replacement, rng);
    let beta = if opts.coupled {
        alpha.clone()
    } else {
        draw_indices(n, r, opts.with_replacement, rng)
    };
    let signs: Vec<f64> = (0..r)
        .map(|_| {
            if opts.random_signs && rng.random::<bool>() {
                -1.0
            } else {
                1.0
            }
        })
        .collect();

    let repeated = |idx: &[usize]| (1..idx.len()).any(|i| idx[..i].contains(&idx[i]));
    let u = fam_u.select_columns(&alpha);
    let v = fam_v.select_columns(&beta);
    if !repeated(&alpha) && !repeated(&beta) {
        return GroundTruth::new(u, v, sigma.to_vec(), signs, ModelKind::UniformlyBounded, seed);
    }

    // Repeated directions: sum the terms and read the factors off an SVD.
    let w: Vec<f64> = sigma.iter().zip(&signs).map(|(s, e)| s * e).collect();
    let m = Mat::weighted_outer(&u, &w, &v);
    let f = svd(&m)?;
    let cutoff = RANK_TOL * f.s.first().copied().unwrap_or(0.0);
    let k = f.s.iter().take_while(|s| **s > cutoff).count();
    if k == 0 {
        return Err(Error::GenerationFailure("repeated indices cancelled to zero".into()));
    }
    GroundTruth::new(
        f.u.leading_columns(k),
        f.v.leading_columns(k),
        f.s[..k].to_vec(),
        vec![1.0; k],
        ModelKind::UniformlyBounded,
        seed,
    )
}

/// Factors are the first `r` columns of independent Haar orthogonal
/// matrices; no signs.
pub fn gen_random_orthogonal(
    n: usize,
    r: usize,
    sigma: &[f64],
    rng: &mut StreamRng,
) -> Result<GroundTruth> {
    if r == 0 || r > n {
        return Err(invalid!("rank must lie in 1..={n}, got {r}"));
    }
    check_sigma(sigma, r)?;
    let seed = rng.seed();
    let u = haar_orthogonal(n, rng)?.leading_columns(r);
    let v = haar_orthogonal(n, rng)?.leading_columns(r);
    GroundTruth::new(u, v, sigma.to_vec(), vec![1.0; r], ModelKind::RandomOrthogonal, seed)
}

/// Random orthogonal factors, redrawn until `n·max entry² ≤ mu_b_cap`.
pub fn gen_low_coherence(
    n: usize,
    r: usize,
    sigma: &[f64],
    mu_b_cap: f64,
    rng: &mut StreamRng,
) -> Result<GroundTruth> {
    if r == 0 || r > n {
        return Err(invalid!("rank must lie in 1..={n}, got {r}"));
    }
    if r > LOW_COHERENCE_MAX_RANK {
        return Err(invalid!(
            "low-coherence model is limited to rank {LOW_COHERENCE_MAX_RANK}, got {r}"
        ));
    }
    if !(mu_b_cap >= 1.0) {
        return Err(invalid!("mu_b cap must be at least 1, got {mu_b_cap}"));
    }
    check_sigma(sigma, r)?;
    let seed = rng.seed();
    let mut best = f64::INFINITY;
    for _ in 0..MAX_REJECTIONS {
        let u = haar_orthogonal(n, rng)?.leading_columns(r);
        let v = haar_orthogonal(n, rng)?.leading_columns(r);
        let a = u.max_abs().max(v.max_abs());
        let mu_b = n as f64 * a * a;
        if mu_b <= mu_b_cap {
            return GroundTruth::new(u, v, sigma.to_vec(), vec![1.0; r], ModelKind::LowCoherence, seed);
        }
        best = best.min(mu_b);
    }
    Err(Error::GenerationFailure(alloc::format!(
        "no draw met mu_b <= {mu_b_cap} in {MAX_REJECTIONS} attempts (best {best:.3})"
    )))
}

/// Parameters of the block construction: `r` disjoint blocks of length
/// `ℓ = ⌊n/(μ₀r)⌋`, trailing indices unused.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockModelSpec {
    pub n: usize,
    pub r: usize,
    pub mu0: f64,
    pub ell: usize,
    pub blocks: Vec<Range<usize>>,
}

impl BlockModelSpec {
    pub fn new(n: usize, r: usize, mu0: f64) -> Result<Self> {
        if r == 0 {
            return Err(invalid!("rank must be positive"));
        }
        if !(mu0 >= 1.0 && mu0.is_finite()) {
            return Err(invalid!("mu0 must be at least 1, got {mu0}"));
        }
        let ell = (n as f64 / (mu0 * r as f64)).floor() as usize;
        if ell < 1 {
            return Err(invalid!("block length n/(mu0 r) = {n}/({mu0}*{r}) is below 1"));
        }
        let blocks = (0..r).map(|k| k * ell..(k + 1) * ell).collect();
        Ok(Self {
            n,
            r,
            mu0,
            ell,
            blocks,
        })
    }

    /// Block containing index `i`, if any.
    pub fn block_of(&self, i: usize) -> Option<usize> {
        let k = i / self.ell;
        (k < self.r).then_some(k)
    }

    /// Coherence `n/(rℓ)` of the construction; equals `mu0` when `n/(μ₀r)`
    /// is an integer.
    pub fn measured_mu0(&self) -> f64 {
        self.n as f64 / (self.r * self.ell) as f64
    }
}

/// `M = Σ_k σ_k u_k u_kᵀ` with `u_k = ℓ^{-1/2}·1_{B_k}`. If `sigma` is
/// `None` the values are drawn uniformly from `(0, 1]`.
pub fn gen_lower_bound_block(
    spec: &BlockModelSpec,
    sigma: Option<&[f64]>,
    rng: &mut StreamRng,
) -> Result<GroundTruth> {
    let BlockModelSpec { n, r, ell, .. } = *spec;
    if ell < 1 || r * ell > n {
        return Err(invalid!("block layout {r}x{ell} does not fit in {n}"));
    }
    let sigma = match sigma {
        Some(s) => {
            if s.len() != r {
                return Err(invalid!("expected {r} singular values, got {}", s.len()));
            }
            if let Some(x) = s.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
                return Err(invalid!("block singular values must lie in (0, 1], got {x}"));
            }
            s.to_vec()
        }
        None => (0..r).map(|_| 1.0 - rng.random::<f64>()).collect(),
    };
    let h = 1.0 / (ell as f64).sqrt();
    let u = Mat::from_fn(n, r, |i, k| if i / ell == k { h } else { 0.0 });
    GroundTruth::new(u.clone(), u, sigma, vec![1.0; r], ModelKind::Block, rng.seed())
}

/// A model family with its parameters, generating square `n×n` instances.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    /// DCT-II families on both sides, independent indices, random signs.
    UniformlyBounded { with_replacement: bool },
    LowCoherence { mu_b_cap: f64 },
    RandomOrthogonal,
    Block { mu0: f64 },
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::UniformlyBounded { .. } => ModelKind::UniformlyBounded,
            ModelSpec::LowCoherence { .. } => ModelKind::LowCoherence,
            ModelSpec::RandomOrthogonal => ModelKind::RandomOrthogonal,
            ModelSpec::Block { .. } => ModelKind::Block,
        }
    }

    /// Default parameters for a model name. The low-coherence cap is
    /// `max(4 ln n, 1)` and the block coherence is 2.
    pub fn from_kind(kind: ModelKind, n: usize) -> Result<Self> {
        Ok(match kind {
            ModelKind::UniformlyBounded => ModelSpec::UniformlyBounded {
                with_replacement: false,
            },
            ModelKind::LowCoherence => ModelSpec::LowCoherence {
                mu_b_cap: (4.0 * (n as f64).ln()).max(1.0),
            },
            ModelKind::RandomOrthogonal => ModelSpec::RandomOrthogonal,
            ModelKind::Block => ModelSpec::Block { mu0: 2.0 },
            ModelKind::Custom => return Err(invalid!("custom models cannot be generated")),
        })
    }

    pub fn generate(&self, n: usize, r: usize, rng: &mut StreamRng) -> Result<GroundTruth> {
        let sigma = default_sigma(r);
        match *self {
            ModelSpec::UniformlyBounded { with_replacement } => {
                let f = dct(n)?;
                let opts = UniformlyBoundedOptions {
                    with_replacement,
                    ..Default::default()
                };
                gen_uniformly_bounded(&f, &f, r, &sigma, opts, rng)
            }
            ModelSpec::LowCoherence { mu_b_cap } => gen_low_coherence(n, r, &sigma, mu_b_cap, rng),
            ModelSpec::RandomOrthogonal => gen_random_orthogonal(n, r, &sigma, rng),
            ModelSpec::Block { mu0 } => gen_lower_bound_block(&BlockModelSpec::new(n, r, mu0)?, None, rng),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind().name())
    }
}
