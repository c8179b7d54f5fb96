// Distributional checks against closed-form laws.

use mclab_core::linalg::haar_orthogonal;
use mclab_core::sampling::sample_bernoulli;
use mclab_core::StreamRng;
use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF};

/// Kolmogorov–Smirnov distance between a sample and a CDF.
fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn haar_entries_follow_the_beta_law() {
    // For Haar Q in O(n), Q₁₁² ~ Beta(1/2, (n−1)/2) and the sign is fair.
    let n = 6;
    let draws = 4000;
    let beta = Beta::new(0.5, (n as f64 - 1.0) / 2.0).unwrap();
    let mut rng = StreamRng::new(17, 0);
    let mut entries = Vec::with_capacity(draws);
    let mut diag = Vec::with_capacity(draws);
    for _ in 0..draws {
        let q = haar_orthogonal(n, &mut rng).unwrap();
        entries.push(q[(0, 0)]);
        diag.push(q[(n - 1, n - 1)]);
    }
    let cdf = |x: f64| 0.5 + 0.5 * x.signum() * beta.cdf(x * x);
    let crit = 1.63 / (draws as f64).sqrt(); // 1% level
    let d0 = ks(entries, cdf);
    let d1 = ks(diag, cdf);
    assert!(d0 < crit, "Q11: D = {d0}, critical {crit}");
    assert!(d1 < crit, "Qnn: D = {d1}, critical {crit}");
}

#[test]
fn bernoulli_sample_size_is_binomial() {
    let (n, p, draws) = (6, 0.3, 20_000);
    let binom = Binomial::new(p, (n * n) as u64).unwrap();
    let mut rng = StreamRng::new(23, 0);
    let mut counts = vec![0usize; n * n + 1];
    for _ in 0..draws {
        counts[sample_bernoulli(n, p, &mut rng).unwrap().len()] += 1;
    }
    let mut acc = 0usize;
    let mut worst: f64 = 0.0;
    for (k, c) in counts.iter().enumerate() {
        acc += c;
        worst = worst.max((acc as f64 / draws as f64 - binom.cdf(k as u64)).abs());
    }
    assert!(worst < 1.63 / (draws as f64).sqrt(), "max CDF gap {worst}");
}
