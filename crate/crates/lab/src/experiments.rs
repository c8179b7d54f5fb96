//! Monte-Carlo experiment drivers.
//!
//! Cells are the points of the configured grid, visited in sorted grid order.
//! Trial `t` of cell `c` draws from stream `(c << 32) | t` of the configured
//! seed, so results do not depend on scheduling or thread count. Cells and
//! trials run on the rayon pool; rows are assembled in grid order.

use std::time::Instant;

use mclab_core::certificate::{
    build_certificate_neumann, build_certificate_solve, deviation_stat, trace_moment_estimate,
    verify_certificate, MAX_MOMENT_N, MAX_MOMENT_ORDER,
};
use mclab_core::geometry::IncoherenceReport;
use mclab_core::models::{BlockModelSpec, GroundTruth, ModelSpec};
use mclab_core::sampling::{project_omega, sample_bernoulli, sample_uniform, SampleSet};
use mclab_core::solver::{complete, recovered, SolverParams};
use mclab_core::{Error, StreamRng};
use rayon::prelude::*;

use crate::config::{CertMethod, ExperimentConfig, Kind, Sampling};
use crate::error::{config_err, Result};
use crate::report::ExperimentRow;
use crate::stats::{wilson, Z95};

/// Runs the experiment named by `cfg.kind` on a pool of `cfg.threads`
/// workers (the global pool when unset).
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    let work = || match cfg.kind {
        Kind::Phase => run_phase(cfg),
        Kind::Certificate => run_certificate(cfg),
        Kind::LowerBound => run_lower_bound(cfg),
        Kind::ModelEquiv => run_model_equiv(cfg),
        Kind::Moments => run_moments(cfg),
    };
    match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| config_err!("thread pool: {e}"))?
            .install(work),
        None => work(),
    }
}

fn expect_kind(cfg: &ExperimentConfig, kind: Kind) -> Result<()> {
    if cfg.kind != kind {
        return Err(config_err!("expected a '{kind}' config, got '{}'", cfg.kind));
    }
    cfg.validate()
}

/// `(m, p)` pairs for dimension `n`: `p = min(1, m/n²)` from an `m` grid, or
/// `m = round(p·n²)` from a `p` grid.
fn levels(cfg: &ExperimentConfig, n: usize) -> Vec<(usize, f64)> {
    let total = (n * n) as f64;
    if cfg.m.is_empty() {
        cfg.p.iter().map(|&p| ((p * total).round() as usize, p)).collect()
    } else {
        cfg.m.iter().map(|&m| (m, (m as f64 / total).min(1.0))).collect()
    }
}

fn trial_rng(cfg: &ExperimentConfig, cell: usize, trial: usize) -> StreamRng {
    StreamRng::new(cfg.seed, ((cell as u64) << 32) | trial as u64)
}

fn per_trial<T: Send>(
    cfg: &ExperimentConfig,
    cell: usize,
    f: impl Fn(&mut StreamRng) -> T + Sync + Send,
) -> Vec<T> {
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| f(&mut trial_rng(cfg, cell, t)))
        .collect()
}

fn timed<T>(on: bool, f: impl FnOnce() -> T) -> (T, u64) {
    let start = Instant::now();
    let out = f();
    (out, if on { start.elapsed().as_millis() as u64 } else { 0 })
}

fn mean(xs: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, count) = xs
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (count > 0).then(|| sum / count as f64)
}

fn base_row(cfg: &ExperimentConfig, n: usize, r: usize, m: usize, p: f64) -> ExperimentRow {
    ExperimentRow {
        kind: cfg.kind.name().into(),
        n,
        r,
        m,
        p,
        model: cfg.model.name().into(),
        param: String::new(),
        trials: cfg.trials,
        successes: 0,
        success_rate: None,
        wilson_lo: None,
        wilson_hi: None,
        mean_relerr: None,
        mean_mu0: None,
        mean_mu1: None,
        mean_mu2: None,
        mean_a_stat: None,
        mean_ptperp_norm: None,
        statistic: None,
        reference: None,
        reference_alt: None,
        pass: None,
        wall_ms: 0,
    }
}

fn set_rate(row: &mut ExperimentRow, successes: usize) {
    row.successes = successes;
    row.success_rate = Some(successes as f64 / row.trials as f64);
    let (lo, hi) = wilson(successes, row.trials, Z95);
    row.wilson_lo = Some(lo);
    row.wilson_hi = Some(hi);
}

fn set_mu(row: &mut ExperimentRow, inc: &[Option<IncoherenceReport>]) {
    row.mean_mu0 = mean(inc.iter().map(|i| i.as_ref().map(|i| i.mu0)));
    row.mean_mu1 = mean(inc.iter().map(|i| i.as_ref().map(|i| i.mu1)));
    row.mean_mu2 = mean(inc.iter().map(|i| i.as_ref().map(|i| i.mu2)));
}

fn solver_params(cfg: &ExperimentConfig, n: usize, r: usize) -> SolverParams {
    if cfg.rank_hint {
        cfg.solver.with_rank_hint(n, r)
    } else {
        cfg.solver
    }
}

fn model_spec(cfg: &ExperimentConfig, n: usize) -> Result<ModelSpec> {
    Ok(ModelSpec::from_kind(cfg.model, n)?)
}

/// Solves from the observed entries of `gt` on `s`; `(recovered, relerr,
/// converged)`.
fn solve_trial(
    cfg: &ExperimentConfig,
    gt: &GroundTruth,
    s: &SampleSet,
) -> mclab_core::Result<(bool, f64, bool)> {
    let obs = project_omega(gt.matrix(), s)?;
    let res = complete(s, &obs, &solver_params(cfg, gt.n(), gt.rank()))?;
    let (ok, err) = recovered(gt.matrix(), &res.xhat, cfg.recovery_tol)?;
    Ok((ok, err, res.converged))
}

#[derive(Default)]
struct PhaseTrial {
    ok: bool,
    relerr: Option<f64>,
    converged: bool,
    a_stat: Option<f64>,
    inc: Option<IncoherenceReport>,
    failed: bool,
}

/// Recovery rate per `(n, r, m)` cell.
pub fn run_phase(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    expect_kind(cfg, Kind::Phase)?;
    let mut cells = Vec::new();
    for &n in &cfg.n {
        let spec = model_spec(cfg, n)?;
        for &r in &cfg.r {
            for (m, p) in levels(cfg, n) {
                let m = m.min(n * n);
                cells.push((n, r, m, p, spec.clone()));
            }
        }
    }
    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(c, (n, r, m, p, spec))| {
            let (n, r, m, p) = (*n, *r, *m, *p);
            let (trials, wall) = timed(cfg.timing, || {
                per_trial(cfg, c, |rng| {
                    let mut out = PhaseTrial::default();
                    let run = |rng: &mut StreamRng, out: &mut PhaseTrial| -> mclab_core::Result<()> {
                        let gt = spec.generate(n, r, rng)?;
                        let t = gt.tangent_space()?;
                        out.inc = Some(t.incoherence());
                        let s = match cfg.sampling {
                            Sampling::Bernoulli => sample_bernoulli(n, p, rng)?,
                            Sampling::Uniform => sample_uniform(n, m, rng)?,
                        };
                        let (ok, err, conv) = solve_trial(cfg, &gt, &s)?;
                        (out.ok, out.relerr, out.converged) = (ok, Some(err), conv);
                        if cfg.a_stat {
                            out.a_stat = Some(deviation_stat(&t, &s)?);
                        }
                        Ok(())
                    };
                    out.failed = run(rng, &mut out).is_err();
                    out
                })
            });
            let sampling = match cfg.sampling {
                Sampling::Bernoulli => "bernoulli",
                Sampling::Uniform => "uniform",
            };
            let p = if cfg.sampling == Sampling::Uniform { m as f64 / (n * n) as f64 } else { p };
            let mut row = base_row(cfg, n, r, m, p);
            set_rate(&mut row, trials.iter().filter(|t| t.ok).count());
            row.mean_relerr = mean(trials.iter().map(|t| t.relerr));
            row.mean_a_stat = mean(trials.iter().map(|t| t.a_stat));
            set_mu(&mut row, &trials.iter().map(|t| t.inc.clone()).collect::<Vec<_>>());
            let converged = trials.iter().filter(|t| t.converged).count();
            let errors = trials.iter().filter(|t| t.failed).count();
            row.param = format!("sampling={sampling};solver={};converged={converged}", cfg.solver.algorithm.name());
            if errors > 0 {
                row.param += &format!(";errors={errors}");
            }
            row.wall_ms = wall;
            row
        })
        .collect();
    Ok(rows)
}

#[derive(Default)]
struct CertTrial {
    certified: bool,
    a_stat: Option<f64>,
    ptperp: Option<f64>,
    inc: Option<IncoherenceReport>,
    recovered: Option<bool>,
    relerr: Option<f64>,
    failed: bool,
}

/// Fraction of trials with a verified dual certificate per `(n, r, m)` cell.
/// With `cross_check`, the solver also runs and `statistic` holds the
/// recovery rate among certified trials (reference 0.98).
pub fn run_certificate(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    expect_kind(cfg, Kind::Certificate)?;
    let mut cells = Vec::new();
    for &n in &cfg.n {
        let spec = model_spec(cfg, n)?;
        for &r in &cfg.r {
            for (m, p) in levels(cfg, n) {
                cells.push((n, r, m.min(n * n), p, spec.clone()));
            }
        }
    }
    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(c, (n, r, m, p, spec))| {
            let (n, r, m, p) = (*n, *r, *m, *p);
            let (trials, wall) = timed(cfg.timing, || {
                per_trial(cfg, c, |rng| {
                    let mut out = CertTrial::default();
                    let run = |rng: &mut StreamRng, out: &mut CertTrial| -> mclab_core::Result<()> {
                        let gt = spec.generate(n, r, rng)?;
                        let t = gt.tangent_space()?;
                        out.inc = Some(t.incoherence());
                        let s = match cfg.sampling {
                            Sampling::Bernoulli => sample_bernoulli(n, p, rng)?,
                            Sampling::Uniform => sample_uniform(n, m, rng)?,
                        };
                        let built = match cfg.cert_method {
                            CertMethod::Neumann => {
                                build_certificate_neumann(&t, &s, cfg.neumann_terms, cfg.cert_tol / 10.0)
                            }
                            CertMethod::Solve => build_certificate_solve(&t, &s, cfg.cert_tol / 10.0, 10 * t.dim()),
                        };
                        match built {
                            Ok(rep) => {
                                out.certified = verify_certificate(&t, &s, &rep, cfg.cert_tol);
                                out.a_stat = Some(rep.a_stat);
                                out.ptperp = Some(rep.ptperp_norm);
                            }
                            Err(Error::Divergence { a_stat }) => out.a_stat = Some(a_stat),
                            Err(Error::InjectivityFailure { .. } | Error::NonConvergence { .. }) => {}
                            Err(e) => return Err(e),
                        }
                        if cfg.cross_check {
                            let (ok, err, _) = solve_trial(cfg, &gt, &s)?;
                            out.recovered = Some(ok);
                            out.relerr = Some(err);
                        }
                        Ok(())
                    };
                    out.failed = run(rng, &mut out).is_err();
                    out
                })
            });
            let p = if cfg.sampling == Sampling::Uniform { m as f64 / (n * n) as f64 } else { p };
            let mut row = base_row(cfg, n, r, m, p);
            let certified = trials.iter().filter(|t| t.certified).count();
            set_rate(&mut row, certified);
            row.mean_a_stat = mean(trials.iter().map(|t| t.a_stat));
            row.mean_ptperp_norm = mean(trials.iter().map(|t| t.ptperp));
            row.mean_relerr = mean(trials.iter().map(|t| t.relerr));
            set_mu(&mut row, &trials.iter().map(|t| t.inc.clone()).collect::<Vec<_>>());
            let method = match cfg.cert_method {
                CertMethod::Neumann => "neumann",
                CertMethod::Solve => "solve",
            };
            row.param = format!("method={method}");
            if cfg.cross_check {
                let both = trials.iter().filter(|t| t.certified && t.recovered == Some(true)).count();
                row.param += &format!(";certified_and_recovered={both}");
                row.reference = Some(0.98);
                if certified > 0 {
                    let rate = both as f64 / certified as f64;
                    row.statistic = Some(rate);
                    row.pass = Some(rate >= 0.98);
                }
            }
            let errors = trials.iter().filter(|t| t.failed).count();
            if errors > 0 {
                row.param += &format!(";errors={errors}");
            }
            row.wall_ms = wall;
            row
        })
        .collect();
    Ok(rows)
}

/// Smallest `m` allowed by the lower bound at failure probability `delta`:
/// `n²(1 − exp(−(μ₀r/n)·log(n/2δ)))`.
pub fn lower_bound_threshold(n: usize, r: usize, mu0: f64, delta: f64) -> f64 {
    let nf = n as f64;
    nf * nf * (1.0 - (-(mu0 * r as f64 / nf) * (nf / (2.0 * delta)).ln()).exp())
}

/// Unsampled-row events for the block construction. Two rows per
/// `(n, r, μ₀, p)` cell:
///
/// * `event=any_block_row`: some populated row misses every entry of its
///   diagonal block. `reference` is `1 − (1 − (1−p)^ℓ)^n`; `reference_alt`
///   counts only the `rℓ` populated rows, `1 − (1 − (1−p)^ℓ)^{rℓ}`.
/// * `event=fixed_row`: the first row of the first block is unsampled;
///   `reference` is `(1−p)^ℓ`.
///
/// `successes` counts trials in which the event occurred; `pass` is
/// `|statistic − reference| ≤ lower_tol`.
pub fn run_lower_bound(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    expect_kind(cfg, Kind::LowerBound)?;
    let mut cells = Vec::new();
    for &n in &cfg.n {
        for &r in &cfg.r {
            for &mu0 in &cfg.mu0 {
                let spec = BlockModelSpec::new(n, r, mu0)?;
                for (m, p) in levels(cfg, n) {
                    cells.push((spec.clone(), m.min(n * n), p));
                }
            }
        }
    }
    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(c, (spec, m, p))| -> Result<Vec<ExperimentRow>> {
            let (n, r, ell) = (spec.n, spec.r, spec.ell);
            let (events, wall) = timed(cfg.timing, || {
                per_trial(cfg, c, |rng| -> mclab_core::Result<(bool, bool)> {
                    let s = sample_bernoulli(n, *p, rng)?;
                    let unsampled = |i: usize| {
                        let block = &spec.blocks[i / ell];
                        block.clone().all(|j| !s.contains(i, j))
                    };
                    Ok(((0..r * ell).any(unsampled), unsampled(0)))
                })
            });
            let events = events.into_iter().collect::<mclab_core::Result<Vec<_>>>()?;
            let pi1 = (1.0 - p).powi(ell as i32);
            let m_star = lower_bound_threshold(n, r, spec.mu0, cfg.delta);
            let common = format!(
                "mu0={};ell={ell};m_star={};below_threshold={}",
                spec.mu0,
                m_star.round(),
                (*m as f64) < m_star
            );
            let mut out = Vec::new();
            for (event, hits, reference, alt) in [
                (
                    "any_block_row",
                    events.iter().filter(|e| e.0).count(),
                    1.0 - (1.0 - pi1).powi(n as i32),
                    Some(1.0 - (1.0 - pi1).powi((r * ell) as i32)),
                ),
                ("fixed_row", events.iter().filter(|e| e.1).count(), pi1, None),
            ] {
                let mut row = base_row(cfg, n, r, *m, *p);
                set_rate(&mut row, hits);
                let stat = hits as f64 / cfg.trials as f64;
                row.param = format!("event={event};{common}");
                row.mean_mu0 = Some(spec.measured_mu0());
                row.statistic = Some(stat);
                row.reference = Some(reference);
                row.reference_alt = alt;
                row.pass = Some((stat - reference).abs() <= cfg.lower_tol);
                row.wall_ms = wall;
                out.push(row);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Clone, Copy, Default)]
struct Arm {
    ok: bool,
    relerr: Option<f64>,
    size: usize,
}

/// Standard error of `f_u − 2·f_b` using the pooled failure proportion.
pub fn pooled_se(fail_u: usize, n_u: usize, fail_b: usize, n_b: usize) -> f64 {
    let pooled = (fail_u + fail_b) as f64 / (n_u + n_b) as f64;
    (pooled * (1.0 - pooled) * (1.0 / n_u as f64 + 4.0 / n_b as f64)).sqrt()
}

/// Recovery under Uniform(m), Bernoulli(m/n²) and Bernoulli(2m/n²) on the
/// same ground truths. The uniform row carries the check
/// `fail_unif ≤ 2·fail_ber + 3·se`: `reference` against rate `2m/n²`,
/// `reference_alt` against `m/n²`. Bernoulli rows report the mean `|Ω|` in
/// `statistic`, its expectation in `reference` and its standard deviation in
/// `reference_alt`.
pub fn run_model_equiv(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    expect_kind(cfg, Kind::ModelEquiv)?;
    let mut cells = Vec::new();
    for &n in &cfg.n {
        let spec = model_spec(cfg, n)?;
        for &r in &cfg.r {
            for &m in &cfg.m {
                cells.push((n, r, m.min(n * n), spec.clone()));
            }
        }
    }
    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(c, (n, r, m, spec))| {
            let (n, r, m) = (*n, *r, *m);
            let total = (n * n) as f64;
            let rates = [(m as f64 / total).min(1.0), (2.0 * m as f64 / total).min(1.0)];
            let (trials, wall) = timed(cfg.timing, || {
                per_trial(cfg, c, |rng| {
                    let run = |rng: &mut StreamRng| -> mclab_core::Result<(Option<IncoherenceReport>, [Arm; 3])> {
                        let gt = spec.generate(n, r, rng)?;
                        let inc = gt.tangent_space()?.incoherence();
                        let sets = [
                            sample_uniform(n, m, rng)?,
                            sample_bernoulli(n, rates[0], rng)?,
                            sample_bernoulli(n, rates[1], rng)?,
                        ];
                        let mut arms = [Arm::default(); 3];
                        for (arm, s) in arms.iter_mut().zip(&sets) {
                            arm.size = s.len();
                            // a numerical failure counts as a failed recovery
                            if let Ok((ok, err, _)) = solve_trial(cfg, &gt, s) {
                                (arm.ok, arm.relerr) = (ok, Some(err));
                            }
                        }
                        Ok((Some(inc), arms))
                    };
                    run(rng).unwrap_or((None, [Arm::default(); 3]))
                })
            });
            let inc: Vec<_> = trials.iter().map(|t| t.0.clone()).collect();
            let nt = cfg.trials;
            let fails: Vec<usize> = (0..3).map(|a| trials.iter().filter(|t| !t.1[a].ok).count()).collect();
            let frac = |f: usize| f as f64 / nt as f64;
            let mut out = Vec::new();
            for (a, label) in ["sampling=uniform", "sampling=bernoulli;rate=m/n^2", "sampling=bernoulli;rate=2m/n^2"]
                .iter()
                .enumerate()
            {
                let p = if a == 0 { m as f64 / total } else { rates[a - 1] };
                let mut row = base_row(cfg, n, r, m, p);
                set_rate(&mut row, nt - fails[a]);
                row.mean_relerr = mean(trials.iter().map(|t| t.1[a].relerr));
                set_mu(&mut row, &inc);
                row.param = label.to_string();
                if a == 0 {
                    let bound = |b: usize| 2.0 * frac(fails[b]) + 3.0 * pooled_se(fails[0], nt, fails[b], nt);
                    row.statistic = Some(frac(fails[0]));
                    row.reference = Some(bound(2));
                    row.reference_alt = Some(bound(1));
                    row.pass = Some(frac(fails[0]) <= bound(2));
                    if fails[1] > 0 {
                        row.param += &format!(";ratio={}", fails[0] as f64 / fails[1] as f64);
                    }
                } else {
                    let sizes = trials.iter().map(|t| t.1[a].size as f64);
                    row.statistic = Some(sizes.sum::<f64>() / nt as f64);
                    row.reference = Some(total * p);
                    row.reference_alt = Some((total * p * (1.0 - p)).sqrt());
                }
                row.wall_ms = wall;
                out.push(row);
            }
            out
        })
        .collect::<Vec<_>>();
    Ok(rows.into_iter().flatten().collect())
}

/// Trace-moment estimates against both theoretical bounds per
/// `(n, r, p, j, k)` cell. `pass` requires the estimate to stay within ten
/// times the second bound and, where a closed form exists, within three
/// standard errors of it.
pub fn run_moments(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    expect_kind(cfg, Kind::Moments)?;
    let mut cells = Vec::new();
    for &n in &cfg.n {
        if n > MAX_MOMENT_N {
            return Err(config_err!("moments are limited to n <= {MAX_MOMENT_N}"));
        }
        let spec = model_spec(cfg, n)?;
        for &r in &cfg.r {
            for (m, p) in levels(cfg, n) {
                for &j in &cfg.j {
                    for &k in &cfg.k {
                        if j == 0 || j * (k + 1) > MAX_MOMENT_ORDER {
                            return Err(config_err!(
                                "need 1 <= j(k+1) <= {MAX_MOMENT_ORDER}, got j={j}, k={k}"
                            ));
                        }
                        cells.push((n, r, m, p, j, k, spec.clone()));
                    }
                }
            }
        }
    }
    cells
        .par_iter()
        .enumerate()
        .map(|(c, (n, r, m, p, j, k, spec))| -> Result<ExperimentRow> {
            let mut rng = StreamRng::new(cfg.seed, (c as u64) << 32);
            let (est, wall) = timed(cfg.timing, || {
                trace_moment_estimate(spec, *n, *r, *p, *j, *k, cfg.trials, &mut rng)
            });
            let est = est?;
            let mut row = base_row(cfg, *n, *r, *m, *p);
            let within_bound = est.mean <= 10.0 * est.moment2_bound;
            let closed_ok = est
                .closed_form
                .is_none_or(|cf| (est.mean - cf).abs() <= 3.0 * est.stderr);
            row.param = format!("j={j};k={k};stderr={};mu={}", est.stderr, est.mu);
            if let Some(cf) = est.closed_form {
                row.param += &format!(";closed_form={cf}");
            }
            row.statistic = Some(est.mean);
            row.reference = Some(est.moment2_bound);
            row.reference_alt = Some(est.moment1_bound);
            row.pass = Some(within_bound && closed_ok);
            row.wall_ms = wall;
            Ok(row)
        })
        .collect()
}
