//! Experiment configuration: flat `key = value` text plus overrides.
//!
//! Lists are comma separated (`n = 32, 48`). Lines starting with `#` are
//! comments. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mclab_core::models::ModelKind;
use mclab_core::solver::{Algorithm, SolverParams, RECOVERY_TOL};

use crate::error::{config_err, LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Phase,
    Certificate,
    LowerBound,
    ModelEquiv,
    Moments,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Phase => "phase",
            Kind::Certificate => "certificate",
            Kind::LowerBound => "lower_bound",
            Kind::ModelEquiv => "model_equiv",
            Kind::Moments => "moments",
        }
    }

    pub fn default_trials(self) -> usize {
        match self {
            Kind::Phase | Kind::ModelEquiv => 50,
            Kind::Certificate | Kind::Moments => 200,
            Kind::LowerBound => 10_000,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "phase" => Kind::Phase,
            "certificate" | "cert" => Kind::Certificate,
            "lower_bound" | "lower" => Kind::LowerBound,
            "model_equiv" | "equiv" => Kind::ModelEquiv,
            "moments" => Kind::Moments,
            other => return Err(config_err!("unknown kind '{other}'")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    Bernoulli,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertMethod {
    Neumann,
    Solve,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Svg,
}

impl FromStr for Format {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "svg" | "svg-scatter" => Ok(Format::Svg),
            other => Err(config_err!("unknown format '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub n: Vec<usize>,
    pub r: Vec<usize>,
    /// Sample counts; mutually exclusive with `p`.
    pub m: Vec<usize>,
    /// Sampling rates; mutually exclusive with `m`.
    pub p: Vec<f64>,
    pub model: ModelKind,
    pub trials: usize,
    pub seed: u64,
    pub sampling: Sampling,
    pub solver: SolverParams,
    /// Pass the true rank to the solver as a rank cap hint.
    pub rank_hint: bool,
    pub recovery_tol: f64,
    pub cert_method: CertMethod,
    pub neumann_terms: usize,
    /// Tolerance on `‖P_T(Y) − E‖_F` for a certificate to count.
    pub cert_tol: f64,
    /// Also run the solver in certificate cells.
    pub cross_check: bool,
    /// Compute the deviation statistic in phase cells.
    pub a_stat: bool,
    pub mu0: Vec<f64>,
    pub delta: f64,
    pub lower_tol: f64,
    pub j: Vec<usize>,
    pub k: Vec<usize>,
    /// Record wall-clock time per cell; off by default so output is
    /// reproducible byte for byte.
    pub timing: bool,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl ExperimentConfig {
    pub fn new(kind: Kind) -> Self {
        Self {
            kind,
            n: Vec::new(),
            r: Vec::new(),
            m: Vec::new(),
            p: Vec::new(),
            model: match kind {
                Kind::LowerBound => ModelKind::Block,
                _ => ModelKind::RandomOrthogonal,
            },
            trials: kind.default_trials(),
            seed: 0,
            sampling: Sampling::Bernoulli,
            solver: SolverParams::default(),
            rank_hint: true,
            recovery_tol: RECOVERY_TOL,
            cert_method: CertMethod::Neumann,
            neumann_terms: 500,
            cert_tol: 1e-8,
            cross_check: false,
            a_stat: false,
            mu0: Vec::new(),
            delta: 0.1,
            lower_tol: 0.03,
            j: Vec::new(),
            k: Vec::new(),
            timing: false,
            threads: None,
            out: None,
            format: Format::Csv,
        }
    }

    /// Parses `text` on top of the defaults for `kind`. A `kind` key in the
    /// text must agree with `kind` when both are given.
    pub fn parse(text: &str, kind: Option<Kind>) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let file_kind = pairs
            .iter()
            .find(|(k, _)| k == "kind")
            .map(|(_, v)| v.parse::<Kind>())
            .transpose()?;
        let kind = match (kind, file_kind) {
            (Some(a), Some(b)) if a != b => {
                return Err(config_err!("config is for '{b}' but '{a}' was requested"))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(config_err!("no experiment kind given")),
        };
        let mut cfg = Self::new(kind);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path, kind: Option<Kind>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text, kind)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| config_err!("override '{kv}' is not key=value"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "kind" => {
                let k: Kind = value.parse()?;
                if k != self.kind {
                    return Err(config_err!("cannot change kind from '{}' to '{k}'", self.kind));
                }
            }
            "n" => self.n = list(key, value)?,
            "r" => self.r = list(key, value)?,
            "m" => self.m = list(key, value)?,
            "p" => self.p = list(key, value)?,
            "mu0" => self.mu0 = list(key, value)?,
            "j" => self.j = list(key, value)?,
            "k" => self.k = list(key, value)?,
            "model" => {
                self.model = value.parse().map_err(|_| config_err!("unknown model '{value}'"))?
            }
            "trials" => self.trials = scalar(key, value)?,
            "seed" => self.seed = scalar(key, value)?,
            "sampling" => {
                self.sampling = match value {
                    "bernoulli" => Sampling::Bernoulli,
                    "uniform" => Sampling::Uniform,
                    _ => return Err(config_err!("unknown sampling '{value}'")),
                }
            }
            "solver" => {
                self.solver.algorithm = value
                    .parse::<Algorithm>()
                    .map_err(|_| config_err!("unknown solver '{value}'"))?
            }
            "max_iter" => self.solver.max_iter = scalar(key, value)?,
            "tol_feas" => self.solver.tol_feas = scalar(key, value)?,
            "tol_obj" => self.solver.tol_obj = scalar(key, value)?,
            "step" => self.solver.step = scalar(key, value)?,
            "tau" => self.solver.tau = scalar(key, value)?,
            "rank_hint" => self.rank_hint = scalar(key, value)?,
            "recovery_tol" => self.recovery_tol = scalar(key, value)?,
            "cert_method" => {
                self.cert_method = match value {
                    "neumann" => CertMethod::Neumann,
                    "solve" => CertMethod::Solve,
                    _ => return Err(config_err!("unknown cert_method '{value}'")),
                }
            }
            "neumann_terms" => self.neumann_terms = scalar(key, value)?,
            "cert_tol" => self.cert_tol = scalar(key, value)?,
            "cross_check" => self.cross_check = scalar(key, value)?,
            "a_stat" => self.a_stat = scalar(key, value)?,
            "delta" => self.delta = scalar(key, value)?,
            "lower_tol" => self.lower_tol = scalar(key, value)?,
            "timing" => self.timing = scalar(key, value)?,
            "threads" => self.threads = Some(scalar(key, value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            _ => return Err(config_err!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let need = |ok: bool, what: &str| if ok { Ok(()) } else { Err(config_err!("{what}")) };
        need(!self.n.is_empty(), "n grid is empty")?;
        need(!self.r.is_empty(), "r grid is empty")?;
        need(self.trials >= 1, "trials must be at least 1")?;
        need(self.n.iter().all(|&n| n >= 1), "n must be positive")?;
        for &n in &self.n {
            for &r in &self.r {
                need(r >= 1 && r <= n, &format!("rank {r} is not in 1..={n}"))?;
            }
        }
        need(
            self.m.is_empty() || self.p.is_empty(),
            "give either an m grid or a p grid, not both",
        )?;
        need(
            !(self.m.is_empty() && self.p.is_empty()),
            "m grid (or p grid) is empty",
        )?;
        need(
            self.p.iter().all(|&p| p > 0.0 && p <= 1.0),
            "sampling rates must lie in (0, 1]",
        )?;
        need(self.m.iter().all(|&m| m >= 1), "sample counts must be positive")?;
        need(self.model != ModelKind::Custom, "model 'custom' cannot be generated")?;
        need(self.recovery_tol > 0.0, "recovery_tol must be positive")?;
        need(self.cert_tol > 0.0, "cert_tol must be positive")?;
        need(self.threads != Some(0), "threads must be at least 1")?;
        self.solver.validate()?;
        match self.kind {
            Kind::LowerBound => {
                need(self.model == ModelKind::Block, "lower_bound requires model = block")?;
                need(!self.mu0.is_empty(), "mu0 grid is empty")?;
                need(self.mu0.iter().all(|&x| x >= 1.0), "mu0 must be at least 1")?;
                need(self.delta > 0.0 && self.delta < 1.0, "delta must lie in (0, 1)")?;
            }
            Kind::Moments => {
                need(!self.j.is_empty() && !self.k.is_empty(), "j and k grids are required")?;
                need(self.trials >= 2, "moments need at least two trials")?;
            }
            Kind::ModelEquiv => need(!self.m.is_empty(), "model_equiv needs an m grid")?,
            _ => {}
        }
        Ok(())
    }
}

fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err!("line {}: expected key = value", ln + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err!("bad value '{value}' for '{key}'"))
}

/// Comma-separated list, sorted and deduplicated so that output order
/// follows the grid coordinates.
fn list<T: FromStr + PartialOrd + Copy>(key: &str, value: &str) -> Result<Vec<T>> {
    let mut xs = value
        .split(',')
        .map(|t| scalar(key, t.trim()))
        .collect::<Result<Vec<T>>>()?;
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    xs.dedup();
    if xs.is_empty() {
        return Err(config_err!("'{key}' is empty"));
    }
    Ok(xs)
}
