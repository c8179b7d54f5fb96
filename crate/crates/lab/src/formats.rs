//! Plain-text file formats for sample sets, observations and ground truths.
//!
//! Sample sets: a header `# n1 n2 model p m`, then one `i j` pair per line
//! (0-based). A third column, if present on every line, carries the observed
//! value `M_ij`.
//!
//! Ground truths: a header `n r model seed`, then `U` (n rows of r values),
//! `sigma`, `signs` and `V`, all as whitespace-separated floats.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mclab_core::models::{GroundTruth, ModelKind};
use mclab_core::sampling::{SampleSet, SamplingModel};
use mclab_core::Mat;

use crate::error::{LabError, Result};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> LabError {
    LabError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| LabError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

pub fn format_samples(s: &SampleSet, values: Option<&Mat>) -> String {
    let mut out = format!(
        "# {} {} {} {} {}\n",
        s.n1(),
        s.n2(),
        s.model().name(),
        s.p(),
        s.m_nominal()
    );
    for &(i, j) in s.omega() {
        match values {
            Some(v) => writeln!(out, "{i} {j} {}", v[(i, j)]),
            None => writeln!(out, "{i} {j}"),
        }
        .unwrap();
    }
    out
}

/// Parses a sample set; the second element holds the observations (zero off
/// `Ω`) when the file carries values. `path` is only used in messages.
pub fn parse_samples(text: &str, path: &Path) -> Result<(SampleSet, Option<Mat>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let h: Vec<&str> = header
        .strip_prefix('#')
        .ok_or_else(|| parse_err(path, hline + 1, "expected header '# n1 n2 model p m'"))?
        .split_whitespace()
        .collect();
    if h.len() != 5 {
        return Err(parse_err(path, hline + 1, "expected header '# n1 n2 model p m'"));
    }
    let num = |k: usize, what: &str| -> Result<usize> {
        h[k].parse()
            .map_err(|_| parse_err(path, hline + 1, format!("bad {what} '{}'", h[k])))
    };
    let (n1, n2) = (num(0, "n1")?, num(1, "n2")?);
    let p: f64 = h[3]
        .parse()
        .map_err(|_| parse_err(path, hline + 1, format!("bad p '{}'", h[3])))?;

    let mut omega = Vec::new();
    let mut vals = Vec::new();
    for (ln, line) in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        if !(t.len() == 2 || t.len() == 3) {
            return Err(parse_err(path, ln + 1, "expected 'i j' or 'i j value'"));
        }
        let idx = |k: usize| -> Result<usize> {
            t[k].parse()
                .map_err(|_| parse_err(path, ln + 1, format!("bad index '{}'", t[k])))
        };
        omega.push((idx(0)?, idx(1)?));
        if t.len() == 3 {
            let v: f64 = t[2]
                .parse()
                .map_err(|_| parse_err(path, ln + 1, format!("bad value '{}'", t[2])))?;
            vals.push(v);
        }
        if !vals.is_empty() && vals.len() != omega.len() {
            return Err(parse_err(path, ln + 1, "values must be given on every line or none"));
        }
    }
    let model = match h[2] {
        "bernoulli" => SamplingModel::Bernoulli { p },
        "uniform" => SamplingModel::Uniform { m: omega.len() },
        other => return Err(parse_err(path, hline + 1, format!("unknown sampling model '{other}'"))),
    };
    let observed = (!vals.is_empty()).then(|| {
        let mut m = Mat::zeros(n1, n2);
        for (&(i, j), v) in omega.iter().zip(&vals) {
            if i < n1 && j < n2 {
                m[(i, j)] = *v;
            }
        }
        m
    });
    let s = SampleSet::from_pairs(n1, n2, omega, model)?;
    Ok((s, observed))
}

pub fn write_samples(path: &Path, s: &SampleSet, values: Option<&Mat>) -> Result<()> {
    write(path, &format_samples(s, values))
}

pub fn read_samples(path: &Path) -> Result<(SampleSet, Option<Mat>)> {
    parse_samples(&read(path)?, path)
}

fn push_rows(out: &mut String, m: &Mat) {
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(f64::to_string).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

fn push_line(out: &mut String, xs: &[f64]) {
    let row: Vec<String> = xs.iter().map(f64::to_string).collect();
    out.push_str(&row.join(" "));
    out.push('\n');
}

pub fn format_truth(gt: &GroundTruth) -> String {
    let mut out = format!("{} {} {} {}\n", gt.n(), gt.rank(), gt.model(), gt.seed());
    push_rows(&mut out, gt.u());
    push_line(&mut out, gt.sigma());
    push_line(&mut out, gt.signs());
    push_rows(&mut out, gt.v());
    out
}

pub fn parse_truth(text: &str, path: &Path) -> Result<GroundTruth> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?
        .split_whitespace()
        .collect();
    if header.len() != 4 {
        return Err(parse_err(path, 1, "expected header 'n r model seed'"));
    }
    let bad = |what: &str, tok: &str| parse_err(path, 1, format!("bad {what} '{tok}'"));
    let n: usize = header[0].parse().map_err(|_| bad("n", header[0]))?;
    let r: usize = header[1].parse().map_err(|_| bad("r", header[1]))?;
    let model: ModelKind = header[2].parse().map_err(|_| bad("model", header[2]))?;
    let seed: u64 = header[3].parse().map_err(|_| bad("seed", header[3]))?;

    let mut values = Vec::with_capacity(2 * n * r + 2 * r);
    for (k, line) in lines.enumerate() {
        for tok in line.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|_| parse_err(path, k + 2, format!("bad number '{tok}'")))?,
            );
        }
    }
    let want = 2 * n * r + 2 * r;
    if values.len() != want {
        return Err(parse_err(
            path,
            1,
            format!("expected {want} values for n={n}, r={r}, found {}", values.len()),
        ));
    }
    let mut rest = values.as_slice();
    let mut take = |k: usize| {
        let (a, b) = rest.split_at(k);
        rest = b;
        a.to_vec()
    };
    let u = Mat::from_vec(n, r, take(n * r))?;
    let sigma = take(r);
    let signs = take(r);
    let v = Mat::from_vec(n, r, take(n * r))?;
    Ok(GroundTruth::new(u, v, sigma, signs, model, seed)?)
}

pub fn write_truth(path: &Path, gt: &GroundTruth) -> Result<()> {
    write(path, &format_truth(gt))
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    parse_truth(&read(path)?, path)
}

/// Dense matrix as whitespace-separated rows.
pub fn write_matrix(path: &Path, m: &Mat) -> Result<()> {
    let mut out = String::new();
    push_rows(&mut out, m);
    write(path, &out)
}

pub fn read_matrix(path: &Path) -> Result<Mat> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(path, k + 1, format!("bad number '{t}'"))))
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    Mat::from_rows(&rows).map_err(|e| parse_err(path, 1, e.to_string()))
}

/// Placeholder path for messages about in-memory text.
pub fn memory_path() -> PathBuf {
    PathBuf::from("<memory>")
}
