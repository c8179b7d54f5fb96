//! Experiment rows and their CSV / SVG renderings.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Format;
use crate::error::{config_err, LabError, Result};

/// One output row. Column order is the CSV header order and is frozen.
/// Optional fields are written as empty cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub kind: String,
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub p: f64,
    pub model: String,
    /// `key=value` pairs separated by `;`, specific to the experiment kind.
    pub param: String,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: Option<f64>,
    pub wilson_lo: Option<f64>,
    pub wilson_hi: Option<f64>,
    pub mean_relerr: Option<f64>,
    pub mean_mu0: Option<f64>,
    pub mean_mu1: Option<f64>,
    pub mean_mu2: Option<f64>,
    pub mean_a_stat: Option<f64>,
    pub mean_ptperp_norm: Option<f64>,
    pub statistic: Option<f64>,
    pub reference: Option<f64>,
    pub reference_alt: Option<f64>,
    pub pass: Option<bool>,
    pub wall_ms: u64,
}

pub const CSV_HEADER: &str = "kind,n,r,m,p,model,param,trials,successes,success_rate,wilson_lo,wilson_hi,\
mean_relerr,mean_mu0,mean_mu1,mean_mu2,mean_a_stat,mean_ptperp_norm,statistic,reference,\
reference_alt,pass,wall_ms";

impl ExperimentRow {
    /// Value of `key` in the `param` column.
    pub fn param_value(&self, key: &str) -> Option<&str> {
        self.param
            .split(';')
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }
}

pub fn write_csv<W: Write>(rows: &[ExperimentRow], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ExperimentRow]) -> String {
    let mut buf = Vec::new();
    if rows.is_empty() {
        buf.extend_from_slice(CSV_HEADER.as_bytes());
        buf.push(b'\n');
    } else {
        write_csv(rows, &mut buf).expect("writing to memory");
    }
    String::from_utf8(buf).expect("csv output is UTF-8")
}

pub fn parse_csv(text: &str) -> std::result::Result<Vec<ExperimentRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<ExperimentRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    parse_csv(&text).map_err(|source| LabError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Renders `rows`; fails on an empty row set.
pub fn render(rows: &[ExperimentRow], format: Format) -> Result<String> {
    if rows.is_empty() {
        return Err(config_err!("no rows to emit"));
    }
    Ok(match format {
        Format::Csv => to_csv_string(rows),
        Format::Svg => svg_scatter(rows),
    })
}

pub fn emit(rows: &[ExperimentRow], path: &Path, format: Format) -> Result<()> {
    let text = render(rows, format)?;
    std::fs::write(path, text).map_err(|e| LabError::io(path, e))
}

const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

/// Success rate against `m`, one coloured series per `(n, r, param)`, with
/// Wilson bars. Rows without a success rate are skipped.
pub fn svg_scatter(rows: &[ExperimentRow]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (60.0, 170.0, 20.0, 50.0);
    let pts: Vec<&ExperimentRow> = rows.iter().filter(|r| r.success_rate.is_some()).collect();
    let (mut lo, mut hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
            (a.min(r.m as f64), b.max(r.m as f64))
        });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x = |m: f64| left + (m - lo) / (hi - lo) * pw;
    let y = |s: f64| top + (1.0 - s) * ph;

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    )
    .unwrap();
    for k in 0..=4 {
        let s = k as f64 / 4.0;
        writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{s}</text>"#,
            left - 6.0,
            y(s) + 4.0
        )
        .unwrap();
        let m = lo + s * (hi - lo);
        writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.0}</text>"#,
            x(m),
            top + ph + 16.0,
            m
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">m (observed entries)</text>"#,
        left + pw / 2.0,
        h - 10.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<text transform="translate(16,{:.1}) rotate(-90)" text-anchor="middle">success rate</text>"#,
        top + ph / 2.0
    )
    .unwrap();

    let mut series: Vec<(String, Vec<&ExperimentRow>)> = Vec::new();
    for r in pts {
        let key = format!("n={} r={} {}", r.n, r.r, r.param);
        match series.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => series.push((key, vec![r])),
        }
    }
    for (i, (key, rs)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = rs
            .iter()
            .map(|r| format!("{:.1},{:.1}", x(r.m as f64), y(r.success_rate.unwrap_or(0.0))))
            .collect();
        writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{colour}"/>"#,
            path.join(" ")
        )
        .unwrap();
        for r in rs {
            let (cx, cy) = (x(r.m as f64), y(r.success_rate.unwrap_or(0.0)));
            if let (Some(a), Some(b)) = (r.wilson_lo, r.wilson_hi) {
                writeln!(
                    out,
                    r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="{colour}" stroke-opacity="0.5"/>"#,
                    y(a),
                    y(b)
                )
                .unwrap();
            }
            writeln!(out, r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="3" fill="{colour}"/>"#).unwrap();
        }
        let ly = top + 14.0 * i as f64 + 6.0;
        writeln!(
            out,
            r#"<rect x="{}" y="{:.1}" width="10" height="10" fill="{colour}"/><text x="{}" y="{:.1}">{}</text>"#,
            w - right + 12.0,
            ly - 8.0,
            w - right + 26.0,
            ly + 1.0,
            escape(key)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
