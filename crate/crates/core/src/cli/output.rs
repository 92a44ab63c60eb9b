//! CSV tables, SVG chart and the JSONL run log.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::binom::{clopper_pearson_limits, explicit_limits, BinomError, TrialCounts};
use crate::curve::CurvePoint;
use crate::margin::{ComparisonRecord, Stage, Verdict};

pub const CURVE_HEADER: &str = "r,phat,lower,upper,m1,m2";

/// Twelve significant digits, round-trippable through `str::parse`.
pub fn fmt12(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            fmt12(p.r),
            fmt12(p.estimate),
            fmt12(p.bounds.lower),
            fmt12(p.bounds.upper),
            p.m1,
            p.m2
        );
    }
    s
}

/// One parsed curve CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub r: f64,
    pub phat: f64,
    pub lower: f64,
    pub upper: f64,
    pub m1: u64,
    pub m2: u64,
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<CurveRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err("missing or wrong header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(format!("row {}: expected 6 fields", i + 1));
            }
            let real = |s: &str| s.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1));
            let int = |s: &str| s.parse::<u64>().map_err(|e| format!("row {}: {e}", i + 1));
            Ok(CurveRow {
                r: real(f[0])?,
                phat: real(f[1])?,
                lower: real(f[2])?,
                upper: real(f[3])?,
                m1: int(f[4])?,
                m2: int(f[5])?,
            })
        })
        .collect()
}

/// Explicit (A upper, B lower) and Clopper-Pearson (C upper, D lower) limits
/// for every `k = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CiTable {
    pub n: u64,
    pub delta: f64,
    pub rows: Vec<[f64; 4]>,
}

impl CiTable {
    pub fn compute(n: u64, delta: f64) -> Result<Self, BinomError> {
        let rows = (0..=n)
            .map(|k| {
                let c = TrialCounts::new(n, k)?;
                let e = explicit_limits(c, delta)?;
                let cp = clopper_pearson_limits(c, delta)?;
                Ok([e.upper, e.lower, cp.upper, cp.lower])
            })
            .collect::<Result<_, BinomError>>()?;
        Ok(Self { n, delta, rows })
    }

    /// Largest `(A - B) / (C - D)` over the table.
    pub fn max_width_inflation(&self) -> f64 {
        self.rows
            .iter()
            .map(|[a, b, c, d]| (a - b) / (c - d))
            .fold(0.0, f64::max)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("k,A,B,C,D\n");
        for (k, [a, b, c, d]) in self.rows.iter().enumerate() {
            let _ = writeln!(
                s,
                "{k},{},{},{},{}",
                fmt12(*a),
                fmt12(*b),
                fmt12(*c),
                fmt12(*d)
            );
        }
        s
    }
}

/// Line chart of the estimate with its confidence band and a dashed rule at
/// `rule` (usually `1 - epsilon`).
pub fn curve_svg(points: &[CurvePoint], rule: Option<f64>, title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;

    let mut pts: Vec<&CurvePoint> = points.iter().collect();
    pts.sort_by(|a, b| a.r.total_cmp(&b.r));
    let (mut x0, mut x1) = (
        pts.first().map_or(0.0, |p| p.r),
        pts.last().map_or(1.0, |p| p.r),
    );
    if x1 - x0 <= 0.0 {
        x0 -= 0.5 * x0.abs().max(1e-3);
        x1 += 0.5 * x1.abs().max(1e-3);
    }
    let mut y0 = pts.iter().map(|p| p.bounds.lower).fold(1.0, f64::min);
    if let Some(r) = rule {
        y0 = y0.min(r);
    }
    let pad = ((1.0 - y0) * 0.05).max(1e-4);
    let (y0, y1) = ((y0 - pad).max(0.0), 1.0 + pad);
    let sx = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let sy = |y: f64| T + (y1 - y) / (y1 - y0) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );

    // Axes and ticks.
    let _ = writeln!(
        s,
        r#"<path d="M{L},{T} L{L},{} L{},{}" fill="none" stroke="black"/>"#,
        H - B,
        W - R,
        H - B
    );
    for i in 0..=5 {
        let x = x0 + (x1 - x0) * i as f64 / 5.0;
        let px = sx(x);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
            H - B,
            H - B + 5.0,
            H - B + 18.0,
            tick(x)
        );
        let y = y0 + (y1 - y0) * i as f64 / 5.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{py:.2}" x2="{L}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            L - 5.0,
            L - 8.0,
            py + 4.0,
            tick(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">uncertainty radius r</text>"#,
        (L + W - R) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">proportion satisfying requirement</text>"#,
        (T + H - B) / 2.0,
        (T + H - B) / 2.0
    );

    if !pts.is_empty() {
        let mut band = String::new();
        for p in &pts {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.r), sy(p.bounds.upper));
        }
        for p in pts.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.r), sy(p.bounds.lower));
        }
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##,
            band.trim_end()
        );
        let line: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.r), sy(p.estimate)))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="1.5"/>"##,
            line.join(" ")
        );
        for p in &pts {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="#08519c"/>"##,
                sx(p.r),
                sy(p.estimate)
            );
        }
    }
    if let Some(r) = rule {
        let y = sy(r);
        let _ = writeln!(
            s,
            r##"<line x1="{L}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#d62728" stroke-dasharray="6,4"/><text x="{}" y="{:.2}" text-anchor="end" fill="#d62728">{}</text>"##,
            W - R,
            W - R - 4.0,
            y - 4.0,
            tick(r)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// First line of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub software: String,
    pub version: String,
    pub mode: String,
    pub seed: u64,
    /// Effective configuration as TOML; re-running it reproduces the log.
    pub config: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Comparison {
        stage: Stage,
        radius: f64,
        n: u64,
        k: u64,
        verdict: Verdict,
        lower: f64,
        upper: f64,
    },
    Interval {
        a: f64,
        b: f64,
    },
    MarginResult {
        a: f64,
        b: f64,
        soft_upper: f64,
        total_trials: u64,
        inconclusive_steps: Vec<usize>,
    },
    Curve {
        a: f64,
        b: f64,
        l: usize,
        n_required: u64,
        delta: f64,
        generated_samples: u64,
        seed: u64,
        stream_path: Vec<u64>,
        lower_end_all_success: bool,
    },
    CurveResult {
        intervals: usize,
        generated_samples: u64,
        terminated: bool,
        warning: Option<String>,
    },
    Note {
        message: String,
    },
}

/// One line after the header; `seq` is a logical timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: LogHeader,
    pub records: Vec<LogRecord>,
}

impl RunLog {
    pub fn new(mode: &str, seed: u64, config: String) -> Self {
        Self {
            header: LogHeader {
                software: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                mode: mode.into(),
                seed,
                config,
            },
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, event: LogEvent) {
        let seq = self.records.len() as u64;
        self.records.push(LogRecord { seq, event });
    }

    pub fn push_comparisons(&mut self, records: &[ComparisonRecord]) {
        for r in records {
            self.push(LogEvent::Comparison {
                stage: r.stage,
                radius: r.radius,
                n: r.trials,
                k: r.successes,
                verdict: r.verdict,
                lower: r.lower,
                upper: r.upper,
            });
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = serde_json::to_string(&self.header).expect("header serializes");
        s.push('\n');
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header: LogHeader = serde_json::from_str(lines.next().ok_or("empty run log")?)
            .map_err(|e| format!("header: {e}"))?;
        let records = lines
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 2)))
            .collect::<Result<_, _>>()?;
        Ok(Self { header, records })
    }
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
