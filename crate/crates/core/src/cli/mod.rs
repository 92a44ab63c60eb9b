//! Command-line orchestration: configuration, mode dispatch and artifacts.

pub mod config;
pub mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::curve::{global_strategy, GlobalParams, GlobalStrategyOutcome};
use crate::margin::{estimate_margin, IntervalEstimate, MarginError};
use crate::rng::RngStream;
use crate::uncertainty::SamplePoint;
pub use config::{ExperimentConfig, Mode};
use output::{curve_csv, curve_svg, write_file, CiTable, LogEvent, RunLog};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("numerical failure in {stage}: {message}")]
    Numerical {
        stage: &'static str,
        message: String,
    },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical { .. } => 2,
            CliError::Io { .. } => 3,
        }
    }
}

/// In-memory results of one run, alongside the files written.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
    pub log: Option<RunLog>,
    pub margin: Option<IntervalEstimate>,
    pub curves: Option<GlobalStrategyOutcome>,
    pub ci_table: Option<CiTable>,
}

/// Reads a config file, or the embedded one for a demo mode when `path` is
/// `None`.
pub fn load_config(mode: Mode, path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            ExperimentConfig::from_toml(&text).map_err(|e| match e {
                CliError::Validation(msg) => {
                    CliError::Validation(format!("{}: {msg}", p.display()))
                }
                other => other,
            })
        }
        None => ExperimentConfig::demo(mode).ok_or_else(|| {
            CliError::Validation(format!("mode '{}' requires --config", mode.name()))
        }),
    }
}

fn output_dir(config: &ExperimentConfig, mode: Mode, out: Option<&Path>) -> PathBuf {
    match out {
        Some(p) => p.to_path_buf(),
        None => config
            .output
            .as_ref()
            .and_then(|o| o.dir.clone())
            .map_or_else(|| PathBuf::from("out").join(mode.name()), PathBuf::from),
    }
}

/// Runs `mode` with `config` and writes artifacts under `out` (or the
/// config's output directory).
pub fn run_experiment(
    mode: Mode,
    config: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<RunOutcome, CliError> {
    let resolved = config.resolve(mode)?;
    let dir = output_dir(config, mode, out);
    let mut outcome = RunOutcome::default();
    let mut log = RunLog::new(mode.name(), resolved.seed, config.to_toml());
    let root = RngStream::new(resolved.seed);

    match mode {
        Mode::CiTable => {
            let t = resolved.ci_table.as_ref().expect("resolved");
            let table = CiTable::compute(t.n, t.delta).map_err(|e| CliError::Numerical {
                stage: "ci-table",
                message: e.to_string(),
            })?;
            let ordered = table
                .rows
                .iter()
                .all(|[a, b, c, d]| a >= c && c >= d && d >= b);
            let _ = writeln!(
                outcome.summary,
                "N = {}, delta = {}: ordering A >= C >= D >= B {}; max width inflation {:.6}",
                t.n,
                t.delta,
                if ordered { "holds" } else { "VIOLATED" },
                table.max_width_inflation()
            );
            outcome
                .artifacts
                .push(write_file(&dir, "ci_table.csv", &table.csv())?);
            outcome.ci_table = Some(table);
            return Ok(outcome);
        }
        Mode::Specs => {
            let problem = resolved.problem.as_ref().expect("resolved");
            let point = SamplePoint::new(resolved.point.clone().expect("resolved"));
            let report = problem.report(&point).map_err(|e| CliError::Numerical {
                stage: "specs",
                message: e.to_string(),
            })?;
            let _ = writeln!(
                outcome.summary,
                "characteristic polynomial: {:?}",
                report.char_poly.coeffs()
            );
            for z in &report.roots {
                let _ = writeln!(outcome.summary, "root {:.6} {:+.6}i", z.re, z.im);
            }
            let specs = match &report.specs {
                Some(s) => Some(*s),
                None => {
                    let (num, den) =
                        problem
                            .closed_loop(&point)
                            .map_err(|e| CliError::Numerical {
                                stage: "specs",
                                message: e.to_string(),
                            })?;
                    let sim = match &problem.requirement {
                        crate::systems::Requirement::TimeDomain(t) => t.sim,
                        _ => Default::default(),
                    };
                    crate::systems::step_response_specs(&num, &den, &sim).ok()
                }
            };
            if let Some(s) = specs {
                let _ = writeln!(
                    outcome.summary,
                    "peak {:.6}, rise time {:.6}, settling time {:.6}, final value {:.6}",
                    s.peak, s.rise_time, s.settling_time, s.final_value
                );
            }
            let _ = writeln!(
                outcome.summary,
                "requirement satisfied: {}",
                report.satisfied
            );
            let json = serde_json::json!({
                "point": point.coords,
                "char_poly": report.char_poly.coeffs(),
                "roots": report.roots.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
                "peak": specs.map(|s| s.peak),
                "rise_time": specs.map(|s| s.rise_time),
                "settling_time": specs.map(|s| s.settling_time),
                "satisfied": report.satisfied,
            });
            outcome.artifacts.push(write_file(
                &dir,
                "specs.json",
                &(serde_json::to_string_pretty(&json).unwrap() + "\n"),
            )?);
            return Ok(outcome);
        }
        _ => {}
    }

    let problem = resolved.problem.as_ref().expect("resolved");
    let epsilon = resolved.epsilon.expect("resolved");
    let mut r_hat = resolved.curve.and_then(|c| c.r_hat);

    if let Some(params) = &resolved.margin {
        match estimate_margin(problem, params, &root.child(0)) {
            Ok(est) => {
                log.push_comparisons(&est.records);
                for &(a, b) in &est.history {
                    log.push(LogEvent::Interval { a, b });
                }
                log.push(LogEvent::MarginResult {
                    a: est.a,
                    b: est.b,
                    soft_upper: est.soft_upper,
                    total_trials: est.total_trials,
                    inconclusive_steps: est.inconclusive_steps.clone(),
                });
                let _ = writeln!(
                    outcome.summary,
                    "margin interval [{}, {}] after {} trials; intervals {:?}",
                    est.a, est.b, est.total_trials, est.history
                );
                if !est.inconclusive_steps.is_empty() {
                    let _ = writeln!(
                        outcome.summary,
                        "warning: {} inconclusive bisection steps",
                        est.inconclusive_steps.len()
                    );
                }
                r_hat = r_hat.or(Some(est.soft_upper));
                outcome.margin = Some(est);
            }
            Err(e) => {
                let partial = match &e {
                    MarginError::Inconclusive { partial, .. }
                    | MarginError::MaxDoublings { partial, .. } => Some(partial.records.clone()),
                    _ => None,
                };
                if let Some(records) = partial {
                    log.push_comparisons(&records);
                }
                log.push(LogEvent::Note {
                    message: e.to_string(),
                });
                write_file(&dir, "run_log.jsonl", &log.to_jsonl())?;
                return Err(CliError::Numerical {
                    stage: "margin",
                    message: e.to_string(),
                });
            }
        }
    }

    if let Some(cp) = resolved.curve {
        let r_hat = r_hat.expect("resolved");
        let params = GlobalParams {
            n: cp.n,
            delta: cp.delta,
            r_hat,
            l: cp.l,
            max_halvings: cp.max_halvings,
        };
        let g =
            global_strategy(problem, &params, &root.child(1)).map_err(|e| CliError::Numerical {
                stage: "curve",
                message: e.to_string(),
            })?;
        for c in &g.curves {
            let last = c.points.last().expect("non-empty curve");
            log.push(LogEvent::Curve {
                a: last.r,
                b: c.points[0].r,
                l: c.points.len(),
                n_required: c.n_required,
                delta: c.delta,
                generated_samples: c.generated_samples,
                seed: c.seed,
                stream_path: c.stream_path.clone(),
                lower_end_all_success: last.m1 == last.m2,
            });
        }
        log.push(LogEvent::CurveResult {
            intervals: g.curves.len(),
            generated_samples: g.generated_samples(),
            terminated: g.terminated,
            warning: g.warning.clone(),
        });
        let points: Vec<_> = g
            .curves
            .iter()
            .flat_map(|c| c.points.iter().copied())
            .collect();
        let _ = writeln!(
            outcome.summary,
            "curve from R = {r_hat}: N = {}, {} interval(s), {} fresh samples ({:.2}% of N*l per interval), terminated: {}",
            cp.n,
            g.curves.len(),
            g.generated_samples(),
            100.0 * g.generated_samples() as f64 / (cp.n as f64 * cp.l as f64 * g.curves.len() as f64),
            g.terminated
        );
        if let Some(w) = &g.warning {
            let _ = writeln!(outcome.summary, "warning: {w}");
        }
        outcome
            .artifacts
            .push(write_file(&dir, "curve.csv", &curve_csv(&points))?);
        let title = format!("{}: robustness degradation curve", mode.name());
        outcome.artifacts.push(write_file(
            &dir,
            "curve.svg",
            &curve_svg(&points, Some(1.0 - epsilon), &title),
        )?);
        outcome.curves = Some(g);
    }

    outcome
        .artifacts
        .push(write_file(&dir, "run_log.jsonl", &log.to_jsonl())?);
    outcome.log = Some(log);
    Ok(outcome)
}

/// Re-runs the configuration embedded in a run log and checks that the new
/// log is byte-identical. Returns the regenerated log text.
pub fn replay(log_path: &Path, out: &Path) -> Result<(bool, String), CliError> {
    let text = std::fs::read_to_string(log_path).map_err(|source| CliError::Io {
        path: log_path.to_path_buf(),
        source,
    })?;
    let log = RunLog::parse(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", log_path.display())))?;
    let mode = <Mode as clap::ValueEnum>::from_str(&log.header.mode, false)
        .map_err(|e| CliError::Validation(format!("run log mode: {e}")))?;
    let config = ExperimentConfig::from_toml(&log.header.config)?;
    let outcome = run_experiment(mode, &config, Some(out))?;
    let fresh = outcome.log.map(|l| l.to_jsonl()).unwrap_or_default();
    Ok((fresh == text, fresh))
}
