//! Run reports as JSON Lines.
//!
//! One object per line, tagged by `type`: a `header`, one `iteration` per
//! solver iteration, a `timing` record, an optional `metrics` record (present
//! exactly when truth labels are known) and a closing `summary`. Only the
//! `timing` record depends on wall-clock time.

use std::io::Write;

use cfmvc::solver::{InitSource, IterationRecord, SolverConfig, SolverOutput, Timings};
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "cfmvc-report";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Header {
        schema: String,
        version: u32,
        dataset: String,
        n: usize,
        c: usize,
        views: usize,
        seed: u64,
        theta: usize,
        k_nn: usize,
        init: InitSource,
        config: SolverConfig,
    },
    Iteration(IterationRecord),
    Timing(Timings),
    Metrics(Metrics),
    Summary {
        iterations: usize,
        converged: bool,
        final_residual: f64,
        alpha: Vec<f64>,
        cluster_sizes: Vec<usize>,
    },
}

/// Builds the records for one finished run.
pub fn records(
    dataset: &str,
    n_views: usize,
    config: &SolverConfig,
    out: &SolverOutput,
    metrics: Option<Metrics>,
) -> Vec<Record> {
    let mut recs = vec![Record::Header {
        schema: SCHEMA.into(),
        version: SCHEMA_VERSION,
        dataset: dataset.into(),
        n: out.labels.n_samples(),
        c: out.labels.n_clusters(),
        views: n_views,
        seed: config.seed,
        theta: out.theta,
        k_nn: out.k_nn,
        init: out.init.clone(),
        config: config.clone(),
    }];
    recs.extend(out.state.history.iter().cloned().map(Record::Iteration));
    recs.push(Record::Timing(out.timings));
    if let Some(m) = metrics {
        recs.push(Record::Metrics(m));
    }
    recs.push(Record::Summary {
        iterations: out.iterations(),
        converged: out.state.converged,
        final_residual: out.state.history.last().map_or(f64::NAN, |h| h.residual),
        alpha: out.state.alpha.clone(),
        cluster_sizes: out.labels.cluster_sizes(),
    });
    recs
}

pub fn write_records<W: Write>(mut w: W, recs: &[Record]) -> std::io::Result<()> {
    for r in recs {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// What a valid report contains, for callers that need the numbers.
#[derive(Debug, Clone)]
pub struct ParsedReport {
    pub config: SolverConfig,
    pub residuals: Vec<f64>,
    pub alphas: Vec<Vec<f64>>,
    pub timings: Timings,
    pub metrics: Option<Metrics>,
    pub converged: bool,
    pub cluster_sizes: Vec<usize>,
}

/// Parses a report and checks its structure.
pub fn validate_report(text: &str) -> Result<ParsedReport, String> {
    let mut recs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        recs.push(rec);
    }
    let (config, c, views) = match recs.first() {
        Some(Record::Header {
            schema,
            version,
            config,
            c,
            views,
            ..
        }) => {
            if schema != SCHEMA || *version != SCHEMA_VERSION {
                return Err(format!("unknown schema {schema} v{version}"));
            }
            (config.clone(), *c, *views)
        }
        _ => return Err("first record must be the header".into()),
    };
    let mut residuals = Vec::new();
    let mut alphas = Vec::new();
    let mut timings = None;
    let mut metrics = None;
    let mut summary = None;
    for (i, rec) in recs.iter().enumerate().skip(1) {
        if summary.is_some() {
            return Err("records after the summary".into());
        }
        match rec {
            Record::Header { .. } => return Err("more than one header".into()),
            Record::Iteration(it) => {
                if timings.is_some() || metrics.is_some() {
                    return Err("iteration record after timing or metrics".into());
                }
                if it.iteration != residuals.len() + 1 {
                    return Err(format!("iteration {} out of order at record {}", it.iteration, i + 1));
                }
                if it.alpha.len() != views {
                    return Err(format!("iteration {} has {} weights for {views} views", it.iteration, it.alpha.len()));
                }
                residuals.push(it.residual);
                alphas.push(it.alpha.clone());
            }
            Record::Timing(t) => {
                if timings.replace(*t).is_some() {
                    return Err("more than one timing record".into());
                }
            }
            Record::Metrics(m) => {
                if metrics.replace(m.clone()).is_some() {
                    return Err("more than one metrics record".into());
                }
                for v in [m.acc, m.nmi, m.purity] {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(format!("metric {v} outside [0, 1]"));
                    }
                }
            }
            Record::Summary {
                iterations,
                converged,
                cluster_sizes,
                ..
            } => {
                if *iterations != residuals.len() {
                    return Err(format!(
                        "summary claims {iterations} iterations, report has {}",
                        residuals.len()
                    ));
                }
                if cluster_sizes.len() != c {
                    return Err("cluster size list does not match c".into());
                }
                summary = Some((*converged, cluster_sizes.clone()));
            }
        }
    }
    let timings = timings.ok_or("missing timing record")?;
    let (converged, cluster_sizes) = summary.ok_or("missing summary record")?;
    Ok(ParsedReport {
        config,
        residuals,
        alphas,
        timings,
        metrics,
        converged,
        cluster_sizes,
    })
}

/// The report with the `timing` record removed, for run-to-run comparison.
pub fn without_timing(text: &str) -> String {
    text.lines()
        .filter(|l| !l.contains(r#""type":"timing""#))
        .collect::<Vec<_>>()
        .join("\n")
}
