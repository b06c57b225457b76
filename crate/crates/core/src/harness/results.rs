use super::{ExperimentError, Protocol};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const RESULTS_CSV: &str = "results.csv";
pub const TIMINGS_CSV: &str = "timings.csv";
pub const SUMMARY_JSON: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub protocol: Protocol,
    pub condition: String,
    pub seed: u64,
    /// Mean success level of the best checkpoint.
    pub score: f64,
    /// Training step of the checkpoint behind `score`.
    pub checkpoint_used: Option<usize>,
    pub checkpoint_scores: Vec<f64>,
    pub diverged: bool,
    /// Kept out of the results CSV so reruns compare byte for byte.
    pub wallclock_s: f64,
}

impl ResultRow {
    pub fn diverged(protocol: Protocol, condition: &str, seed: u64, wallclock_s: f64) -> Self {
        Self {
            protocol,
            condition: condition.into(),
            seed,
            score: 0.0,
            checkpoint_used: None,
            checkpoint_scores: Vec::new(),
            diverged: true,
            wallclock_s,
        }
    }
}

/// Flat CSV layout of a [`ResultRow`]; checkpoint scores are `;`-joined.
#[derive(Serialize, Deserialize)]
struct CsvRow {
    protocol: Protocol,
    condition: String,
    seed: u64,
    score: f64,
    checkpoint_used: Option<usize>,
    checkpoint_scores: String,
    diverged: bool,
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        let scores: Vec<String> = r.checkpoint_scores.iter().map(|v| v.to_string()).collect();
        w.serialize(CsvRow {
            protocol: r.protocol,
            condition: r.condition.clone(),
            seed: r.seed,
            score: r.score,
            checkpoint_used: r.checkpoint_used,
            checkpoint_scores: scores.join(";"),
            diverged: r.diverged,
        })
        .expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 csv")
}

fn timings_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from("protocol,condition,seed,wallclock_s\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.3}", r.protocol, r.condition, r.seed, r.wallclock_s);
    }
    s
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>, ExperimentError> {
    let bad = |e: String| ExperimentError::Results(e);
    let mut rd = csv::Reader::from_reader(std::fs::File::open(path)?);
    rd.deserialize::<CsvRow>()
        .map(|rec| {
            let r = rec.map_err(|e| bad(e.to_string()))?;
            let checkpoint_scores = if r.checkpoint_scores.is_empty() {
                Vec::new()
            } else {
                r.checkpoint_scores
                    .split(';')
                    .map(|v| v.parse().map_err(|_| bad(format!("bad checkpoint score {v:?}"))))
                    .collect::<Result<_, _>>()?
            };
            Ok(ResultRow {
                protocol: r.protocol,
                condition: r.condition,
                seed: r.seed,
                score: r.score,
                checkpoint_used: r.checkpoint_used,
                checkpoint_scores,
                diverged: r.diverged,
                wallclock_s: 0.0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub protocol: Protocol,
    pub condition: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over seeds; zero for a single seed.
    pub std: f64,
    pub scores: Vec<f64>,
    pub diverged: usize,
}

/// Per-condition mean and std over seeds, in first-appearance order.
pub fn summarize_rows(rows: &[ResultRow]) -> Vec<ConditionSummary> {
    let mut out: Vec<ConditionSummary> = Vec::new();
    for r in rows {
        let i = match out
            .iter()
            .position(|s| s.protocol == r.protocol && s.condition == r.condition)
        {
            Some(i) => i,
            None => {
                out.push(ConditionSummary {
                    protocol: r.protocol,
                    condition: r.condition.clone(),
                    n: 0,
                    mean: 0.0,
                    std: 0.0,
                    scores: Vec::new(),
                    diverged: 0,
                });
                out.len() - 1
            }
        };
        out[i].scores.push(r.score);
        out[i].diverged += usize::from(r.diverged);
    }
    for s in &mut out {
        s.n = s.scores.len();
        s.mean = s.scores.iter().sum::<f64>() / s.n as f64;
        s.std = if s.n > 1 {
            let ss: f64 = s.scores.iter().map(|v| (v - s.mean).powi(2)).sum();
            (ss / (s.n - 1) as f64).sqrt()
        } else {
            0.0
        };
    }
    out
}

/// Writes the results CSV, a timings CSV and the JSON summary into `dir`.
pub fn emit_results(rows: &[ResultRow], dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(RESULTS_CSV), to_csv(rows))?;
    std::fs::write(dir.join(TIMINGS_CSV), timings_csv(rows))?;
    let summary = serde_json::to_string_pretty(&summarize_rows(rows))?;
    std::fs::write(dir.join(SUMMARY_JSON), summary + "\n")?;
    Ok(())
}

pub fn render_report(rows: &[ResultRow]) -> String {
    let summary = summarize_rows(rows);
    let width = summary.iter().map(|s| s.condition.len()).max().unwrap_or(0).max(9);
    let mut s = String::new();
    let mut last = None;
    for c in &summary {
        if last != Some(c.protocol) {
            let _ = writeln!(s, "{}", c.protocol);
            last = Some(c.protocol);
        }
        let _ = write!(s, "  {:<width$}  {:.3} ± {:.3}  (n={})", c.condition, c.mean, c.std, c.n);
        if c.diverged > 0 {
            let _ = write!(s, "  diverged: {}", c.diverged);
        }
        s.push('\n');
    }
    s
}
