//! Per-cell results, the ARMSE metric and the CSV format.

use cdukf::{FilterVariant, Vector};
use std::io::{Read, Write};
use thiserror::Error;

/// Header of the results table.
pub const CSV_HEADER: [&str; 6] = ["variant", "delta", "armse_p", "failed_runs", "failure_cause", "wall_time_s"];

/// State components holding the position (ε, η, ζ).
pub const POSITION_INDICES: [usize; 3] = [0, 2, 4];

/// Outcome of the Monte-Carlo runs for one (variant, δ) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub variant: FilterVariant,
    pub delta: f64,
    /// `None` when at least one run failed.
    pub armse_p: Option<f64>,
    pub failed_runs: usize,
    /// Cause of the first failed run.
    pub failure_cause: Option<String>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        self.armse_p.is_none()
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed results file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sum over steps of the squared position error of one run.
pub fn position_sse(truth: &[Vector], estimates: &[Vector]) -> Result<f64, ReportError> {
    if truth.len() != estimates.len() {
        return Err(ReportError::ShapeMismatch(format!(
            "{} truth states vs {} estimates",
            truth.len(),
            estimates.len()
        )));
    }
    let mut sse = 0.0;
    for (x, xh) in truth.iter().zip(estimates) {
        if x.len() <= 4 || xh.len() != x.len() {
            return Err(ReportError::ShapeMismatch(format!(
                "state of length {} vs estimate of length {}",
                x.len(),
                xh.len()
            )));
        }
        sse += POSITION_INDICES.iter().map(|&i| (xh[i] - x[i]).powi(2)).sum::<f64>();
    }
    Ok(sse)
}

/// Accumulated RMSE in position, pooled over all runs and steps.
/// `truths[m][k]` and `estimates[m][k]` are the states of run `m` at step `k`.
pub fn armse_position(truths: &[Vec<Vector>], estimates: &[Vec<Vector>]) -> Result<f64, ReportError> {
    if truths.len() != estimates.len() || truths.is_empty() {
        return Err(ReportError::ShapeMismatch(format!(
            "{} truth runs vs {} estimated runs",
            truths.len(),
            estimates.len()
        )));
    }
    let steps = truths[0].len();
    if steps == 0 {
        return Err(ReportError::ShapeMismatch("runs have no steps".into()));
    }
    let mut total = 0.0;
    for (t, e) in truths.iter().zip(estimates) {
        if t.len() != steps {
            return Err(ReportError::ShapeMismatch("runs differ in length".into()));
        }
        total += position_sse(t, e)?;
    }
    Ok((total / (truths.len() * steps) as f64).sqrt())
}

/// Sorts by variant, then δ descending.
pub fn sort_reports(reports: &mut [RunReport]) {
    reports.sort_by(|a, b| {
        a.variant
            .index()
            .cmp(&b.variant.index())
            .then(b.delta.total_cmp(&a.delta))
    });
}

/// Writes the reports as CSV in canonical row order. Floats use the shortest
/// representation that parses back to the same value.
pub fn emit_csv<W: Write>(reports: &[RunReport], out: W) -> Result<(), ReportError> {
    let mut rows = reports.to_vec();
    sort_reports(&mut rows);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &rows {
        w.write_record([
            r.variant.label(),
            format!("{:e}", r.delta),
            r.armse_p.map(|a| a.to_string()).unwrap_or_default(),
            r.failed_runs.to_string(),
            r.failure_cause.clone().unwrap_or_default(),
            r.wall_time_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<RunReport>, ReportError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(ReportError::Malformed(format!("unexpected header {header:?}")));
    }
    let num = |s: &str, what: &str| -> Result<f64, ReportError> {
        s.parse()
            .map_err(|_| ReportError::Malformed(format!("bad {what} {s:?}")))
    };
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let variant = FilterVariant::from_label(&rec[0])
            .ok_or_else(|| ReportError::Malformed(format!("unknown variant {:?}", &rec[0])))?;
        let armse_p = match &rec[2] {
            "" => None,
            s => Some(num(s, "armse_p")?),
        };
        let failed_runs = rec[3]
            .parse()
            .map_err(|_| ReportError::Malformed(format!("bad failed_runs {:?}", &rec[3])))?;
        let failure_cause = match &rec[4] {
            "" => None,
            s => Some(s.to_string()),
        };
        out.push(RunReport {
            variant,
            delta: num(&rec[1], "delta")?,
            armse_p,
            failed_runs,
            failure_cause,
            wall_time_s: num(&rec[5], "wall_time_s")?,
        });
    }
    Ok(out)
}
