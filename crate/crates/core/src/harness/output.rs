//! CSV and JSON artifacts.
//!
//! Column orders are fixed: metrics files use [`METRIC_COLUMNS`] after `round`;
//! aggregate files interleave `mean_<col>,std_<col>`; trajectory files use
//! `round,agent,role,x_0..x_{d-1},y_0..y_{d-1}`.

use std::path::Path;

use serde::Serialize;

use super::{HarnessError, Result};
use crate::graph::AdversarySet;
use crate::protocol::{AgentState, MetricsRow, Trajectory};

pub const METRIC_COLUMNS: [&str; 7] = [
    "gap_x",
    "gap_y",
    "dist_x",
    "dist_y",
    "x_diameter",
    "y_diameter",
    "containment",
];

pub fn row_values(r: &MetricsRow) -> [f64; 7] {
    [r.gap_x, r.gap_y, r.dist_x, r.dist_y, r.x_diameter, r.y_diameter, r.containment]
}

/// Per-round mean and sample standard deviation across runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub round: usize,
    pub mean: [f64; 7],
    pub std: [f64; 7],
}

/// Aggregates equally long series; the standard deviation is zero for one run.
pub fn aggregate(series: &[&[MetricsRow]]) -> Vec<AggregateRow> {
    let Some(first) = series.first() else {
        return Vec::new();
    };
    let runs = series.len() as f64;
    (0..first.len())
        .map(|k| {
            let rows: Vec<[f64; 7]> = series.iter().map(|s| row_values(&s[k])).collect();
            let mut mean = [0.0; 7];
            let mut std = [0.0; 7];
            for c in 0..7 {
                mean[c] = rows.iter().map(|r| r[c]).sum::<f64>() / runs;
                if series.len() > 1 {
                    let ss: f64 = rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum();
                    std[c] = (ss / (runs - 1.0)).sqrt();
                }
            }
            AggregateRow {
                round: first[k].round,
                mean,
                std,
            }
        })
        .collect()
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(std::iter::once("round").chain(METRIC_COLUMNS))?;
    for r in rows {
        w.write_record(
            std::iter::once(r.round.to_string()).chain(row_values(r).iter().map(|v| v.to_string())),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["round".to_string()];
    for c in METRIC_COLUMNS {
        header.push(format!("mean_{c}"));
        header.push(format!("std_{c}"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.round.to_string()];
        for c in 0..7 {
            rec.push(r.mean[c].to_string());
            rec.push(r.std[c].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Every agent at every snapshot, Byzantine agents labeled `byzantine`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, adversaries: &AdversarySet) -> Result<()> {
    let d = traj.x_star.len();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["round".to_string(), "agent".into(), "role".into()];
    header.extend((0..d).map(|l| format!("x_{l}")));
    header.extend((0..d).map(|l| format!("y_{l}")));
    w.write_record(&header)?;
    for (k, states) in traj.states.iter().enumerate() {
        for (i, s) in states.iter().enumerate() {
            let role = if adversaries.contains(i) { "byzantine" } else { "regular" };
            let mut rec = vec![k.to_string(), i.to_string(), role.to_string()];
            rec.extend(s.x.iter().chain(&s.y).map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_trajectory_csv`]: `states[k][i]`.
pub fn read_trajectory_csv(path: &Path) -> Result<Vec<Vec<AgentState>>> {
    let mut r = csv::Reader::from_path(path)?;
    let cols = r.headers()?.len();
    if cols < 5 || (cols - 3) % 2 != 0 {
        return Err(HarnessError::Trajectory(format!("{}: unexpected column count {cols}", path.display())));
    }
    let d = (cols - 3) / 2;
    let mut states: Vec<Vec<AgentState>> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| HarnessError::Trajectory(format!("{}: row {}: {m}", path.display(), line + 2));
        let k: usize = rec[0].parse().map_err(|e| bad(format!("round: {e}")))?;
        let i: usize = rec[1].parse().map_err(|e| bad(format!("agent: {e}")))?;
        let vals = (3..cols)
            .map(|c| rec[c].parse::<f64>().map_err(|e| bad(format!("column {c}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if k == states.len() {
            states.push(Vec::new());
        }
        if k + 1 != states.len() || i != states[k].len() {
            return Err(bad("rows must be ordered by round, then agent".into()));
        }
        states[k].push(AgentState::new(vals[..d].to_vec(), vals[d..].to_vec()));
    }
    if states.is_empty() || states.iter().any(|s| s.len() != states[0].len()) {
        return Err(HarnessError::Trajectory(format!("{}: ragged or empty trajectory", path.display())));
    }
    Ok(states)
}
