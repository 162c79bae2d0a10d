//! CSV tables and JSON records written by the command-line tool.
//!
//! Every state and control in these files is one-based.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::CountTensor;
use crate::error::{Error, Result};
use crate::optimizer::{SearchResult, TraceRow};
use crate::simulator::Trajectory;

/// Per-period rows for each trajectory:
/// `policy,period,state,control,h_bits,missing_info_bits`.
pub fn write_trajectories<W: Write>(out: W, trajectories: &[&Trajectory]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["policy", "period", "state", "control", "h_bits", "missing_info_bits"])?;
    for t in trajectories {
        for r in &t.records {
            w.write_record([
                t.policy.clone(),
                r.period.to_string(),
                (r.state + 1).to_string(),
                (r.control + 1).to_string(),
                r.h_bits.to_string(),
                r.missing_info_bits.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `period,<label>...` with one row per period, starting at period 0.
pub fn write_curves<W: Write>(out: W, labels: &[String], curves: &[Vec<f64>]) -> Result<()> {
    if labels.len() != curves.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} curves",
            labels.len(),
            curves.len()
        )));
    }
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    if curves.iter().any(|c| c.len() != len) {
        return Err(Error::Shape("curves differ in length".into()));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header = vec!["period".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for k in 0..len {
        let mut row = vec![k.to_string()];
        row.extend(curves.iter().map(|c| c[k].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// CEM convergence trace: `iteration,best_objective,p1,...,pn`.
pub fn write_trace<W: Write>(out: W, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let width = trace.first().map_or(0, |t| t.p.len());
    let mut header = vec!["iteration".to_string(), "best_objective".to_string()];
    header.extend((1..=width).map(|n| format!("p{n}")));
    w.write_record(&header)?;
    for row in trace {
        let mut rec = vec![row.iteration.to_string(), row.best_objective.to_string()];
        rec.extend(row.p.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Optimizer outcome as written to `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerRecord {
    pub r: Vec<usize>,
    pub objective_mean: f64,
    pub objective_stderr: f64,
    pub iterations: usize,
}

impl From<&SearchResult> for OptimizerRecord {
    fn from(result: &SearchResult) -> Self {
        Self {
            r: result.r.clone(),
            objective_mean: result.objective.mean,
            objective_stderr: result.objective.stderr,
            iterations: result.iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountEntry {
    pub u: usize,
    pub i: usize,
    pub j: usize,
    pub n: u32,
}

/// Sparse count tensor: `{"states", "controls", "counts": [{u, i, j, n}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsDocument {
    pub states: usize,
    pub controls: usize,
    pub counts: Vec<CountEntry>,
}

impl CountsDocument {
    pub fn from_counts(counts: &CountTensor) -> Self {
        let (s, m) = (counts.num_states(), counts.num_controls());
        let mut entries = Vec::new();
        for u in 0..m {
            for i in 0..s {
                for (j, &n) in counts.row(u, i).iter().enumerate() {
                    if n > 0 {
                        entries.push(CountEntry {
                            u: u + 1,
                            i: i + 1,
                            j: j + 1,
                            n,
                        });
                    }
                }
            }
        }
        Self {
            states: s,
            controls: m,
            counts: entries,
        }
    }

    pub fn into_counts(self) -> Result<CountTensor> {
        let (s, m) = (self.states, self.controls);
        if s == 0 || m == 0 {
            return Err(Error::Document("counts need positive states and controls".into()));
        }
        let mut dense = vec![0u32; m * s * s];
        for (n, e) in self.counts.iter().enumerate() {
            let ok = (1..=m).contains(&e.u) && (1..=s).contains(&e.i) && (1..=s).contains(&e.j);
            if !ok {
                return Err(Error::Document(format!(
                    "counts[{n}] = (u={}, i={}, j={}) outside {s} states x {m} controls",
                    e.u, e.i, e.j
                )));
            }
            let cell = &mut dense[((e.u - 1) * s + e.i - 1) * s + e.j - 1];
            *cell = cell
                .checked_add(e.n)
                .ok_or_else(|| Error::Document(format!("counts[{n}] overflows")))?;
        }
        CountTensor::from_dense(s, m, dense)
    }
}

pub fn save_counts(path: &Path, counts: &CountTensor) -> Result<()> {
    write_json(path, &CountsDocument::from_counts(counts))
}

pub fn load_counts(path: &Path) -> Result<CountTensor> {
    let text = std::fs::read_to_string(path)?;
    let doc: CountsDocument = serde_json::from_str(&text).map_err(|e| {
        Error::Document(format!(
            "{}: line {} column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    doc.into_counts()
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}
