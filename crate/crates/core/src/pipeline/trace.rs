use std::io::{self, Write};

use super::timing::Stamps;
use super::{Execution, TimeSource};
use crate::model::Phase;

/// Timing of one scan step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub field: usize,
    /// Global step counter over the whole scan.
    pub k: usize,
    pub phase: Phase,
    pub slit: Option<usize>,
    pub bytes_in: u64,
    pub stamps: Stamps,
    /// Items transferred but not yet computed when this step's compute began.
    pub queue_occupancy: usize,
    /// Delivery time of this step's output relative to the field start.
    pub latency_s: f64,
    pub deadline_met: bool,
}

impl StepRecord {
    pub fn t_transfer(&self) -> f64 {
        self.stamps.transfer.1 - self.stamps.transfer.0
    }

    pub fn t_decode(&self) -> f64 {
        self.stamps.decode.1 - self.stamps.decode.0
    }

    pub fn t_compute(&self) -> f64 {
        self.stamps.compute.1 - self.stamps.compute.0
    }
}

/// Per-field outcome. Latency runs from the field's first transfer to its
/// last delivered output.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSummary {
    pub field: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub latency_s: f64,
    pub budget_s: f64,
    pub deadline_met: bool,
    pub thermal_steps: usize,
    pub gemv_calls: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineTrace {
    pub time_source: TimeSource,
    pub execution: Execution,
    pub records: Vec<StepRecord>,
    pub fields: Vec<FieldSummary>,
}

pub const TRACE_HEADER: &str =
    "field,k,phase,slit,bytes_in,t_transfer_s,t_decode_s,t_compute_s,latency_s,deadline_met";

impl PipelineTrace {
    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.records {
            let slit = r.slit.map(|s| s.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{:e},{:e},{:e},{:e},{}",
                r.field,
                r.k,
                r.phase.name(),
                slit,
                r.bytes_in,
                r.t_transfer(),
                r.t_decode(),
                r.t_compute(),
                r.latency_s,
                r.deadline_met
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn report(&self) -> DeadlineReport {
        deadline_report(self.fields.iter().map(|f| (f.field, f.latency_s, f.budget_s)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldVerdict {
    pub field: usize,
    pub latency_s: f64,
    pub budget_s: f64,
    pub met: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeadlineReport {
    pub verdicts: Vec<FieldVerdict>,
    pub misses: usize,
    pub miss_rate: f64,
    pub worst_latency_s: f64,
}

/// Aggregates `(field, latency, budget)` triples; a deadline is met iff
/// `latency <= budget`.
pub fn deadline_report(fields: impl IntoIterator<Item = (usize, f64, f64)>) -> DeadlineReport {
    let verdicts: Vec<FieldVerdict> = fields
        .into_iter()
        .map(|(field, latency_s, budget_s)| FieldVerdict {
            field,
            latency_s,
            budget_s,
            met: latency_s <= budget_s,
        })
        .collect();
    let misses = verdicts.iter().filter(|v| !v.met).count();
    let miss_rate = if verdicts.is_empty() {
        0.0
    } else {
        misses as f64 / verdicts.len() as f64
    };
    let worst_latency_s = verdicts.iter().map(|v| v.latency_s).fold(0.0, f64::max);
    DeadlineReport {
        verdicts,
        misses,
        miss_rate,
        worst_latency_s,
    }
}
