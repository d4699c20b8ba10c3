//! Per-run metrics and their CSV form.

use std::io;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: String,
    pub scheme: String,
    pub power_mode: String,
    pub seed: u64,
    pub tasks: usize,
    pub tasks_submitted: usize,
    pub tasks_completed: usize,
    pub tasks_failed: usize,
    pub tasks_in_system: usize,
    pub atct_s: f64,
    pub tx_energy_j: f64,
    pub control_packets: u64,
    pub data_packets: u64,
    pub migrations: u64,
    pub reallocations: u64,
    pub mean_completion_s: f64,
    pub p50_completion_s: f64,
    pub p95_completion_s: f64,
    /// Empty unless the run could not be carried out.
    pub error: String,
}

impl MetricsRecord {
    /// Row for a run that failed before producing results.
    pub fn failed_run(scenario: &str, scheme: &str, power_mode: &str, seed: u64, tasks: usize, error: String) -> Self {
        Self {
            scenario: scenario.to_string(),
            scheme: scheme.to_string(),
            power_mode: power_mode.to_string(),
            seed,
            tasks,
            tasks_submitted: 0,
            tasks_completed: 0,
            tasks_failed: 0,
            tasks_in_system: 0,
            atct_s: 0.0,
            tx_energy_j: 0.0,
            control_packets: 0,
            data_packets: 0,
            migrations: 0,
            reallocations: 0,
            mean_completion_s: 0.0,
            p50_completion_s: 0.0,
            p95_completion_s: 0.0,
            error,
        }
    }

    /// Value of a plottable metric by name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "atct" => self.atct_s,
            "tx_energy" => self.tx_energy_j,
            "control_packets" => self.control_packets as f64,
            "data_packets" => self.data_packets as f64,
            "migrations" => self.migrations as f64,
            "reallocations" => self.reallocations as f64,
            "completed" => self.tasks_completed as f64,
            "mean_completion" => self.mean_completion_s,
            _ => return None,
        })
    }
}

pub const METRIC_NAMES: [&str; 8] = [
    "atct",
    "tx_energy",
    "control_packets",
    "data_packets",
    "migrations",
    "reallocations",
    "completed",
    "mean_completion",
];

/// Accumulative task completion time: the plain sum of completion times.
pub fn atct(completion_times: &[f64]) -> f64 {
    completion_times.iter().sum()
}

/// Nearest-rank percentile of `values`; 0 for an empty slice.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

pub fn write_csv<W: io::Write>(records: &[MetricsRecord], w: W) -> Result<(), csv::Error> {
    write_csv_rows(records, w)
}

/// CSV with a header row taken from the field names of `T`.
pub fn write_csv_rows<T: Serialize, W: io::Write>(rows: &[T], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(r: R) -> Result<Vec<MetricsRecord>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}
