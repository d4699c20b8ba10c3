//! Grids of runs, their aggregation and plot series.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::config::{PowerMode, ScenarioConfig, Scheme};
use crate::metrics::MetricsRecord;
use crate::world::{run_scenario, RunOutput};

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub base: ScenarioConfig,
    pub tasks: Vec<usize>,
    pub seeds: Vec<u64>,
    pub schemes: Vec<Scheme>,
    pub power_mode: PowerMode,
}

impl SweepPlan {
    /// Configurations of the cartesian product, in row order.
    pub fn configs(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            for &seed in &self.seeds {
                for &tasks in &self.tasks {
                    out.push(self.base.clone().with_run(scheme, self.power_mode, seed, tasks));
                }
            }
        }
        out
    }
}

/// Row order of a sweep: scenario, scheme, seed, then task count.
pub fn sort_rows(rows: &mut [MetricsRecord]) {
    rows.sort_by(|a, b| {
        (&a.scenario, &a.scheme, &a.power_mode, a.seed, a.tasks)
            .cmp(&(&b.scenario, &b.scheme, &b.power_mode, b.seed, b.tasks))
    });
}

fn record_for(cfg: &ScenarioConfig, res: &Result<RunOutput, String>) -> MetricsRecord {
    match res {
        Ok(out) => out.metrics.clone(),
        Err(e) => MetricsRecord::failed_run(
            &cfg.name,
            cfg.scheme.label(),
            cfg.power_mode.label(),
            cfg.seed,
            cfg.workload.tasks,
            e.clone(),
        ),
    }
}

/// Runs every configuration on up to `threads` workers. `inspect` sees each
/// successful run before its trace is dropped. A failed run becomes a row
/// with `error` set. Rows come back sorted with [`sort_rows`].
pub fn run_configs<F>(configs: &[ScenarioConfig], threads: usize, inspect: F) -> Vec<MetricsRecord>
where
    F: Fn(&ScenarioConfig, &RunOutput) + Sync,
{
    let next = Mutex::new(0usize);
    let rows = Mutex::new(Vec::with_capacity(configs.len()));
    thread::scope(|s| {
        for _ in 0..threads.max(1) {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("sweep index lock");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(cfg) = configs.get(i) else { break };
                let res = run_scenario(cfg).map_err(|e| e.to_string());
                if let Ok(out) = &res {
                    inspect(cfg, out);
                }
                let row = record_for(cfg, &res);
                rows.lock().expect("sweep rows lock").push(row);
            });
        }
    });
    let mut rows = rows.into_inner().expect("sweep rows lock");
    sort_rows(&mut rows);
    rows
}

pub fn run_sweep<F>(plan: &SweepPlan, threads: usize, inspect: F) -> Vec<MetricsRecord>
where
    F: Fn(&ScenarioConfig, &RunOutput) + Sync,
{
    run_configs(&plan.configs(), threads, inspect)
}

pub fn default_threads() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// Mean and sample standard deviation; sd is 0 for fewer than two values.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub tasks: usize,
    pub scheme: String,
    pub power_mode: String,
    pub runs: usize,
    pub errors: usize,
    pub atct_mean: f64,
    pub atct_sd: f64,
    pub tx_energy_mean: f64,
    pub tx_energy_sd: f64,
    pub control_packets_mean: f64,
    pub control_packets_sd: f64,
}

type GroupKey = (String, usize, String, String);

fn groups(rows: &[MetricsRecord]) -> BTreeMap<GroupKey, Vec<&MetricsRecord>> {
    let mut g: BTreeMap<GroupKey, Vec<&MetricsRecord>> = BTreeMap::new();
    for r in rows {
        g.entry((r.scenario.clone(), r.tasks, r.scheme.clone(), r.power_mode.clone()))
            .or_default()
            .push(r);
    }
    g
}

/// Per (scenario, tasks, scheme, power mode) mean and sd over error-free rows.
pub fn summarize(rows: &[MetricsRecord]) -> Vec<SummaryRow> {
    groups(rows)
        .into_iter()
        .map(|((scenario, tasks, scheme, power_mode), rs)| {
            let ok: Vec<_> = rs.iter().filter(|r| r.error.is_empty()).collect();
            let col = |f: fn(&MetricsRecord) -> f64| {
                mean_sd(&ok.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            let (atct_mean, atct_sd) = col(|r| r.atct_s);
            let (tx_energy_mean, tx_energy_sd) = col(|r| r.tx_energy_j);
            let (control_packets_mean, control_packets_sd) = col(|r| r.control_packets as f64);
            SummaryRow {
                scenario,
                tasks,
                scheme,
                power_mode,
                runs: ok.len(),
                errors: rs.len() - ok.len(),
                atct_mean,
                atct_sd,
                tx_energy_mean,
                tx_energy_sd,
                control_packets_mean,
                control_packets_sd,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub scenario: String,
    pub tasks: usize,
    pub seed: u64,
    pub baseline: String,
    pub metric: String,
    pub proposed: f64,
    pub baseline_value: f64,
    /// `(baseline - proposed) / baseline`; `None` when the baseline is 0.
    pub improvement: Option<f64>,
}

/// Relative improvement of the proposed scheme over every baseline, per
/// paired seed. Only rows with the same scenario, task count, power mode
/// and seed are paired; rows with errors are skipped.
pub fn paired_improvements(rows: &[MetricsRecord], metric: &str) -> Vec<ImprovementRow> {
    let key = |r: &MetricsRecord| (r.scenario.clone(), r.tasks, r.power_mode.clone(), r.seed);
    let proposed: BTreeMap<_, &MetricsRecord> = rows
        .iter()
        .filter(|r| r.scheme == Scheme::Proposed.label() && r.error.is_empty())
        .map(|r| (key(r), r))
        .collect();
    let mut out = Vec::new();
    for b in rows
        .iter()
        .filter(|r| r.scheme != Scheme::Proposed.label() && r.error.is_empty())
    {
        let Some(p) = proposed.get(&key(b)) else { continue };
        let (Some(pv), Some(bv)) = (p.metric(metric), b.metric(metric)) else { continue };
        out.push(ImprovementRow {
            scenario: b.scenario.clone(),
            tasks: b.tasks,
            seed: b.seed,
            baseline: b.scheme.clone(),
            metric: metric.to_string(),
            proposed: pv,
            baseline_value: bv,
            improvement: (bv != 0.0).then(|| (bv - pv) / bv),
        });
    }
    out.sort_by(|a, b| {
        (&a.scenario, a.tasks, &a.baseline, a.seed).cmp(&(&b.scenario, b.tasks, &b.baseline, b.seed))
    });
    out
}

/// One point of a plot series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub series: String,
    pub x: String,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

/// Plot series for `metric`: one series per scheme (and power mode when it
/// is not the default), prefixed by the scenario when several are present.
/// The x value is the task count. Returns `None` for an unknown metric.
pub fn series(rows: &[MetricsRecord], metric: &str) -> Option<Vec<SeriesPoint>> {
    crate::metrics::METRIC_NAMES.contains(&metric).then_some(())?;
    let scenarios: std::collections::BTreeSet<&str> =
        rows.iter().map(|r| r.scenario.as_str()).collect();
    let mut pts = Vec::new();
    for ((scenario, tasks, scheme, mode), rs) in groups(rows) {
        let vals: Vec<f64> = rs
            .iter()
            .filter(|r| r.error.is_empty())
            .filter_map(|r| r.metric(metric))
            .collect();
        let mut name = scheme;
        if mode != PowerMode::Multi.label() {
            name = format!("{name}-{mode}");
        }
        if scenarios.len() > 1 {
            name = format!("{scenario}/{name}");
        }
        let (mean, sd) = mean_sd(&vals);
        pts.push(SeriesPoint {
            series: name,
            x: tasks.to_string(),
            mean,
            sd,
            n: vals.len(),
        });
    }
    pts.sort_by(|a, b| {
        let xa: usize = a.x.parse().unwrap_or(0);
        let xb: usize = b.x.parse().unwrap_or(0);
        (&a.series, xa).cmp(&(&b.series, xb))
    });
    Some(pts)
}

/// Tab-separated series file with a header line.
pub fn write_series<W: std::io::Write>(points: &[SeriesPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "series\tx\tmean\tsd\tn")?;
    for p in points {
        writeln!(w, "{}\t{}\t{}\t{}\t{}", p.series, p.x, p.mean, p.sd, p.n)?;
    }
    Ok(())
}
