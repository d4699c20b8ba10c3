use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use adhoc_cloud::config::{PowerMode, ScenarioConfig, Scheme, PRESETS};
use adhoc_cloud::metrics::{read_csv, write_csv, write_csv_rows, METRIC_NAMES};
use adhoc_cloud::sweep::{self, SweepPlan};
use adhoc_cloud::world::{run_scenario, RunError};

#[derive(Parser)]
#[command(name = "macloud", version, about = "Mobile ad hoc cloud simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration.
    Run(RunArgs),
    /// Run every combination of task count, seed and scheme.
    Sweep(SweepArgs),
    /// Turn a metrics.csv into a plot series.
    Report(ReportArgs),
}

#[derive(Args)]
struct Source {
    /// Scenario configuration (JSON). Missing fields take the s1 defaults.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario instead of a file: s1, s2, s3 or s4.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, value_parser = parse_power_mode)]
    power_mode: Option<PowerMode>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    src: Source,
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the workload's task count.
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    src: Source,
    /// Comma-separated task counts.
    #[arg(long, value_delimiter = ',', required = true)]
    tasks: Vec<usize>,
    /// `a..b` (inclusive) or a comma-separated list.
    #[arg(long, value_parser = parse_seeds)]
    seeds: SeedList,
    /// `all` or a comma-separated list of schemes.
    #[arg(long, default_value = "all", value_parser = parse_schemes)]
    schemes: SchemeList,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write one trace file per run under `<out>/traces`.
    #[arg(long)]
    traces: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding metrics.csv; the series is written next to it.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    metric: String,
}

#[derive(Clone)]
struct SeedList(Vec<u64>);

#[derive(Clone)]
struct SchemeList(Vec<Scheme>);

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::parse(s).ok_or_else(|| format!("unknown scheme `{s}` (expected proposed, hta or minhop)"))
}

fn parse_power_mode(s: &str) -> Result<PowerMode, String> {
    PowerMode::parse(s).ok_or_else(|| format!("unknown power mode `{s}` (expected multi or max-only)"))
}

fn parse_schemes(s: &str) -> Result<SchemeList, String> {
    if s == "all" {
        return Ok(SchemeList(Scheme::ALL.to_vec()));
    }
    s.split(',').map(parse_scheme).collect::<Result<_, _>>().map(SchemeList)
}

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let bad = |_| format!("bad seed list `{s}`");
    let seeds: Vec<u64> = match s.split_once("..") {
        Some((a, b)) => {
            let (a, b): (u64, u64) = (a.parse().map_err(bad)?, b.parse().map_err(bad)?);
            if a > b {
                return Err(format!("empty seed range `{s}`"));
            }
            (a..=b).collect()
        }
        None => s.split(',').map(|x| x.parse().map_err(bad)).collect::<Result<_, _>>()?,
    };
    Ok(SeedList(seeds))
}

/// Failure classes that map to distinct exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn config_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn runtime_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn load(src: &Source) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&src.config, &src.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(config_err)?;
            ScenarioConfig::from_json(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(config_err)?
        }
        (None, Some(name)) => ScenarioConfig::preset(name).ok_or_else(|| {
            config_err(anyhow!("unknown preset `{name}` (expected one of {})", PRESETS.join(", ")))
        })?,
        (None, None) => return Err(config_err(anyhow!("either --config or --preset is required"))),
    };
    if let Some(m) = src.power_mode {
        cfg.power_mode = m;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(runtime_err)
}

fn write_file<F>(path: &Path, f: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
{
    let res = (|| -> anyhow::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    })();
    res.with_context(|| format!("writing {}", path.display()))
        .map_err(runtime_err)
}

fn cmd_run(a: &RunArgs) -> Result<(), Failure> {
    let mut cfg = load(&a.src)?;
    if let Some(s) = a.scheme {
        cfg.scheme = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.tasks {
        cfg.workload.tasks = t;
    }
    cfg.validate().map_err(config_err)?;
    let out = run_scenario(&cfg).map_err(|e| match e {
        RunError::Config(c) => config_err(c),
        other => runtime_err(other),
    })?;
    create_dir(&a.out)?;
    write_file(&a.out.join("metrics.csv"), |w| {
        Ok(write_csv(std::slice::from_ref(&out.metrics), w)?)
    })?;
    write_file(&a.out.join("trace.log"), |w| Ok(out.trace.write_to(w)?))?;
    let m = &out.metrics;
    println!(
        "{} {} seed={} tasks={}: completed {}/{} atct={:.3}s tx_energy={:.6}J control={} data={}",
        m.scenario,
        m.scheme,
        m.seed,
        m.tasks,
        m.tasks_completed,
        m.tasks_submitted,
        m.atct_s,
        m.tx_energy_j,
        m.control_packets,
        m.data_packets
    );
    Ok(())
}

fn trace_name(cfg: &ScenarioConfig) -> String {
    format!(
        "{}_{}_{}_t{}_s{}.log",
        cfg.name,
        cfg.scheme.label(),
        cfg.power_mode.label(),
        cfg.workload.tasks,
        cfg.seed
    )
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), Failure> {
    let base = load(&a.src)?;
    if a.tasks.is_empty() || a.seeds.0.is_empty() || a.schemes.0.is_empty() {
        return Err(config_err(anyhow!("task, seed and scheme lists must not be empty")));
    }
    let plan = SweepPlan {
        power_mode: base.power_mode,
        base,
        tasks: a.tasks.clone(),
        seeds: a.seeds.0.clone(),
        schemes: a.schemes.0.clone(),
    };
    for cfg in plan.configs() {
        cfg.validate().map_err(config_err)?;
    }
    create_dir(&a.out)?;
    let trace_dir = a.out.join("traces");
    if a.traces {
        create_dir(&trace_dir)?;
    }
    let threads = a.threads.unwrap_or_else(sweep::default_threads);
    let rows = sweep::run_sweep(&plan, threads, |cfg, out| {
        if !a.traces {
            return;
        }
        let path = trace_dir.join(trace_name(cfg));
        if let Err(Failure::Runtime(e) | Failure::Config(e)) =
            write_file(&path, |w| Ok(out.trace.write_to(w)?))
        {
            eprintln!("warning: {e:#}");
        }
    });
    write_file(&a.out.join("metrics.csv"), |w| Ok(write_csv(&rows, w)?))?;
    let summary = sweep::summarize(&rows);
    write_file(&a.out.join("summary.csv"), |w| Ok(write_csv_rows(&summary, w)?))?;
    let improvements = sweep::paired_improvements(&rows, "atct");
    write_file(&a.out.join("improvement.csv"), |w| Ok(write_csv_rows(&improvements, w)?))?;

    let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
    for s in &summary {
        println!(
            "{} tasks={} {} ({}): atct {:.3} ± {:.3} s over {} runs",
            s.scenario, s.tasks, s.scheme, s.power_mode, s.atct_mean, s.atct_sd, s.runs
        );
    }
    if failed > 0 {
        eprintln!("warning: {failed} of {} runs failed; see the error column", rows.len());
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<(), Failure> {
    if !METRIC_NAMES.contains(&a.metric.as_str()) {
        return Err(config_err(anyhow!(
            "unknown metric `{}`; valid metrics: {}",
            a.metric,
            METRIC_NAMES.join(", ")
        )));
    }
    let path = a.input.join("metrics.csv");
    let file = File::open(&path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(config_err)?;
    let rows = read_csv(file)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_err)?;
    let points = sweep::series(&rows, &a.metric).expect("metric name checked above");
    if rows.is_empty() {
        eprintln!("warning: {} has no rows; writing an empty series", path.display());
    }
    let out = a.input.join(format!("series_{}.tsv", a.metric));
    write_file(&out, |w| Ok(sweep::write_series(&points, w)?))?;
    for p in &points {
        println!("{}\t{}\t{:.6} ± {:.6} (n={})", p.series, p.x, p.mean, p.sd, p.n);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match &cli.cmd {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
