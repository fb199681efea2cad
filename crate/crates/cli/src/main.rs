//! `ael` command-line entry point.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use ael_core::canonical::{format_float, to_canonical_pretty};
use ael_core::harness::{
    run_ablation, run_baselines, run_seeds, synth_preset, AblationTable, Aggregate, HarnessError, RunConfig,
    RunResult, SYNTH_PRESETS,
};
use ael_core::market::{apply_costs, compute_metrics, synth_generate, write_csv, MetricsReport};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "ael", version, about = "Evolving-agent portfolio experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seed list, e.g. 42,123,456.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Proportional transaction cost in basis points.
    #[arg(long)]
    cost_bp: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    output: PathBuf,
    /// Completion backend: stub or http.
    #[arg(long)]
    backend: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train, select a checkpoint on validation and evaluate frozen on test.
    Run(Common),
    /// Base configuration plus the one-component variants.
    Ablate(Common),
    /// Deterministic reference allocators on the test split.
    Baselines(Common),
    /// Write a synthetic price CSV.
    SynthData {
        #[arg(long, default_value = "standard")]
        preset: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Recompute test metrics from a result file at a given cost.
    Metrics {
        /// A `result_<seed>.json` file.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        cost_bp: f64,
    },
    /// Export Sharpe bar/whisker series as CSV from ablation or aggregate files.
    PlotData {
        /// `ablation.json` or one or more `aggregate.json` files.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e.exit_code() {
            2 => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn load_config(common: &Common) -> Result<(RunConfig, Vec<u64>), CliError> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            toml::from_str::<RunConfig>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(c) = common.cost_bp {
        cfg.cost_bp = c;
    }
    if let Some(b) = &common.backend {
        cfg.backend = b.clone();
    }
    let seeds = match (&common.seeds, common.seed) {
        (Some(s), _) => s.clone(),
        (None, Some(s)) => vec![s],
        (None, None) => vec![cfg.seed],
    };
    if seeds.is_empty() {
        return Err(CliError::Config("empty seed list".into()));
    }
    cfg.seed = seeds[0];
    cfg.validate()?;
    Ok((cfg, seeds))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    seeds: &'a [u64],
    data_hashes: Vec<String>,
    wall_clock_seconds: f64,
}

fn write_manifest(
    out: &Path,
    command: &str,
    cfg: &RunConfig,
    seeds: &[u64],
    data_hashes: Vec<String>,
    started: Instant,
) -> Result<(), CliError> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        seeds,
        data_hashes,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    write(&out.join("manifest.json"), &to_canonical_pretty(&m))
}

fn write_results(out: &Path, results: &[RunResult]) -> Result<(), CliError> {
    for r in results {
        write(&out.join(format!("result_{}.json", r.config.seed)), &r.canonical_json())?;
    }
    Ok(())
}

fn cmd_run(common: &Common) -> Result<(), CliError> {
    let started = Instant::now();
    let (cfg, seeds) = load_config(common)?;
    let (results, agg) = run_seeds(&cfg, &seeds)?;
    let out = &common.output;
    write_results(out, &results)?;
    write(&out.join("aggregate.json"), &to_canonical_pretty(&agg))?;
    write_manifest(out, "run", &cfg, &seeds, results.iter().map(|r| r.data_hash.clone()).collect(), started)?;
    for r in &results {
        println!(
            "seed {}: sharpe {} return {}% (window {})",
            r.config.seed,
            r.test.metrics.sharpe.map_or("n/a".into(), |s| format!("{s:.3}")),
            format!("{:.3}", r.test.metrics.return_pct),
            r.selected_window
        );
    }
    print_summary(&agg);
    Ok(())
}

fn print_summary(agg: &Aggregate) {
    if let Some(m) = agg.metrics.get("sharpe") {
        if let (Some(mean), Some(std)) = (m.mean, m.std) {
            let note = if agg.single_seed { " (single seed)" } else { "" };
            println!("sharpe {mean:.3} ± {std:.3} over {} seeds{note}", agg.seeds.len());
        }
    }
}

fn cmd_ablate(common: &Common) -> Result<(), CliError> {
    let started = Instant::now();
    let (cfg, seeds) = load_config(common)?;
    let (table, results) = run_ablation(&cfg, &seeds)?;
    let out = &common.output;
    // base row results mirror a standalone `run`
    write_results(out, &results[0])?;
    write(&out.join("ablation.json"), &to_canonical_pretty(&table))?;
    write(&out.join("ablation.csv"), &table.to_csv()?)?;
    write_manifest(out, "ablate", &cfg, &seeds, results[0].iter().map(|r| r.data_hash.clone()).collect(), started)?;
    for r in &table.rows {
        println!(
            "{:28} sharpe {:>8} delta {:>8}",
            r.configuration,
            r.sharpe.map_or("n/a".into(), |s| format!("{s:.3}")),
            r.delta_sharpe.map_or("n/a".into(), |s| format!("{s:+.3}"))
        );
    }
    Ok(())
}

fn metrics_header() -> Vec<&'static str> {
    let mut h = vec!["name"];
    h.extend(MetricsReport::NAMES);
    h
}

fn metrics_cells(m: &MetricsReport) -> Vec<String> {
    MetricsReport::NAMES
        .iter()
        .map(|n| m.get(n).map(format_float).unwrap_or_default())
        .collect()
}

fn cmd_baselines(common: &Common) -> Result<(), CliError> {
    let started = Instant::now();
    let (cfg, seeds) = load_config(common)?;
    let out = &common.output;
    let mut all = Vec::new();
    let mut hashes = Vec::new();
    for &seed in &seeds {
        let c = RunConfig { seed, ..cfg.clone() };
        hashes.push(ael_core::harness::series_hash(&ael_core::harness::load_series(&c)?));
        all.push((seed, run_baselines(&c)?));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["seed"];
    header.extend(metrics_header());
    w.write_record(&header).map_err(|e| CliError::Runtime(e.to_string()))?;
    for (seed, rows) in &all {
        for r in rows {
            let mut rec = vec![seed.to_string(), r.name.clone()];
            rec.extend(metrics_cells(&r.metrics));
            w.write_record(&rec).map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("seed {seed} {:5} sharpe {}", r.name, r.metrics.sharpe.map_or("n/a".into(), |s| format!("{s:.3}")));
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    write(&out.join("baselines.csv"), &String::from_utf8_lossy(&bytes))?;
    write(&out.join("baselines.json"), &to_canonical_pretty(&all))?;
    write_manifest(out, "baselines", &cfg, &seeds, hashes, started)
}

fn cmd_synth(preset: &str, seed: u64, output: &Path) -> Result<(), CliError> {
    let c = synth_preset(preset)
        .ok_or_else(|| CliError::Config(format!("unknown preset `{preset}`, expected one of {SYNTH_PRESETS:?}")))?;
    let series = synth_generate(&c, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let mut buf = Vec::new();
    write_csv(&series, &mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
    write(output, &String::from_utf8_lossy(&buf))?;
    println!("{} bars x {} tickers -> {}", series.n_bars(), series.n_tickers(), output.display());
    Ok(())
}

fn cmd_metrics(input: &Path, cost_bp: f64) -> Result<(), CliError> {
    let text = fs::read_to_string(input).map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
    let r: RunResult = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
    if !(cost_bp >= 0.0) {
        return Err(CliError::Config("cost_bp must be non-negative".into()));
    }
    let m = compute_metrics(&apply_costs(&r.test.returns, &r.test.weights, None, cost_bp))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    print!("{}", to_canonical_pretty(&m));
    Ok(())
}

fn cmd_plot_data(inputs: &[PathBuf], output: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "sharpe_mean", "sharpe_std", "sortino_mean", "sortino_std", "n_seeds"])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let opt = |x: Option<f64>| x.map(format_float).unwrap_or_default();
    let mut row = |label: &str, a: &Aggregate| -> Result<(), CliError> {
        let s = a.metrics.get("sharpe");
        let so = a.metrics.get("sortino");
        w.write_record([
            label.to_string(),
            opt(s.and_then(|m| m.mean)),
            opt(s.and_then(|m| m.std)),
            opt(so.and_then(|m| m.mean)),
            opt(so.and_then(|m| m.std)),
            a.seeds.len().to_string(),
        ])
        .map_err(|e| CliError::Runtime(e.to_string()))
    };
    for p in inputs {
        let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        if let Ok(t) = serde_json::from_str::<AblationTable>(&text) {
            for r in &t.rows {
                row(&r.configuration, &r.aggregate)?;
            }
        } else if let Ok(a) = serde_json::from_str::<Aggregate>(&text) {
            let label = p
                .parent()
                .and_then(|d| d.file_name())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            row(&label, &a)?;
        } else {
            return Err(CliError::Config(format!(
                "{}: neither an ablation table nor an aggregate",
                p.display()
            )));
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    write(output, &String::from_utf8_lossy(&bytes))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Ablate(c) => cmd_ablate(c),
        Command::Baselines(c) => cmd_baselines(c),
        Command::SynthData { preset, seed, output } => cmd_synth(preset, *seed, output),
        Command::Metrics { input, cost_bp } => cmd_metrics(input, *cost_bp),
        Command::PlotData { input, output } => cmd_plot_data(input, output),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
