use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use zo_sliding::config::{experiment_from_raw, RawConfig, RunConfig};
use zo_sliding::geomedian::run_experiment;
use zo_sliding::network::{build_gossip, Topology};
use zo_sliding::par::Exec;
use zo_sliding::report;

/// Zeroth-order gradient sliding: single runs, benchmark sweeps and gossip spectra.
#[derive(Parser, Debug)]
#[command(name = "zo-sliding", version)]
struct Cli {
    /// Output directory, created if absent.
    #[arg(long, global = true, env = "ZO_SLIDING_OUT", default_value = "out")]
    out: PathBuf,

    /// Worker threads for seed sweeps and Monte-Carlo loops (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Plain-text key/value config with `[section]` headers.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set solver.N=20`. Repeatable; later values win.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Seed (`solver.seed` for runs, first of `bench.seed` for sweeps).
    #[arg(long)]
    seed: Option<u64>,

    /// Write wall-clock milliseconds into the trace CSVs. Output is then no
    /// longer byte-reproducible.
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one solver on one problem and write its trace.
    Run(ConfigArgs),
    /// Run the geometric-median sweep (topologies × algorithms × seeds).
    Bench(ConfigArgs),
    /// Dump the gossip matrix of a topology and its eigenvalues.
    Spectra {
        #[arg(long)]
        topology: Topology,
        #[arg(long = "M", value_name = "M")]
        m: usize,
    },
    /// Parse and validate a config without running it.
    ValidateConfig {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn load(args: &ConfigArgs, seed_key: &str) -> Result<RawConfig> {
    let mut overrides = Vec::new();
    if let Some(s) = args.seed {
        overrides.push(format!("{seed_key}={s}"));
    }
    overrides.extend(args.overrides.iter().cloned());
    Ok(RawConfig::load_with_overrides(args.config.as_deref(), &overrides)?)
}

fn exec() -> Exec {
    if Exec::parallel_available() {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

fn cmd_run(out: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = RunConfig::from_raw(&load(args, "solver.seed")?)?;
    let trace = cfg.execute()?;
    let label = cfg.label();
    let runs = out.join("runs");
    let plots = out.join("plots");
    fs::create_dir_all(&runs).with_context(|| format!("cannot create {}", runs.display()))?;
    fs::create_dir_all(&plots).with_context(|| format!("cannot create {}", plots.display()))?;
    let csv = runs.join(format!("{}.csv", label.run_id));
    fs::write(&csv, report::trace_csv(&label, &trace, args.timing))?;
    fs::write(plots.join(format!("{}.dat", label.run_id)), report::plot_data(&trace))?;
    let gap = trace.final_gap().map(|g| g.to_string()).unwrap_or_else(|| "n/a".into());
    println!("{} final_gap={gap} -> {}", label.run_id, csv.display());
    Ok(())
}

fn cmd_bench(out: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = experiment_from_raw(&load(args, "bench.seed")?)?;
    let result = run_experiment(&cfg, exec())?;
    let files = report::write_experiment(out, &result, args.timing)?;
    println!("{}", report::summary_csv(&result.summary).trim_end());
    log::info!("wrote {} files under {}", files.len(), out.display());
    let failures: Vec<_> = result.failures().collect();
    if !failures.is_empty() {
        for (id, msg) in &failures {
            eprintln!("cell {id}: {msg}");
        }
        bail!("{} of {} cells failed", failures.len(), result.cells.len());
    }
    Ok(())
}

fn fmt_eigen(v: f64) -> String {
    let v = if v.abs() < 1e-12 { 0.0 } else { v };
    format!("{v:.12}")
}

fn cmd_spectra(out: &Path, topology: Topology, m: usize) -> Result<()> {
    let gossip = build_gossip(topology, m)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let w = out.join(format!("W_{topology}_{m}.txt"));
    fs::write(&w, gossip.to_text())?;
    let mut spectrum = String::new();
    for v in gossip.eigenvalues() {
        spectrum.push_str(&fmt_eigen(v));
        spectrum.push('\n');
    }
    let s = out.join(format!("spectrum_{topology}_{m}.txt"));
    fs::write(&s, spectrum)?;
    println!("lambda_max={} -> {}, {}", gossip.lambda_max(), w.display(), s.display());
    Ok(())
}

fn cmd_validate(config: Option<&Path>, overrides: &[String]) -> Result<()> {
    let raw = RawConfig::load_with_overrides(config, overrides)?;
    if raw.has_section("bench.") {
        experiment_from_raw(&raw)?.validate()?;
        println!("ok bench");
    } else {
        RunConfig::from_raw(&raw)?;
        println!("ok run");
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("cannot configure worker pool")?;
    }
    match &cli.command {
        Command::Run(args) => cmd_run(&cli.out, args),
        Command::Bench(args) => cmd_bench(&cli.out, args),
        Command::Spectra { topology, m } => cmd_spectra(&cli.out, *topology, *m),
        Command::ValidateConfig { config, overrides } => cmd_validate(config.as_deref(), overrides),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
