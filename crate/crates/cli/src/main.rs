use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use wlrseq_cli::data::read_subjects;
use wlrseq_cli::report::{parse_analyses, ReportConfig};
use wlrseq_cli::{describe, design, exit_code, monitor, pretty, project, report, simulate, Provenance};

#[derive(Parser)]
#[command(name = "wlrseq", version, about = "Group-sequential weighted log-rank monitoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the JSON result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print a table to stdout (JSON still goes to --out when given).
    #[arg(long, global = true)]
    pretty: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Boundaries, drift and schedule from a design configuration.
    Design {
        #[arg(long)]
        config: PathBuf,
    },
    /// Statistic at one analysis against the design boundary.
    Monitor {
        /// Design document or design configuration.
        #[arg(long = "config", alias = "design")]
        design: PathBuf,
        /// Subject CSV (id,time,event,arm).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        analysis: usize,
        /// Follow-up truncation time; defaults to the largest time.
        #[arg(long)]
        cutoff: Option<f64>,
    },
    /// Inference after stopping.
    Report {
        #[arg(long)]
        config: PathBuf,
        /// Subject CSV at the stopping analysis, for crude rates.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        cutoff: Option<f64>,
    },
    /// End-of-trial functionals for the ramp-plateau weight.
    Project {
        #[arg(long)]
        config: PathBuf,
        /// Cross-check the closed forms with adaptive quadrature.
        #[arg(long)]
        oracle: bool,
    },
    /// Monte Carlo operating characteristics.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Per-replicate CSV.
        #[arg(long)]
        replicates_out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<(Vec<u8>, serde_json::Value)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let value = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    Ok((bytes, value))
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, value: serde_json::Value) -> Result<T> {
    serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))
}

fn emit<T: Serialize>(cli: &Cli, doc: &T, table: impl FnOnce(&T) -> String) -> Result<()> {
    let json = serde_json::to_string_pretty(doc)?;
    match &cli.out {
        Some(p) => std::fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None if !cli.pretty => println!("{json}"),
        None => {}
    }
    if cli.pretty {
        print!("{}", table(doc));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Design { config } => {
            let (bytes, v) = read(config)?;
            let cfg = parse(config, v)?;
            let doc = design::design(&cfg, Provenance::new("design", &bytes))?;
            emit(cli, &doc, pretty::design)
        }
        Command::Monitor {
            design: dpath,
            data,
            analysis,
            cutoff,
        } => {
            let (bytes, v) = read(dpath)?;
            let doc = design::load(v, Provenance::new("design", &bytes))?;
            let subjects = read_subjects(data)?;
            let prov = Provenance::new("monitor", &bytes).with_data(Some(subjects.sha256.clone()), None);
            let out = monitor::monitor(&doc, &subjects.records, *cutoff, *analysis, prov)?;
            emit(cli, &out, pretty::monitor)
        }
        Command::Report { config, data, cutoff } => {
            let (bytes, v) = read(config)?;
            let cfg: ReportConfig = parse(config, v)?;
            let design_value = match &cfg.design {
                serde_json::Value::String(p) => {
                    let base = config.parent().unwrap_or(Path::new("."));
                    read(&base.join(p))?.1
                }
                other => other.clone(),
            };
            let doc = design::load(design_value, Provenance::new("design", &bytes))?;
            let analyses = parse_analyses(&cfg.analyses)?;
            let subjects = data.as_deref().map(read_subjects).transpose()?;
            let sub = subjects.as_ref().map(|s| {
                let c = cutoff.unwrap_or_else(|| s.records.iter().map(|r| r.time).fold(0.0, f64::max));
                (s.records.as_slice(), c)
            });
            let prov = Provenance::new("report", &bytes)
                .with_data(subjects.as_ref().map(|s| s.sha256.clone()), sub.map(|s| s.1));
            let out = report::report(&doc, &analyses, cfg.use_observed_final, sub, prov)?;
            emit(cli, &out, pretty::report)
        }
        Command::Project { config, oracle } => {
            let (bytes, v) = read(config)?;
            let cfg = project::parse_config(v).with_context(|| format!("parsing {}", config.display()))?;
            let out = project::project(&cfg, *oracle, Provenance::new("project", &bytes))?;
            emit(cli, &out, pretty::project)
        }
        Command::Simulate {
            config,
            seed,
            replicates_out,
        } => {
            let (bytes, v) = read(config)?;
            let cfg = parse(config, v)?;
            let (out, reps) = simulate::simulate(&cfg, *seed, Provenance::new("simulate", &bytes))?;
            if let Some(p) = replicates_out {
                simulate::write_replicates(p, &reps)?;
            }
            emit(cli, &out, pretty::simulate)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
