//! Command line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::config::ExperimentConfig;
use crate::output::{read_summary, write_image, write_run, write_summary};
use crate::phantom::PhantomKind;
use crate::presets::preset;
use crate::runner::{make_truth, run_experiment, SummaryRow};
use crate::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "nlgks", version, about = "Joint image and geometry reconstruction experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Source {
    /// Experiment config (flat TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named batch of desk-scale experiments.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Overrides the seed of every run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a phantom as PGM, raw f64 and a JSON sidecar.
    Phantom {
        #[arg(long, value_parser = parse_kind, default_value = "shepp_logan")]
        kind: PhantomKind,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a config or a preset.
    Run(Source),
    /// Run a config once per value of one key.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        key: String,
        /// Comma-separated TOML values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Collect every summary.csv under a directory into one table.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<PhantomKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown phantom '{s}' (shepp_logan, tectonic, moving_shapes, dynamic_blocks)"))
}

/// Process exit status for an error.
pub fn exit_code(e: &HarnessError) -> i32 {
    match e {
        HarnessError::Config(_) => 2,
        HarnessError::Solver(_) | HarnessError::Invariant(_) => 3,
        HarnessError::Io(_) => 1,
    }
}

fn load(src: &Source) -> Result<Vec<ExperimentConfig>, HarnessError> {
    let mut cfgs = match (&src.config, &src.preset) {
        (Some(p), _) => vec![ExperimentConfig::load(p)?],
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(HarnessError::Config("one of --config or --preset is required".into())),
    };
    for c in &mut cfgs {
        if let Some(s) = src.seed {
            c.seed = s;
        }
    }
    Ok(cfgs)
}

fn out_dir(src: &Source, cfgs: &[ExperimentConfig]) -> PathBuf {
    src.out
        .clone()
        .or_else(|| cfgs.first().and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Runs every config, writing each into `<dir>/<name>` and the combined
/// table into `<dir>/summary.csv`.
pub fn run_batch(cfgs: &[ExperimentConfig], dir: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut rows = Vec::new();
    for c in cfgs {
        info!("running {}", c.name);
        let run = run_experiment(c)?;
        write_run(&dir.join(&c.name), &run)?;
        info!("{}: rre {:.4}, p {:.5}, {} iterations", c.name, run.summary.rre, run.summary.p_final, run.summary.iterations);
        rows.push(run.summary);
    }
    write_summary(&dir.join("summary.csv"), &rows)?;
    Ok(rows)
}

fn print_table(rows: &[SummaryRow]) {
    println!("{:<20} {:>8} {:>12} {:>6} {:>6} {:>10} {:>10} {:>10} {:>6}", "name", "method", "temporal", "N", "k_max", "rre", "param_err", "p", "iters");
    for r in rows {
        println!(
            "{:<20} {:>8} {:>12} {:>6} {:>6} {:>10.4} {:>10.4} {:>10.5} {:>6}",
            r.name, r.method, r.temporal, r.blocks, r.k_max, r.rre, r.param_err, r.p_final, r.iterations
        );
    }
}

fn collect(dir: &Path, rows: &mut Vec<SummaryRow>) -> Result<(), HarnessError> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            collect(&p, rows)?;
        } else if p.file_name().is_some_and(|n| n == "summary.csv") && p.parent().is_some_and(|d| d.join("metrics.csv").exists()) {
            rows.extend(read_summary(&p)?);
        }
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Phantom { kind, size, frames, seed, out } => {
            let frames = if kind.is_dynamic() { frames } else { 1 };
            let cfg = ExperimentConfig { phantom: kind, n: size, frames, seed: seed.unwrap_or(1), ..Default::default() };
            cfg.validate()?;
            std::fs::create_dir_all(&out)?;
            let stem = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            write_image(&out, &stem, &make_truth(&cfg), size, frames, &[], None)?;
            println!("{}", out.join(format!("{stem}.pgm")).display());
        }
        Command::Run(src) => {
            let cfgs = load(&src)?;
            let dir = out_dir(&src, &cfgs);
            print_table(&run_batch(&cfgs, &dir)?);
        }
        Command::Sweep { source, key, values } => {
            let base = load(&source)?;
            let mut cfgs = Vec::new();
            for b in &base {
                for v in &values {
                    let mut c = b.with(&key, v)?;
                    c.name = format!("{}_{}{}", b.name, key, v.replace(['[', ']', ' ', '"', ','], ""));
                    cfgs.push(c);
                }
            }
            let dir = out_dir(&source, &base);
            print_table(&run_batch(&cfgs, &dir)?);
        }
        Command::Report { out } => {
            let mut rows = Vec::new();
            collect(&out, &mut rows)?;
            if rows.is_empty() {
                return Err(HarnessError::Config(format!("no run summaries under {}", out.display())));
            }
            write_summary(&out.join("report.csv"), &rows)?;
            print_table(&rows);
        }
    }
    Ok(())
}
