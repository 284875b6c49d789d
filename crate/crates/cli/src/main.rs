use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use distgan_cli::ablation::{self, Preset};
use distgan_cli::config::{parse_seeds, ExperimentConfig};
use distgan_cli::run::{execute_all, Status};
use distgan_cli::{plot, pool, table};

#[derive(Parser)]
#[command(name = "distgan", version, about = "Train, evaluate and tabulate distance-constrained GAN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config; one directory per seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Root of the run directories [default: experiment.out, else ./runs]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the config's seeds, e.g. `0..8` or `1,4`.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Aggregate the final evaluations of run directories.
    Table {
        /// Run directories or roots to search.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write table.csv, table.txt and curves.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render figures from the snapshots of one run directory.
    Plot {
        run_dir: PathBuf,
        /// Comma-separated: latent-map, density, scatter.
        #[arg(long, default_value = "latent-map,density,scatter")]
        kinds: String,
        /// Only this evaluation epoch.
        #[arg(long)]
        epoch: Option<usize>,
    },
    /// All ablation variants over several seeds, then the table.
    Ablation {
        /// synthetic-full or synthetic-smoke.
        #[arg(long)]
        preset: String,
        #[arg(long, default_value = "runs/ablation")]
        out: PathBuf,
        #[arg(long)]
        seeds: Option<String>,
        /// Replace the preset's epoch count.
        #[arg(long)]
        epochs: Option<usize>,
    },
}

/// Exit code for rejected input (config, flags).
const USAGE: u8 = 2;

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn usage(e: anyhow::Error) -> ExitCode {
    eprintln!("error: {e:#}");
    ExitCode::from(USAGE)
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, out, seeds } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return Ok(usage(e)),
            };
            if let Some(s) = seeds {
                match parse_seeds(&s) {
                    Ok(v) => cfg.experiment.seeds = v,
                    Err(e) => return Ok(usage(e)),
                }
            }
            let root = out.or_else(|| cfg.experiment.out.clone()).unwrap_or_else(|| "runs".into());
            let mut failed = false;
            for r in execute_all(&cfg, &root, pool::workers()) {
                match r {
                    Ok(o) => {
                        let status = match o.manifest.status {
                            Status::Completed => "completed",
                            Status::Diverged => "diverged",
                            _ => "failed",
                        };
                        println!("{status}\t{}", o.dir.display());
                    }
                    Err(e) => {
                        eprintln!("error: {e:#}");
                        failed = true;
                    }
                }
            }
            Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Table { dirs, out } => {
            let runs = table::discover(&dirs)?;
            let t = table::build(&runs)?;
            print!("{}", t.to_text());
            if let Some(out) = out {
                table::write_outputs(&out, &t, &runs)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { run_dir, kinds, epoch } => {
            let kinds = match plot::parse_kinds(&kinds) {
                Ok(k) if !k.is_empty() => k,
                Ok(_) => return Ok(usage(anyhow::anyhow!("no figure kinds given"))),
                Err(e) => return Ok(usage(e)),
            };
            for p in plot::render(&run_dir, &kinds, epoch)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Ablation { preset, out, seeds, epochs } => {
            let preset: Preset = match preset.parse() {
                Ok(p) => p,
                Err(e) => return Ok(usage(e)),
            };
            let seeds = match seeds.map(|s| parse_seeds(&s)).transpose() {
                Ok(s) => s,
                Err(e) => return Ok(usage(e)),
            };
            let cfgs = ablation::configs(preset, seeds, epochs);
            let (cells, t) = ablation::run_batch(&cfgs, &out, pool::workers())?;
            print!("{}", t.to_text());
            let failed = cells.iter().filter(|c| c.outcome.is_err()).count();
            println!("{} runs, {failed} failed; outputs in {}", cells.len(), out.display());
            Ok(if failed > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
    }
}
