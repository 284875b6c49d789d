//! `distgan ablation`: every ablation variant over several seeds, then the
//! results table and mode/point curves.

use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Result};
use distgan_core::training::ABLATION_VARIANTS;

use crate::config::ExperimentConfig;
use crate::run::{execute, RunOutcome};
use crate::table::{build, discover, write_outputs, ResultsTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// 8 seeds × 500 epochs.
    SyntheticFull,
    /// 3 seeds × 100 epochs.
    SyntheticSmoke,
}

impl FromStr for Preset {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic-full" => Ok(Self::SyntheticFull),
            "synthetic-smoke" => Ok(Self::SyntheticSmoke),
            _ => bail!("unknown preset `{s}`; valid presets: synthetic-full, synthetic-smoke"),
        }
    }
}

impl Preset {
    pub fn seeds(self) -> Vec<u64> {
        match self {
            Preset::SyntheticFull => (0..8).collect(),
            Preset::SyntheticSmoke => (0..3).collect(),
        }
    }

    pub fn epochs(self) -> usize {
        match self {
            Preset::SyntheticFull => 500,
            Preset::SyntheticSmoke => 100,
        }
    }
}

/// One config per ablation variant. Every epoch is evaluated for the curves;
/// snapshots are kept every 50 evaluations and at the end.
pub fn configs(preset: Preset, seeds: Option<Vec<u64>>, epochs: Option<usize>) -> Vec<ExperimentConfig> {
    let seeds = seeds.unwrap_or_else(|| preset.seeds());
    ABLATION_VARIANTS
        .iter()
        .map(|v| {
            let mut c = ExperimentConfig::new(v, seeds.clone());
            c.training.epochs = Some(epochs.unwrap_or_else(|| preset.epochs()));
            c.output.snapshot_every = 50;
            c
        })
        .collect()
}

/// Result of one (variant, seed) cell.
pub struct Cell {
    pub variant: String,
    pub seed: u64,
    pub outcome: Result<RunOutcome>,
}

/// Runs every cell on `workers` threads, then writes `table.csv`,
/// `table.txt` and `curves.csv` to `out`. A failing cell is reported and
/// counted; it does not stop the batch.
pub fn run_batch(cfgs: &[ExperimentConfig], out: &Path, workers: usize) -> Result<(Vec<Cell>, ResultsTable)> {
    let jobs: Vec<(usize, u64)> = cfgs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.experiment.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results = crate::pool::map(&jobs, workers, |&(i, seed)| execute(&cfgs[i], seed, out));
    let cells: Vec<Cell> = jobs
        .iter()
        .zip(results)
        .map(|(&(i, seed), outcome)| Cell {
            variant: cfgs[i].experiment.variant.clone(),
            seed,
            outcome,
        })
        .collect();
    for c in &cells {
        if let Err(e) = &c.outcome {
            eprintln!("[{} seed {}] failed: {e:#}", c.variant, c.seed);
        }
    }
    let runs = discover(&[out.to_path_buf()])?;
    let table = build(&runs)?;
    write_outputs(out, &table, &runs)?;
    Ok((cells, table))
}
