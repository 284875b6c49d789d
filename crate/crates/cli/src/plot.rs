//! `distgan plot`: figures from the snapshots of a run directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use distgan_core::metrics::density_1d;
use distgan_core::viz::{plot_density_1d, plot_latent_map, plot_scatter};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::run::{snapshot_epochs, snapshot_path, Snapshot};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureKind {
    LatentMap,
    Density,
    Scatter,
}

impl FigureKind {
    pub const ALL: [FigureKind; 3] = [FigureKind::LatentMap, FigureKind::Density, FigureKind::Scatter];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureKind::LatentMap => "latent-map",
            FigureKind::Density => "density",
            FigureKind::Scatter => "scatter",
        }
    }
}

impl fmt::Display for FigureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let valid: Vec<_> = Self::ALL.iter().map(|k| k.as_str()).collect();
            anyhow::anyhow!("unknown figure kind `{s}`; valid kinds: {}", valid.join(", "))
        })
    }
}

/// Parses a comma-separated list of kinds.
pub fn parse_kinds(s: &str) -> Result<Vec<FigureKind>> {
    s.split(',').map(str::trim).filter(|k| !k.is_empty()).map(FigureKind::from_str).collect()
}

pub fn figure_path(dir: &Path, kind: FigureKind, epoch: usize) -> PathBuf {
    dir.join("figures").join(format!("{kind}-epoch-{epoch:04}.svg"))
}

/// Writes `kinds` for every snapshot of the run in `dir`, or only the one of
/// `epoch`. Returns the written paths in (epoch, kind) order.
pub fn render(dir: &Path, kinds: &[FigureKind], epoch: Option<usize>) -> Result<Vec<PathBuf>> {
    let cfg = ExperimentConfig::load(&dir.join("config.toml"))?;
    let seed = cfg.experiment.seeds[0];
    let epochs = match epoch {
        Some(e) => vec![e],
        None => snapshot_epochs(dir)?,
    };
    if epochs.is_empty() {
        bail!("{} has no snapshots to plot", dir.display());
    }
    let dataset = cfg.dataset(seed);
    let tc = cfg.train_config(seed)?;
    let real_hist = density_1d(&dataset.samples, tc.eval.bins, tc.eval.range)?;
    fs::create_dir_all(dir.join("figures"))?;
    let mut written = Vec::new();
    for e in epochs {
        let path = snapshot_path(dir, e);
        if !path.is_file() {
            bail!("missing snapshot {}", path.display());
        }
        let snap = Snapshot::read(&path, e)?;
        for &kind in kinds {
            let svg = match kind {
                FigureKind::LatentMap => {
                    if snap.latents.cols() != 2 {
                        bail!("latent-map needs a 2-D latent space, run has d_z = {}", snap.latents.cols());
                    }
                    plot_latent_map(&snap.labels, &snap.latents)?
                }
                FigureKind::Density => {
                    let gen = density_1d(&snap.generated, tc.eval.bins, tc.eval.range)?;
                    plot_density_1d(&[("real".to_string(), real_hist.clone()), (cfg.experiment.variant.clone(), gen)])?
                }
                FigureKind::Scatter => {
                    let Some(grid) = cfg.grid() else {
                        bail!("scatter needs a grid dataset");
                    };
                    let n = snap.generated.rows().min(dataset.len());
                    let real = dataset.samples.select_rows(&(0..n).collect::<Vec<_>>())?;
                    plot_scatter(&real, &snap.generated, &grid)?
                }
            };
            let out = figure_path(dir, kind, e);
            fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
            written.push(out);
        }
    }
    Ok(written)
}
