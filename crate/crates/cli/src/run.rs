//! `distgan run`: one directory per seed with metrics, checkpoints, sample
//! snapshots and figures.
//!
//! Layout of a run directory `<root>/<variant>-<hash12>/seed-<seed>/`:
//!
//! | path | content |
//! |---|---|
//! | `config.toml` | the config restricted to this seed |
//! | `manifest.toml` | version, config hash, status |
//! | `metrics.csv` | one row per evaluation |
//! | `checkpoints/final.txt` | parameters and optimizer state at the end |
//! | `snapshots/epoch-NNNN.csv` | latents, generated samples and mode labels |
//! | `figures/*.svg` | figures requested in `[output]` |
//! | `DIVERGED` | present when training hit a non-finite value |

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use distgan_core::metrics::register;
use distgan_core::training::{run_experiment, EvalContext};
use distgan_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::plot;

pub const VERSION: &str = concat!("distgan ", env!("CARGO_PKG_VERSION"));

/// Column order of `metrics.csv`.
pub const METRICS_COLUMNS: [&str; 12] = [
    "step",
    "epoch",
    "registered_modes",
    "registered_points",
    "tv_true",
    "tv_diff",
    "kl_modes",
    "kl_1d",
    "L_R",
    "L_W",
    "L_G",
    "L_D",
];

/// One line of `metrics.csv`. Grid metrics are empty for data without modes;
/// autoencoder losses are empty for the baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub epoch: usize,
    pub registered_modes: Option<usize>,
    pub registered_points: Option<usize>,
    pub tv_true: Option<f64>,
    pub tv_diff: Option<f64>,
    pub kl_modes: Option<f64>,
    pub kl_1d: Option<f64>,
    #[serde(rename = "L_R")]
    pub l_r: Option<f64>,
    #[serde(rename = "L_W")]
    pub l_w: Option<f64>,
    #[serde(rename = "L_G")]
    pub l_g: f64,
    #[serde(rename = "L_D")]
    pub l_d: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Completed,
    Diverged,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub variant: String,
    pub seed: u64,
    pub status: Status,
    pub epochs: usize,
    pub steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join("manifest.toml");
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
    }

    fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join("manifest.toml"), toml::to_string(self)?)?;
        Ok(())
    }
}

pub fn read_metrics(dir: &Path) -> Result<Vec<MetricsRow>> {
    let p = dir.join("metrics.csv");
    let mut r = csv::Reader::from_path(&p).with_context(|| format!("reading {}", p.display()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<MetricsRow>, _>>()
        .with_context(|| format!("parsing {}", p.display()))
}

/// Directory of the run of `cfg` with `seed` under `root`.
pub fn run_dir(root: &Path, cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    root.join(format!("{}-{}", cfg.experiment.variant, &cfg.hash()[..12]))
        .join(format!("seed-{seed}"))
}

pub fn snapshot_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join("snapshots").join(format!("epoch-{epoch:04}.csv"))
}

/// Latents, generated samples and their mode labels at one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub latents: Tensor,
    pub generated: Tensor,
    pub labels: Vec<Option<usize>>,
}

impl Snapshot {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let (dz, dx) = (self.latents.cols(), self.generated.cols());
        let mut header: Vec<String> = (1..=dz).map(|i| format!("z{i}")).collect();
        header.extend((1..=dx).map(|i| format!("x{i}")));
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.latents.rows() {
            let mut rec: Vec<String> = self.latents.row(i).iter().map(f64::to_string).collect();
            rec.extend(self.generated.row(i).iter().map(f64::to_string));
            rec.push(self.labels[i].map_or(String::new(), |l| l.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path, epoch: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let header = r.headers()?.clone();
        let dz = header.iter().filter(|h| h.starts_with('z')).count();
        let dx = header.iter().filter(|h| h.starts_with('x')).count();
        let (mut z, mut x, mut labels) = (Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> { Ok(rec[i].parse()?) };
            for i in 0..dz {
                z.push(num(i)?);
            }
            for i in dz..dz + dx {
                x.push(num(i)?);
            }
            let l = &rec[dz + dx];
            labels.push(if l.is_empty() { None } else { Some(l.parse()?) });
        }
        let n = labels.len();
        Ok(Self {
            epoch,
            latents: Tensor::matrix(n, dz, z)?,
            generated: Tensor::matrix(n, dx, x)?,
            labels,
        })
    }
}

/// Epochs with a snapshot file in `dir`, ascending.
pub fn snapshot_epochs(dir: &Path) -> Result<Vec<usize>> {
    let sdir = dir.join("snapshots");
    let mut epochs = Vec::new();
    if sdir.is_dir() {
        for entry in fs::read_dir(&sdir)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(e) = name.strip_prefix("epoch-").and_then(|s| s.strip_suffix(".csv")) {
                epochs.push(e.parse()?);
            }
        }
    }
    epochs.sort_unstable();
    Ok(epochs)
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// Trains `cfg` with `seed` and writes its run directory under `root`,
/// replacing any previous content.
pub fn execute(cfg: &ExperimentConfig, seed: u64, root: &Path) -> Result<RunOutcome> {
    let dir = run_dir(root, cfg, seed);
    if dir.exists() {
        fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    fs::create_dir_all(dir.join("checkpoints"))?;
    fs::create_dir_all(dir.join("snapshots"))?;
    let tc = cfg.train_config(seed)?;
    let mut manifest = Manifest {
        version: VERSION.into(),
        config_hash: cfg.hash(),
        variant: cfg.experiment.variant.clone(),
        seed,
        status: Status::Running,
        epochs: tc.epochs,
        steps: 0,
        message: None,
    };
    fs::write(dir.join("config.toml"), cfg.for_seed(seed).to_toml())?;
    manifest.write(&dir)?;

    let dataset = cfg.dataset(seed);
    let grid = cfg.grid();
    let last_eval = tc.epochs / tc.eval_every * tc.eval_every;
    let n_evals = tc.epochs / tc.eval_every;
    let report_every = (n_evals / 10).max(1);
    let out = &cfg.output;
    let mut metrics = csv::Writer::from_path(dir.join("metrics.csv"))?;
    let mut n_eval = 0usize;
    let mut hook = |ctx: &EvalContext<'_>| -> distgan_core::Result<()> {
        n_eval += 1;
        let r = ctx.record;
        let m = r.metrics.as_ref();
        let row = MetricsRow {
            step: r.step,
            epoch: r.epoch,
            registered_modes: m.map(|m| m.registered_modes),
            registered_points: m.map(|m| m.registered_points),
            tv_true: m.map(|m| m.tv_true),
            tv_diff: m.map(|m| m.tv_differential),
            kl_modes: m.map(|m| m.kl_modes),
            kl_1d: m.map(|m| m.kl_1d),
            l_r: r.losses.l_r,
            l_w: r.losses.l_w,
            l_g: r.losses.l_g,
            l_d: r.losses.l_d,
        };
        let io = |e: Box<dyn std::error::Error>| distgan_core::Error::Config(format!("writing run output: {e}"));
        metrics.serialize(&row).map_err(|e| io(e.into()))?;
        metrics.flush().map_err(|e| io(e.into()))?;
        let snap = (out.snapshot_every > 0 && n_eval % out.snapshot_every == 0) || r.epoch == last_eval;
        if snap {
            let labels = match &grid {
                Some(g) if ctx.generated.cols() == 2 => register(ctx.generated, g, tc.eval.k_sigma)?.labels,
                _ => vec![None; ctx.generated.rows()],
            };
            let s = Snapshot {
                epoch: r.epoch,
                latents: ctx.latents.clone(),
                generated: ctx.generated.clone(),
                labels,
            };
            s.write(&snapshot_path(&dir, r.epoch)).map_err(|e| io(e.into()))?;
        }
        if out.checkpoint_every > 0 && r.epoch % out.checkpoint_every == 0 {
            let p = dir.join("checkpoints").join(format!("epoch-{:04}.txt", r.epoch));
            fs::write(p, ctx.state.checkpoint().to_text()).map_err(|e| io(e.into()))?;
        }
        if n_eval % report_every == 0 {
            let modes = m.map_or("-".to_string(), |m| m.registered_modes.to_string());
            eprintln!(
                "[{} seed {seed}] epoch {}/{} step {} modes {modes}",
                cfg.experiment.variant, r.epoch, tc.epochs, r.step
            );
        }
        Ok(())
    };
    let result = run_experiment(&tc, &dataset, &mut hook);
    drop(hook);
    drop(metrics);
    let log = match result {
        Ok(log) => log,
        Err(e) => {
            manifest.status = Status::Failed;
            manifest.message = Some(e.to_string());
            manifest.write(&dir)?;
            return Err(anyhow::Error::new(e).context(format!("run {}", dir.display())));
        }
    };
    fs::write(dir.join("checkpoints").join("final.txt"), log.checkpoint.to_text())?;
    manifest.steps = log.steps;
    match &log.diverged {
        Some(d) => {
            manifest.status = Status::Diverged;
            let msg = format!("step {} (epoch {}): {}", d.step, d.epoch, d.message);
            fs::write(dir.join("DIVERGED"), format!("{msg}\n"))?;
            manifest.message = Some(msg);
        }
        None => manifest.status = Status::Completed,
    }
    manifest.write(&dir)?;
    if !out.figures.is_empty() && log.diverged.is_none() && last_eval > 0 {
        plot::render(&dir, &out.figures, Some(last_eval))?;
    }
    Ok(RunOutcome { dir, manifest })
}

/// Runs every seed of `cfg` on `workers` threads; results follow seed order.
pub fn execute_all(cfg: &ExperimentConfig, root: &Path, workers: usize) -> Vec<Result<RunOutcome>> {
    crate::pool::map(&cfg.experiment.seeds, workers, |&seed| execute(cfg, seed, root))
}
