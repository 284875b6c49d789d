//! Experiment configuration files.
//!
//! A config is TOML with fixed sections; every table rejects unknown keys so a
//! misspelt coefficient fails loudly instead of silently falling back to a
//! default.
//!
//! ```toml
//! [experiment]
//! variant = "dist-gan"
//! seeds = [0, 1]
//!
//! [training]
//! epochs = 2
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use distgan_core::data::{make_1d_demo_with, make_grid, sample_data, Dataset, Gaussian1d, GaussianGrid, GridPreset};
use distgan_core::nn::{Activation, MlpSpec};
use distgan_core::training::{build_variant, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::plot::FigureKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub variant: String,
    pub seeds: Vec<u64>,
    /// Root of the run directories; `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataPreset {
    /// Square grid of isotropic Gaussians.
    Grid,
    /// Single 1-D Gaussian.
    Demo1d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub preset: DataPreset,
    pub n: usize,
    pub side: usize,
    pub spacing: f64,
    pub sigma: f64,
    pub mean: f64,
    pub std: f64,
    /// Dataset seed; each run uses its own seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DataSection {
    fn default() -> Self {
        let g = GridPreset::default();
        let d = Gaussian1d::default();
        Self {
            preset: DataPreset::Grid,
            n: 50_000,
            side: g.side,
            spacing: g.spacing,
            sigma: g.sigma,
            mean: d.mean,
            std: d.std,
            seed: None,
        }
    }
}

/// Overrides of the synthetic training preset; absent keys keep the preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub d_z: Option<usize>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub decay_every: Option<u64>,
    pub decay_base: Option<f64>,
    pub lambda_r: Option<f64>,
    pub lambda_p: Option<f64>,
    pub lambda_w: Option<f64>,
    pub auto_lambda_w: Option<bool>,
    pub wgan_lambda_p: Option<f64>,
    pub generator_twice: Option<bool>,
}

/// Hidden-layer overrides applied to encoder, generator and discriminator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden_layers: Option<usize>,
    pub hidden_width: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Evaluate after every this many epochs.
    pub every: Option<usize>,
    pub n_samples: Option<usize>,
    pub k_sigma: Option<f64>,
    pub min_count: Option<usize>,
    pub smoothing: Option<f64>,
    pub bins: Option<usize>,
    pub range: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Save a sample snapshot at every this many evaluations; the final
    /// evaluation is always kept. 0 keeps only the final one.
    pub snapshot_every: usize,
    /// Save a checkpoint every this many epochs; the final state is always
    /// saved. 0 disables intermediate checkpoints.
    pub checkpoint_every: usize,
    /// Figures rendered from the final snapshot when the run ends.
    pub figures: Vec<FigureKind>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            snapshot_every: 1,
            checkpoint_every: 0,
            figures: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates `text`; `origin` names the source in messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| anyhow::anyhow!("{origin}: {e}"))?;
        cfg.validate().with_context(|| format!("{origin}: invalid configuration"))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Minimal config for `variant` on the default grid.
    pub fn new(variant: &str, seeds: Vec<u64>) -> Self {
        Self {
            experiment: Experiment {
                variant: variant.to_string(),
                seeds,
                out: None,
            },
            data: DataSection::default(),
            training: TrainingSection::default(),
            network: NetworkSection::default(),
            eval: EvalSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment.seeds.is_empty() {
            bail!("experiment.seeds must not be empty");
        }
        let mut seen = self.experiment.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.experiment.seeds.len() {
            bail!("experiment.seeds contains duplicates");
        }
        if self.data.n == 0 {
            bail!("data.n must be >= 1");
        }
        self.train_config(self.experiment.seeds[0])?;
        Ok(())
    }

    /// Canonical text of everything that determines a run's outputs except
    /// the seed and the output root.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.experiment.seeds = Vec::new();
        c.experiment.out = None;
        toml::to_string(&c).expect("config serializes")
    }

    /// SHA-256 of [`ExperimentConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// The same config restricted to one seed.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.experiment.seeds = vec![seed];
        c.experiment.out = None;
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Option<GaussianGrid> {
        match self.data.preset {
            DataPreset::Grid => Some(make_grid(GridPreset {
                side: self.data.side,
                spacing: self.data.spacing,
                sigma: self.data.sigma,
            })),
            DataPreset::Demo1d => None,
        }
    }

    pub fn dataset(&self, seed: u64) -> Dataset {
        let s = self.data.seed.unwrap_or(seed);
        match self.grid() {
            Some(g) => sample_data(&g, self.data.n, s),
            None => make_1d_demo_with(
                Gaussian1d {
                    mean: self.data.mean,
                    std: self.data.std,
                },
                self.data.n,
                s,
            ),
        }
    }

    /// Training settings of the run with `seed`.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let variant = build_variant(&self.experiment.variant)?;
        let mut c = TrainConfig::synthetic(variant, seed);
        if self.data.preset == DataPreset::Demo1d {
            c.d_z = 1;
            c.encoder = MlpSpec::demo_1d(1, 1, Activation::Identity);
            c.generator = MlpSpec::demo_1d(1, 1, Activation::Identity);
            c.discriminator = MlpSpec::demo_1d(1, 1, Activation::Sigmoid);
        }
        let t = &self.training;
        macro_rules! set {
            ($($src:expr => $dst:expr),* $(,)?) => { $(if let Some(v) = $src { $dst = v; })* };
        }
        set! {
            t.epochs => c.epochs,
            t.batch_size => c.batch_size,
            t.lr => c.adam.lr,
            t.beta1 => c.adam.beta1,
            t.beta2 => c.adam.beta2,
            t.adam_eps => c.adam.eps,
            t.decay_every => c.adam.decay_every,
            t.decay_base => c.adam.decay_base,
            t.lambda_r => c.penalties.lambda_r,
            t.lambda_p => c.penalties.lambda_p,
            t.lambda_w => c.penalties.lambda_w,
            t.auto_lambda_w => c.auto_lambda_w,
            t.wgan_lambda_p => c.wgan_lambda_p,
            t.generator_twice => c.generator_twice,
        }
        if let Some(d_z) = t.d_z {
            c.d_z = d_z;
            c.encoder.d_out = d_z;
            c.generator.d_in = d_z;
        }
        for spec in [&mut c.encoder, &mut c.generator, &mut c.discriminator] {
            set! {
                self.network.hidden_layers => spec.n_hidden,
                self.network.hidden_width => spec.d_hidden,
            }
        }
        let e = &self.eval;
        set! {
            e.every => c.eval_every,
            e.n_samples => c.eval.n_samples,
            e.k_sigma => c.eval.k_sigma,
            e.min_count => c.eval.min_count,
            e.smoothing => c.eval.smoothing,
            e.bins => c.eval.bins,
        }
        if let Some([lo, hi]) = e.range {
            c.eval.range = (lo, hi);
        }
        c.validate()?;
        Ok(c)
    }
}

/// Parses `--seeds`: a comma list (`0,3,5`), a half-open range (`0..8`) or a
/// mix of both.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
            if a >= b {
                bail!("empty seed range `{part}`");
            }
            out.extend(a..b);
        } else {
            out.push(part.parse().with_context(|| format!("invalid seed `{part}`"))?);
        }
    }
    if out.is_empty() {
        bail!("no seeds in `{s}`");
    }
    Ok(out)
}
