//! The three-phase training loop (autoencoder, discriminator, generator),
//! the variant switchboard and the experiment driver.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::autodiff::{Graph, Var};
use crate::checkpoint::Checkpoint;
use crate::data::{sample_prior_with, DataSource, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{EvalConfig, Evaluator, MetricsReport};
use crate::nn::{adam_step, init_params_with, predict, AdamConfig, AdamState, BoundMlp, MlpSpec, ParameterSet};
use crate::objectives::{
    self, discriminator_loss, generator_loss_from_logits, latent_data_distance, reconstruction_loss,
    BaselineKind, Critic, DiscriminatorSpec, GeneratorLoss, LatentDataTerms, PenaltyCoefficients,
    PenaltyForm, ReconLabel,
};
use crate::rng::{self, Rng, Stream};
use crate::tensor::Tensor;

/// Which objective set a variant trains with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    /// Autoencoder plus adversarial phases.
    DistGan,
    /// Two-phase adversarial baseline; the encoder is never trained.
    Baseline(BaselineKind),
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::DistGan => "distgan",
            Family::Baseline(BaselineKind::VanillaGan) => "vanilla-gan",
            Family::Baseline(BaselineKind::Gan1) => "gan1",
            Family::Baseline(BaselineKind::Gan2) => "gan2",
            Family::Baseline(BaselineKind::WganGp) => "wgan-gp",
        })
    }
}

/// One ablation configuration or baseline.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VariantConfig {
    pub name: String,
    /// Discriminator-score distance generator objective (otherwise
    /// non-saturating).
    pub use_lg: bool,
    pub recon_label: ReconLabel,
    pub use_lw: bool,
    pub use_lp: bool,
    pub family: Family,
}

/// Every name accepted by [`build_variant`], in table order.
pub const VARIANT_NAMES: [&str; 14] = [
    "vanilla-gan",
    "gan1",
    "gan2",
    "wgan-gp",
    "dist-gan-1-fake",
    "dist-gan-1-none",
    "dist-gan-1-real",
    "dist-gan-2",
    "dist-gan",
    "dist-gan-3",
    "dist-gan-4",
    "dist-gan-5",
    "dist-gan-6",
    "gan",
];

/// The nine variants of the synthetic ablation table.
pub const ABLATION_VARIANTS: [&str; 9] = [
    "vanilla-gan",
    "gan1",
    "gan2",
    "wgan-gp",
    "dist-gan-1-fake",
    "dist-gan-1-none",
    "dist-gan-1-real",
    "dist-gan-2",
    "dist-gan",
];

fn distgan(name: &str, use_lg: bool, recon_label: ReconLabel, use_lw: bool, use_lp: bool) -> VariantConfig {
    VariantConfig {
        name: name.to_string(),
        use_lg,
        recon_label,
        use_lw,
        use_lp,
        family: Family::DistGan,
    }
}

fn baseline(name: &str, kind: BaselineKind) -> VariantConfig {
    VariantConfig {
        name: name.to_string(),
        use_lg: kind.generator() == GeneratorLoss::ScoreDistance,
        recon_label: ReconLabel::None,
        use_lw: false,
        use_lp: kind.discriminator(0.0).penalty.is_some(),
        family: Family::Baseline(kind),
    }
}

/// Looks up a preset by name.
pub fn build_variant(name: &str) -> Result<VariantConfig> {
    use ReconLabel::{Fake, None as NoRecon, Real};
    Ok(match name {
        "dist-gan" => distgan(name, true, Real, true, true),
        "dist-gan-1-real" => distgan(name, true, Real, false, false),
        "dist-gan-1-fake" => distgan(name, true, Fake, false, false),
        "dist-gan-1-none" => distgan(name, true, NoRecon, false, false),
        "dist-gan-2" => distgan(name, true, Real, false, true),
        "dist-gan-3" => distgan(name, false, Real, true, true),
        "dist-gan-4" => distgan(name, true, NoRecon, true, true),
        "dist-gan-5" => distgan(name, true, Real, true, false),
        "dist-gan-6" => distgan(name, true, NoRecon, true, false),
        "vanilla-gan" | "gan" => baseline(name, BaselineKind::VanillaGan),
        "gan1" => baseline(name, BaselineKind::Gan1),
        "gan2" => baseline(name, BaselineKind::Gan2),
        "wgan-gp" => baseline(name, BaselineKind::WganGp),
        _ => return Err(Error::UnknownVariant(name.to_string())),
    })
}

impl VariantConfig {
    pub fn generator_loss(&self) -> GeneratorLoss {
        match self.family {
            Family::DistGan if self.use_lg => GeneratorLoss::ScoreDistance,
            Family::DistGan => GeneratorLoss::NonSaturating,
            Family::Baseline(k) => k.generator(),
        }
    }

    /// Discriminator objective; `lambda_p` applies to Dist-GAN and GAN₂,
    /// `wgan_lambda_p` to WGAN-GP.
    pub fn discriminator_spec(&self, lambda_p: f64, wgan_lambda_p: f64) -> DiscriminatorSpec {
        match self.family {
            Family::DistGan => DiscriminatorSpec::cross_entropy(
                self.recon_label,
                self.use_lp.then_some(PenaltyForm::SquaredNorm),
                lambda_p,
            ),
            Family::Baseline(BaselineKind::WganGp) => BaselineKind::WganGp.discriminator(wgan_lambda_p),
            Family::Baseline(k) => k.discriminator(lambda_p),
        }
    }

    pub fn trains_autoencoder(&self) -> bool {
        self.family == Family::DistGan
    }
}

/// Full description of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: VariantConfig,
    pub penalties: PenaltyCoefficients,
    /// Replace `penalties.lambda_w` by `√(d_z/d_x)`.
    pub auto_lambda_w: bool,
    /// Penalty weight of the WGAN-GP critic.
    pub wgan_lambda_p: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub d_z: usize,
    /// Evaluate after every `eval_every` epochs.
    pub eval_every: usize,
    /// Extra autoencoder-objective update of the generator after the
    /// autoencoder phase.
    pub generator_twice: bool,
    pub eval: EvalConfig,
    pub encoder: MlpSpec,
    pub generator: MlpSpec,
    pub discriminator: MlpSpec,
}

impl TrainConfig {
    /// Settings of the 25-mode synthetic experiment.
    pub fn synthetic(variant: VariantConfig, seed: u64) -> Self {
        Self {
            variant,
            penalties: PenaltyCoefficients::default(),
            auto_lambda_w: false,
            wgan_lambda_p: 10.0,
            adam: AdamConfig::default(),
            batch_size: 128,
            epochs: 500,
            seed,
            d_z: 2,
            eval_every: 1,
            generator_twice: false,
            eval: EvalConfig::default(),
            encoder: MlpSpec::synthetic_encoder(),
            generator: MlpSpec::synthetic_generator(),
            discriminator: MlpSpec::synthetic_discriminator(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.penalties.validate()?;
        self.adam.validate()?;
        for spec in [&self.encoder, &self.generator, &self.discriminator] {
            spec.validate()?;
        }
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.d_z == 0 {
            return bad("d_z must be >= 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1");
        }
        if !(self.wgan_lambda_p >= 0.0 && self.wgan_lambda_p.is_finite()) {
            return bad("wgan_lambda_p must be >= 0");
        }
        let (e, g, d) = (&self.encoder, &self.generator, &self.discriminator);
        if e.d_out != self.d_z || g.d_in != self.d_z {
            return bad("encoder output and generator input must equal d_z");
        }
        if e.d_in != g.d_out || d.d_in != g.d_out || d.d_out != 1 {
            return bad("encoder input, generator output and discriminator input must agree; discriminator output must be 1");
        }
        Ok(())
    }

    /// `λ_w` actually used for data of dimension `d_x`.
    pub fn lambda_w(&self, d_x: usize) -> f64 {
        if self.auto_lambda_w {
            objectives::lambda_w(self.d_z, d_x)
        } else {
            self.penalties.lambda_w
        }
    }
}

/// Parameter update of one step, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Autoencoder,
    /// Optional second autoencoder-objective update of the generator.
    GeneratorRecon,
    Discriminator,
    Generator,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Autoencoder => "autoencoder",
            Phase::GeneratorRecon => "generator-recon",
            Phase::Discriminator => "discriminator",
            Phase::Generator => "generator",
        }
    }
}

/// Loss values measured while taking one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    /// `None` for variants without an autoencoder phase.
    pub l_r: Option<f64>,
    pub l_w: Option<f64>,
    pub l_g: f64,
    pub l_d: f64,
}

/// Everything that evolves during training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub encoder: ParameterSet,
    pub generator: ParameterSet,
    pub discriminator: ParameterSet,
    /// Optimizer of the adversarial generator update; the generator set's own
    /// state belongs to the autoencoder update.
    pub generator_adv: AdamState,
    pub step: u64,
    /// Shuffles and interpolation weights.
    pub train_rng: Rng,
    /// Latent draws for training batches.
    pub prior_rng: Rng,
    /// Latent draws for evaluation.
    pub eval_rng: Rng,
    pub history: Vec<StepLosses>,
    pub phase_log: Vec<Vec<Phase>>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let s = cfg.seed;
        let encoder = init_params_with(&cfg.encoder, &mut rng::stream(s, Stream::Encoder));
        let generator = init_params_with(&cfg.generator, &mut rng::stream(s, Stream::Generator));
        let discriminator = init_params_with(&cfg.discriminator, &mut rng::stream(s, Stream::Discriminator));
        let generator_adv = AdamState::zeros_like(&generator.values);
        Ok(Self {
            encoder,
            generator,
            discriminator,
            generator_adv,
            step: 0,
            train_rng: rng::stream(s, Stream::Training),
            prior_rng: rng::stream(s, Stream::Prior),
            eval_rng: rng::stream(s, Stream::Evaluation),
            history: Vec::new(),
            phase_log: Vec::new(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            step: self.step,
            sets: vec![
                ("encoder".into(), self.encoder.clone()),
                ("generator".into(), self.generator.clone()),
                ("discriminator".into(), self.discriminator.clone()),
            ],
            optimizers: vec![("generator.adversarial".into(), self.generator_adv.clone())],
        }
    }

    /// Generator output on `z`.
    pub fn generate(&self, cfg: &TrainConfig, z: &Tensor) -> Result<Tensor> {
        predict(&cfg.generator, &self.generator, z)
    }
}

fn diverged(step: u64, phase: Phase) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { op } => Error::Diverged {
            step,
            phase: phase.as_str(),
            detail: format!("non-finite value in `{op}`"),
        },
        other => other,
    }
}

struct AeLosses {
    loss: Var,
    l_r: Var,
    l_w: Var,
}

fn ae_graph(
    g: &mut Graph,
    cfg: &TrainConfig,
    e: &BoundMlp,
    gen: &BoundMlp,
    x: &Tensor,
    z: &Tensor,
) -> Result<AeLosses> {
    let xv = g.constant(x.clone())?;
    let zv = g.constant(z.clone())?;
    let ex = e.apply(g, xv)?;
    let rec = gen.apply(g, ex)?;
    let l_r = reconstruction_loss(g, xv, rec)?;
    let gz = gen.apply(g, zv)?;
    let terms = LatentDataTerms {
        reconstructed: rec,
        generated: gz,
        encoded: ex,
        latent: zv,
    };
    let l_w = latent_data_distance(g, terms, cfg.lambda_w(x.cols()))?;
    let loss = if cfg.variant.use_lw {
        let w = g.scale(l_w, cfg.penalties.lambda_r)?;
        g.add(l_r, w)?
    } else {
        l_r
    };
    Ok(AeLosses { loss, l_r, l_w })
}

/// Autoencoder phase: one update of encoder and generator on
/// `L_R + λ_r·L_W` (`L_W` only when the variant enables it).
/// Returns `(L_R, L_W)` before the update.
pub fn autoencoder_phase(state: &mut TrainState, cfg: &TrainConfig, x: &Tensor, z: &Tensor) -> Result<(f64, f64)> {
    let step = state.step;
    let run = || -> Result<(f64, f64, Vec<Tensor>)> {
        let mut g = Graph::first_order();
        let e = BoundMlp::bind(&mut g, cfg.encoder, &state.encoder)?;
        let gen = BoundMlp::bind(&mut g, cfg.generator, &state.generator)?;
        let l = ae_graph(&mut g, cfg, &e, &gen, x, z)?;
        let targets: Vec<Var> = e.params.iter().chain(&gen.params).copied().collect();
        let grads = g.backward(l.loss, &targets)?;
        Ok((g.item(l.l_r)?, g.item(l.l_w)?, grads))
    };
    let (l_r, l_w, mut grads) = run().map_err(diverged(step, Phase::Autoencoder))?;
    let g_grads = grads.split_off(state.encoder.len());
    state
        .encoder
        .adam_step(&grads, step, &cfg.adam)
        .map_err(diverged(step, Phase::Autoencoder))?;
    state
        .generator
        .adam_step(&g_grads, step, &cfg.adam)
        .map_err(diverged(step, Phase::Autoencoder))?;
    Ok((l_r, l_w))
}

/// Second autoencoder-objective update, generator parameters only.
pub fn generator_recon_phase(state: &mut TrainState, cfg: &TrainConfig, x: &Tensor, z: &Tensor) -> Result<()> {
    let step = state.step;
    let grads = (|| -> Result<Vec<Tensor>> {
        let mut g = Graph::first_order();
        let e = BoundMlp::bind(&mut g, cfg.encoder, &state.encoder)?;
        let gen = BoundMlp::bind(&mut g, cfg.generator, &state.generator)?;
        let l = ae_graph(&mut g, cfg, &e, &gen, x, z)?;
        g.backward(l.loss, &gen.params)
    })()
    .map_err(diverged(step, Phase::GeneratorRecon))?;
    state
        .generator
        .adam_step(&grads, step, &cfg.adam)
        .map_err(diverged(step, Phase::GeneratorRecon))
}

/// Discriminator phase: one update of the discriminator on the variant's
/// objective. `eps` holds one interpolation weight per sample. Returns the
/// loss before the update.
pub fn discriminator_phase(
    state: &mut TrainState,
    cfg: &TrainConfig,
    x: &Tensor,
    z: &Tensor,
    eps: &[f64],
) -> Result<f64> {
    let step = state.step;
    let spec = cfg.variant.discriminator_spec(cfg.penalties.lambda_p, cfg.wgan_lambda_p);
    let run = || -> Result<(f64, Vec<Tensor>)> {
        let gz = predict(&cfg.generator, &state.generator, z)?;
        let rec = match spec.recon_label {
            ReconLabel::None => None,
            _ => {
                let ex = predict(&cfg.encoder, &state.encoder, x)?;
                Some(predict(&cfg.generator, &state.generator, &ex)?)
            }
        };
        let mut g = if spec.penalty.is_some() {
            Graph::higher_order()
        } else {
            Graph::first_order()
        };
        let d = BoundMlp::bind(&mut g, cfg.discriminator, &state.discriminator)?;
        let xv = g.constant(x.clone())?;
        let gzv = g.constant(gz)?;
        let recv = rec.map(|r| g.constant(r)).transpose()?;
        let l = discriminator_loss(&mut g, &d, &spec, xv, gzv, recv, eps)?;
        let grads = g.backward(l.total, &d.params)?;
        Ok((g.item(l.total)?, grads))
    };
    let (loss, grads) = run().map_err(diverged(step, Phase::Discriminator))?;
    state
        .discriminator
        .adam_step(&grads, step, &cfg.adam)
        .map_err(diverged(step, Phase::Discriminator))?;
    Ok(loss)
}

/// Generator phase: one update of the generator on the variant's adversarial
/// objective, with its own optimizer state. Returns the loss before the
/// update.
pub fn generator_phase(state: &mut TrainState, cfg: &TrainConfig, x: &Tensor, z: &Tensor) -> Result<f64> {
    let step = state.step;
    let kind = cfg.variant.generator_loss();
    let run = || -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::first_order();
        let gen = BoundMlp::bind(&mut g, cfg.generator, &state.generator)?;
        let d = BoundMlp::bind(&mut g, cfg.discriminator, &state.discriminator)?;
        let zv = g.constant(z.clone())?;
        let gz = gen.apply(&mut g, zv)?;
        let fake = d.logits(&mut g, gz)?;
        let real = match kind {
            GeneratorLoss::ScoreDistance => {
                let xv = g.constant(x.clone())?;
                Some(d.logits(&mut g, xv)?)
            }
            _ => None,
        };
        let loss = generator_loss_from_logits(&mut g, kind, real, fake)?;
        let grads = g.backward(loss, &gen.params)?;
        Ok((g.item(loss)?, grads))
    };
    let (loss, grads) = run().map_err(diverged(step, Phase::Generator))?;
    adam_step(
        &mut state.generator.values,
        &mut state.generator_adv,
        &grads,
        step,
        &cfg.adam,
    )
    .map_err(diverged(step, Phase::Generator))?;
    Ok(loss)
}

/// One training iteration on `x_batch` and `z_batch`, which all phases
/// share. Interpolation weights come from `state.train_rng`.
pub fn train_step(state: &mut TrainState, x_batch: &Tensor, z_batch: &Tensor, cfg: &TrainConfig) -> Result<StepLosses> {
    let m = cfg.batch_size;
    if x_batch.rows() != m || z_batch.rows() != m {
        return Err(Error::InvalidShape {
            shape: vec![x_batch.rows(), z_batch.rows()],
            reason: format!("batches must have {m} rows"),
        });
    }
    if z_batch.cols() != cfg.d_z {
        return Err(Error::InvalidShape {
            shape: z_batch.shape().to_vec(),
            reason: format!("latent batch must have {} columns", cfg.d_z),
        });
    }
    let mut phases = Vec::with_capacity(4);
    let (mut l_r, mut l_w) = (None, None);
    if cfg.variant.trains_autoencoder() {
        let (r, w) = autoencoder_phase(state, cfg, x_batch, z_batch)?;
        phases.push(Phase::Autoencoder);
        l_r = Some(r);
        l_w = Some(w);
        if cfg.generator_twice {
            generator_recon_phase(state, cfg, x_batch, z_batch)?;
            phases.push(Phase::GeneratorRecon);
        }
    }
    let eps: Vec<f64> = (0..m).map(|_| state.train_rng.random::<f64>()).collect();
    let l_d = discriminator_phase(state, cfg, x_batch, z_batch, &eps)?;
    phases.push(Phase::Discriminator);
    let l_g = generator_phase(state, cfg, x_batch, z_batch)?;
    phases.push(Phase::Generator);
    let losses = StepLosses { l_r, l_w, l_g, l_d };
    state.step += 1;
    state.history.push(losses);
    state.phase_log.push(phases);
    Ok(losses)
}

/// Mean losses over the steps between two evaluations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanLosses {
    pub l_r: Option<f64>,
    pub l_w: Option<f64>,
    pub l_g: f64,
    pub l_d: f64,
}

impl MeanLosses {
    pub fn of(steps: &[StepLosses]) -> Self {
        let n = steps.len().max(1) as f64;
        let opt_mean = |f: fn(&StepLosses) -> Option<f64>| -> Option<f64> {
            let v: Option<Vec<f64>> = steps.iter().map(f).collect();
            v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / n)
        };
        Self {
            l_r: opt_mean(|s| s.l_r),
            l_w: opt_mean(|s| s.l_w),
            l_g: steps.iter().map(|s| s.l_g).sum::<f64>() / n,
            l_d: steps.iter().map(|s| s.l_d).sum::<f64>() / n,
        }
    }
}

/// One evaluation in a run's time series.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub step: u64,
    pub epoch: usize,
    /// `None` when the dataset has no mode grid.
    pub metrics: Option<MetricsReport>,
    pub losses: MeanLosses,
}

/// What an evaluation hook sees.
pub struct EvalContext<'a> {
    pub record: &'a EvalRecord,
    pub state: &'a TrainState,
    pub latents: &'a Tensor,
    pub generated: &'a Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    pub step: u64,
    pub epoch: usize,
    pub message: String,
}

/// Outcome of [`run_experiment`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub evals: Vec<EvalRecord>,
    pub steps: u64,
    pub diverged: Option<Divergence>,
    pub checkpoint: Checkpoint,
}

/// Minibatches per epoch; the final partial batch is dropped.
pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n / batch_size
}

/// Trains for `cfg.epochs` passes over shuffled minibatches, evaluating every
/// `cfg.eval_every` epochs on a fresh set of `cfg.eval.n_samples` generated
/// points. A divergence stops the run and is recorded in the log.
pub fn run_experiment(
    cfg: &TrainConfig,
    dataset: &Dataset,
    hook: &mut dyn FnMut(&EvalContext<'_>) -> Result<()>,
) -> Result<RunLog> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if dataset.dim() != cfg.generator.d_out {
        return Err(Error::Config(format!(
            "dataset dimension {} does not match generator output {}",
            dataset.dim(),
            cfg.generator.d_out
        )));
    }
    let mut state = TrainState::new(cfg)?;
    let evaluator = match &dataset.source {
        DataSource::Grid(grid) => Some(Evaluator::new(grid.clone(), &dataset.samples, cfg.eval.clone())?),
        _ => None,
    };
    let m = cfg.batch_size;
    let per_epoch = steps_per_epoch(dataset.len(), m);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut evals = Vec::new();
    let mut since_eval = 0usize;
    let mut diverged = None;
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut state.train_rng);
        for b in 0..per_epoch {
            let x = dataset.samples.select_rows(&order[b * m..(b + 1) * m])?;
            let z = sample_prior_with(&mut state.prior_rng, cfg.d_z, m);
            match train_step(&mut state, &x, &z, cfg) {
                Ok(_) => since_eval += 1,
                Err(e @ Error::Diverged { .. }) => {
                    diverged = Some(Divergence {
                        step: state.step,
                        epoch,
                        message: e.to_string(),
                    });
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        if epoch % cfg.eval_every == 0 {
            let latents = sample_prior_with(&mut state.eval_rng, cfg.d_z, cfg.eval.n_samples);
            let generated = state.generate(cfg, &latents)?;
            let metrics = evaluator.as_ref().map(|ev| ev.report(&generated)).transpose()?;
            let window = &state.history[state.history.len() - since_eval..];
            let record = EvalRecord {
                step: state.step,
                epoch,
                metrics,
                losses: MeanLosses::of(window),
            };
            since_eval = 0;
            hook(&EvalContext {
                record: &record,
                state: &state,
                latents: &latents,
                generated: &generated,
            })?;
            evals.push(record);
        }
    }
    Ok(RunLog {
        evals,
        steps: state.step,
        diverged,
        checkpoint: state.checkpoint(),
    })
}
