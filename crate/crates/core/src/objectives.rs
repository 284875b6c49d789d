//! Loss terms: reconstruction, latent-data distance, discriminator-score
//! distance, the reconstruction-aware discriminator objective, the input
//! gradient penalty, and the baseline GAN / WGAN-GP losses.
//!
//! Expectations are minibatch means. Every `log σ(·)` is evaluated from raw
//! logits with a stable log-sigmoid, and `log(1 − σ(d))` as `log σ(−d)`.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Graph, Mode, Var};
use crate::error::{Error, Result};
use crate::nn::BoundMlp;
use crate::tensor::Tensor;

/// Anything that maps a batch to raw discriminator scores (`B×1` logits).
pub trait Critic {
    fn logits(&self, graph: &mut Graph, batch: Var) -> Result<Var>;
}

impl Critic for BoundMlp {
    fn logits(&self, graph: &mut Graph, batch: Var) -> Result<Var> {
        Ok(self.forward(graph, batch)?.logits)
    }
}

impl<F: Fn(&mut Graph, Var) -> Result<Var>> Critic for F {
    fn logits(&self, graph: &mut Graph, batch: Var) -> Result<Var> {
        self(graph, batch)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyCoefficients {
    /// Weight of the latent-data distance in the autoencoder objective.
    pub lambda_r: f64,
    /// Weight of the gradient penalty in the discriminator objective.
    pub lambda_p: f64,
    /// Scale between latent and data matching scores.
    pub lambda_w: f64,
}

impl Default for PenaltyCoefficients {
    fn default() -> Self {
        Self {
            lambda_r: 0.1,
            lambda_p: 0.1,
            lambda_w: 1.0,
        }
    }
}

impl PenaltyCoefficients {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda_r, self.lambda_p, self.lambda_w]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
        {
            Ok(())
        } else {
            Err(Error::Config(format!("penalty coefficients must be >= 0: {self:?}")))
        }
    }
}

/// How autoencoder reconstructions enter the discriminator objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReconLabel {
    Real,
    Fake,
    None,
}

impl fmt::Display for ReconLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReconLabel::Real => "real",
            ReconLabel::Fake => "fake",
            ReconLabel::None => "none",
        })
    }
}

impl FromStr for ReconLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(ReconLabel::Real),
            "fake" => Ok(ReconLabel::Fake),
            "none" => Ok(ReconLabel::None),
            _ => Err(Error::Config(format!("unknown reconstruction label `{s}`"))),
        }
    }
}

/// Deviation measured by the gradient penalty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PenaltyForm {
    /// `(‖∇‖² − 1)²`
    SquaredNorm,
    /// `(‖∇‖ − 1)²`
    Norm,
}

impl fmt::Display for PenaltyForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyForm::SquaredNorm => "squared-norm",
            PenaltyForm::Norm => "norm",
        })
    }
}

impl FromStr for PenaltyForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared-norm" => Ok(PenaltyForm::SquaredNorm),
            "norm" => Ok(PenaltyForm::Norm),
            _ => Err(Error::Config(format!("unknown penalty form `{s}`"))),
        }
    }
}

/// Mean over all entries.
pub fn md_reduce(graph: &mut Graph, v: Var) -> Result<Var> {
    if graph.value(v).is_empty() {
        return Err(Error::Empty("md_reduce"));
    }
    graph.mean_all(v)
}

/// Per-sample mean over the feature axis, `B×d → B`.
pub fn md_reduce_rows(samples: &Tensor) -> Result<Vec<f64>> {
    let (r, c) = samples.require_matrix("md_reduce_rows")?;
    if c == 0 {
        return Err(Error::Empty("md_reduce_rows"));
    }
    Ok((0..r)
        .map(|i| samples.row(i).iter().sum::<f64>() / c as f64)
        .collect())
}

/// `√(d_z / d_x)`.
pub fn lambda_w(d_z: usize, d_x: usize) -> f64 {
    (d_z as f64 / d_x as f64).sqrt()
}

fn require_rows(graph: &Graph, v: Var, what: &'static str) -> Result<usize> {
    let (r, _) = graph.value(v).require_matrix(what)?;
    if r == 0 {
        return Err(Error::Empty(what));
    }
    Ok(r)
}

/// Batch mean of the squared Euclidean distance between `x` and `x_rec`.
pub fn reconstruction_loss(graph: &mut Graph, x: Var, x_rec: Var) -> Result<Var> {
    let b = require_rows(graph, x, "reconstruction_loss")?;
    let d = graph.sub(x, x_rec)?;
    let sq = graph.square(d)?;
    let s = graph.sum_all(sq)?;
    graph.scale(s, 1.0 / b as f64)
}

/// Network outputs that feed the latent-data distance.
#[derive(Clone, Copy, Debug)]
pub struct LatentDataTerms {
    /// `G(E(x))`
    pub reconstructed: Var,
    /// `G(z)`
    pub generated: Var,
    /// `E(x)`
    pub encoded: Var,
    /// `z`
    pub latent: Var,
}

/// `(f − λ_w·g)²` with `f = M_d(mean G(E(x)) − mean G(z))` and
/// `g = M_d(mean E(x) − mean z)`.
pub fn latent_data_distance(graph: &mut Graph, terms: LatentDataTerms, lambda_w: f64) -> Result<Var> {
    let n = require_rows(graph, terms.reconstructed, "latent_data_distance")?;
    let m = require_rows(graph, terms.generated, "latent_data_distance")?;
    require_rows(graph, terms.encoded, "latent_data_distance")?;
    require_rows(graph, terms.latent, "latent_data_distance")?;
    if n != m {
        return Err(Error::ShapeMismatch {
            op: "latent_data_distance",
            lhs: graph.shape(terms.reconstructed).to_vec(),
            rhs: graph.shape(terms.generated).to_vec(),
        });
    }
    let mean_rec = graph.mean_axis(terms.reconstructed, 0)?;
    let mean_gen = graph.mean_axis(terms.generated, 0)?;
    let data_diff = graph.sub(mean_rec, mean_gen)?;
    let f = md_reduce(graph, data_diff)?;
    let mean_enc = graph.mean_axis(terms.encoded, 0)?;
    let mean_z = graph.mean_axis(terms.latent, 0)?;
    let latent_diff = graph.sub(mean_enc, mean_z)?;
    let g = md_reduce(graph, latent_diff)?;
    let scaled = graph.scale(g, lambda_w)?;
    let d = graph.sub(f, scaled)?;
    graph.square(d)
}

/// `|mean σ(real) − mean σ(fake)|` on raw logits.
pub fn score_distance_from_logits(graph: &mut Graph, real_logits: Var, fake_logits: Var) -> Result<Var> {
    require_rows(graph, real_logits, "generator_loss")?;
    require_rows(graph, fake_logits, "generator_loss")?;
    let sr = graph.sigmoid(real_logits)?;
    let sr = graph.mean_all(sr)?;
    let sf = graph.sigmoid(fake_logits)?;
    let sf = graph.mean_all(sf)?;
    let d = graph.sub(sr, sf)?;
    graph.abs(d)
}

/// Discriminator-score distance `|E σ(D(x)) − E σ(D(G(z)))|`.
pub fn generator_loss(graph: &mut Graph, critic: &impl Critic, x: Var, gz: Var) -> Result<Var> {
    let lr = critic.logits(graph, x)?;
    let lf = critic.logits(graph, gz)?;
    score_distance_from_logits(graph, lr, lf)
}

/// `x̂_i = ε_i·x_i + (1 − ε_i)·gz_i`, one ε per sample.
pub fn interpolate(x: &Tensor, gz: &Tensor, eps: &[f64]) -> Result<Tensor> {
    let (r, c) = x.require_matrix("interpolate")?;
    if gz.shape() != x.shape() || eps.len() != r {
        return Err(Error::ShapeMismatch {
            op: "interpolate",
            lhs: x.shape().to_vec(),
            rhs: gz.shape().to_vec(),
        });
    }
    let mut data = Vec::with_capacity(r * c);
    for (i, &e) in eps.iter().enumerate() {
        for (a, b) in x.row(i).iter().zip(gz.row(i)) {
            data.push(e * a + (1.0 - e) * b);
        }
    }
    Tensor::matrix(r, c, data)
}

/// Small constant inside the square root of the plain-norm penalty so its
/// derivative stays finite at a zero gradient.
pub const NORM_EPS: f64 = 1e-12;

/// Batch mean of the per-sample deviation of `‖∇_x̂ D(x̂)‖` from 1, measured
/// on raw logits at the fixed points `x_hat`.
pub fn gradient_penalty(
    graph: &mut Graph,
    critic: &impl Critic,
    x_hat: &Tensor,
    form: PenaltyForm,
) -> Result<Var> {
    if graph.mode() != Mode::HigherOrder {
        return Err(Error::FirstOrderGraph);
    }
    let xh = graph.variable(x_hat.clone())?;
    require_rows(graph, xh, "gradient_penalty")?;
    let logits = critic.logits(graph, xh)?;
    // Samples do not interact, so the gradient of the summed logits holds
    // every per-sample input gradient.
    let total = graph.sum_all(logits)?;
    let grad = graph.input_gradient(total, xh)?;
    let sq = graph.square(grad)?;
    let norm2 = graph.sum_cols(sq)?;
    let dev = match form {
        PenaltyForm::SquaredNorm => graph.add_scalar(norm2, -1.0)?,
        PenaltyForm::Norm => {
            let shifted = graph.add_scalar(norm2, NORM_EPS)?;
            let norm = graph.sqrt(shifted)?;
            graph.add_scalar(norm, -1.0)?
        }
    };
    let p = graph.square(dev)?;
    graph.mean_all(p)
}

/// Loss family of the discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CriticLoss {
    /// Binary cross-entropy on σ(logits).
    CrossEntropy,
    /// Mean-difference critic on raw outputs.
    Wasserstein,
}

/// Which terms make up a discriminator objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscriminatorSpec {
    pub loss: CriticLoss,
    pub recon_label: ReconLabel,
    /// Gradient penalty form, or `None` for no penalty.
    pub penalty: Option<PenaltyForm>,
    pub lambda_p: f64,
}

impl DiscriminatorSpec {
    pub fn cross_entropy(recon_label: ReconLabel, penalty: Option<PenaltyForm>, lambda_p: f64) -> Self {
        Self {
            loss: CriticLoss::CrossEntropy,
            recon_label,
            penalty,
            lambda_p,
        }
    }
}

/// Discriminator objective and its components.
#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorLoss {
    pub total: Var,
    /// `mean log σ(D(x))`, or `mean D(x)` for the Wasserstein critic.
    pub real_term: Var,
    /// `mean log(1 − σ(D(G(z))))`, or `mean D(G(z))`.
    pub fake_term: Var,
    /// Reconstruction term `L_C`, when reconstructions are labelled.
    pub recon_term: Option<Var>,
    /// Unweighted gradient penalty `L_P`.
    pub penalty: Option<Var>,
}

/// Assembles a discriminator objective from raw logits and an optional,
/// already evaluated penalty.
///
/// Cross-entropy: `−(real + fake + recon − λ_p·L_P)`.
/// Wasserstein: `mean D(G(z)) − mean D(x) + λ_p·L_P`.
pub fn discriminator_loss_from_logits(
    graph: &mut Graph,
    spec: &DiscriminatorSpec,
    real_logits: Var,
    fake_logits: Var,
    recon_logits: Option<Var>,
    penalty: Option<Var>,
) -> Result<DiscriminatorLoss> {
    require_rows(graph, real_logits, "discriminator_loss")?;
    require_rows(graph, fake_logits, "discriminator_loss")?;
    if spec.penalty.is_some() != penalty.is_some() {
        return Err(Error::Config(
            "penalty value must be supplied exactly when the objective uses one".into(),
        ));
    }
    match spec.loss {
        CriticLoss::CrossEntropy => {
            let lr = graph.log_sigmoid(real_logits)?;
            let real_term = graph.mean_all(lr)?;
            let nf = graph.neg(fake_logits)?;
            let lf = graph.log_sigmoid(nf)?;
            let fake_term = graph.mean_all(lf)?;
            let recon_term = match spec.recon_label {
                ReconLabel::None => None,
                label => {
                    let rl = recon_logits.ok_or_else(|| {
                        Error::Config(format!("reconstructions labelled `{label}` but none given"))
                    })?;
                    require_rows(graph, rl, "discriminator_loss")?;
                    let arg = if label == ReconLabel::Real { rl } else { graph.neg(rl)? };
                    let l = graph.log_sigmoid(arg)?;
                    Some(graph.mean_all(l)?)
                }
            };
            let mut inner = graph.add(real_term, fake_term)?;
            if let Some(r) = recon_term {
                inner = graph.add(inner, r)?;
            }
            if let Some(p) = penalty {
                let wp = graph.scale(p, spec.lambda_p)?;
                inner = graph.sub(inner, wp)?;
            }
            let total = graph.neg(inner)?;
            Ok(DiscriminatorLoss {
                total,
                real_term,
                fake_term,
                recon_term,
                penalty,
            })
        }
        CriticLoss::Wasserstein => {
            if spec.recon_label != ReconLabel::None {
                return Err(Error::Config("the Wasserstein critic takes no reconstructions".into()));
            }
            let real_term = graph.mean_all(real_logits)?;
            let fake_term = graph.mean_all(fake_logits)?;
            let mut total = graph.sub(fake_term, real_term)?;
            if let Some(p) = penalty {
                let wp = graph.scale(p, spec.lambda_p)?;
                total = graph.add(total, wp)?;
            }
            Ok(DiscriminatorLoss {
                total,
                real_term,
                fake_term,
                recon_term: None,
                penalty,
            })
        }
    }
}

/// Full discriminator objective. The penalty is evaluated at
/// [`interpolate`]`(x, gz, eps)`; `eps` is ignored when `spec` has no
/// penalty.
pub fn discriminator_loss(
    graph: &mut Graph,
    critic: &impl Critic,
    spec: &DiscriminatorSpec,
    x: Var,
    gz: Var,
    x_rec: Option<Var>,
    eps: &[f64],
) -> Result<DiscriminatorLoss> {
    let real = critic.logits(graph, x)?;
    let fake = critic.logits(graph, gz)?;
    let recon = match (spec.recon_label, x_rec) {
        (ReconLabel::None, _) => None,
        (_, Some(xr)) => Some(critic.logits(graph, xr)?),
        (label, None) => {
            return Err(Error::Config(format!(
                "reconstructions labelled `{label}` but none given"
            )))
        }
    };
    let penalty = match spec.penalty {
        Some(form) => {
            let x_hat = interpolate(graph.value(x), graph.value(gz), eps)?;
            Some(gradient_penalty(graph, critic, &x_hat, form)?)
        }
        None => None,
    };
    discriminator_loss_from_logits(graph, spec, real, fake, recon, penalty)
}

/// Generator objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GeneratorLoss {
    /// `|E σ(D(x)) − E σ(D(G(z)))|`
    ScoreDistance,
    /// `−E log σ(D(G(z)))`
    NonSaturating,
    /// `−E D(G(z))`
    Wasserstein,
}

pub fn generator_loss_from_logits(
    graph: &mut Graph,
    kind: GeneratorLoss,
    real_logits: Option<Var>,
    fake_logits: Var,
) -> Result<Var> {
    match kind {
        GeneratorLoss::ScoreDistance => {
            let real = real_logits
                .ok_or_else(|| Error::Config("score distance needs real logits".into()))?;
            score_distance_from_logits(graph, real, fake_logits)
        }
        GeneratorLoss::NonSaturating => {
            require_rows(graph, fake_logits, "generator_loss")?;
            let l = graph.log_sigmoid(fake_logits)?;
            let m = graph.mean_all(l)?;
            graph.neg(m)
        }
        GeneratorLoss::Wasserstein => {
            require_rows(graph, fake_logits, "generator_loss")?;
            let m = graph.mean_all(fake_logits)?;
            graph.neg(m)
        }
    }
}

/// Baseline adversarial setups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    /// Cross-entropy discriminator, non-saturating generator.
    VanillaGan,
    /// Vanilla discriminator, score-distance generator.
    Gan1,
    /// `Gan1` plus the squared-norm gradient penalty.
    Gan2,
    /// Mean-difference critic with the plain-norm penalty.
    WganGp,
}

impl BaselineKind {
    pub fn generator(self) -> GeneratorLoss {
        match self {
            BaselineKind::VanillaGan => GeneratorLoss::NonSaturating,
            BaselineKind::Gan1 | BaselineKind::Gan2 => GeneratorLoss::ScoreDistance,
            BaselineKind::WganGp => GeneratorLoss::Wasserstein,
        }
    }

    pub fn discriminator(self, lambda_p: f64) -> DiscriminatorSpec {
        match self {
            BaselineKind::VanillaGan | BaselineKind::Gan1 => {
                DiscriminatorSpec::cross_entropy(ReconLabel::None, None, lambda_p)
            }
            BaselineKind::Gan2 => {
                DiscriminatorSpec::cross_entropy(ReconLabel::None, Some(PenaltyForm::SquaredNorm), lambda_p)
            }
            BaselineKind::WganGp => DiscriminatorSpec {
                loss: CriticLoss::Wasserstein,
                recon_label: ReconLabel::None,
                penalty: Some(PenaltyForm::Norm),
                lambda_p,
            },
        }
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla-gan" | "gan" => Ok(BaselineKind::VanillaGan),
            "gan1" => Ok(BaselineKind::Gan1),
            "gan2" => Ok(BaselineKind::Gan2),
            "wgan-gp" => Ok(BaselineKind::WganGp),
            _ => Err(Error::UnknownVariant(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdversarialLosses {
    pub generator: Var,
    pub discriminator: DiscriminatorLoss,
}

/// Generator and discriminator losses of a baseline on one batch pair.
pub fn baseline_losses(
    graph: &mut Graph,
    kind: BaselineKind,
    critic: &impl Critic,
    x: Var,
    gz: Var,
    eps: &[f64],
    lambda_p: f64,
) -> Result<AdversarialLosses> {
    let spec = kind.discriminator(lambda_p);
    let discriminator = discriminator_loss(graph, critic, &spec, x, gz, None, eps)?;
    let real = critic.logits(graph, x)?;
    let fake = critic.logits(graph, gz)?;
    let generator = generator_loss_from_logits(graph, kind.generator(), Some(real), fake)?;
    Ok(AdversarialLosses {
        generator,
        discriminator,
    })
}
