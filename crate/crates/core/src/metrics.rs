//! Mode-collapse evaluation: mode registration, registered modes/points,
//! total variation against a reference mode distribution, smoothed KL
//! divergences and `M_d` frequency densities.

use crate::data::GaussianGrid;
use crate::error::{Error, Result};
use crate::objectives::md_reduce_rows;
use crate::tensor::Tensor;

/// Nearest-mode label of every sample (`None` = unregistered) and the
/// per-mode counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeAssignment {
    pub labels: Vec<Option<usize>>,
    pub counts: Vec<usize>,
}

impl ModeAssignment {
    pub fn total(&self) -> usize {
        self.labels.len()
    }

    pub fn registered(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn n_modes(&self) -> usize {
        self.counts.len()
    }

    /// `count_i / total`; unregistered samples keep their share of the
    /// denominator. All zeros for an empty set.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.total();
        self.counts
            .iter()
            .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
            .collect()
    }

    /// `count_i / registered`, or all zeros when nothing registered.
    pub fn registered_frequencies(&self) -> Vec<f64> {
        let r = self.registered();
        self.counts
            .iter()
            .map(|&c| if r == 0 { 0.0 } else { c as f64 / r as f64 })
            .collect()
    }
}

/// Default registration radius in units of σ.
pub const DEFAULT_K_SIGMA: f64 = 3.0;
/// Default minimum count for a mode to count as covered.
pub const DEFAULT_MIN_COUNT: usize = 20;
/// Default KL smoothing.
pub const DEFAULT_SMOOTHING: f64 = 1e-6;

/// Assigns each row of `samples` to its nearest mean when that mean lies
/// within `k_sigma·σ` (inclusive). Ties go to the lower mode index.
pub fn register(samples: &Tensor, grid: &GaussianGrid, k_sigma: f64) -> Result<ModeAssignment> {
    let (n, d) = samples.require_matrix("register")?;
    if d != 2 {
        return Err(Error::InvalidShape {
            shape: samples.shape().to_vec(),
            reason: "registration needs 2-D samples".into(),
        });
    }
    if !(k_sigma > 0.0) {
        return Err(Error::Config(format!("k_sigma must be > 0, got {k_sigma}")));
    }
    let radius2 = (k_sigma * grid.sigma).powi(2);
    let mut counts = vec![0usize; grid.n_modes()];
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let p = samples.row(i);
        let mut best: Option<(usize, f64)> = None;
        for (k, m) in grid.means.iter().enumerate() {
            let d2 = (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2);
            if best.is_none_or(|(_, b)| d2 < b) {
                best = Some((k, d2));
            }
        }
        let label = best.filter(|&(_, d2)| d2 <= radius2).map(|(k, _)| k);
        if let Some(k) = label {
            counts[k] += 1;
        }
        labels.push(label);
    }
    Ok(ModeAssignment { labels, counts })
}

/// Number of modes holding at least `min_count` samples.
pub fn count_registered_modes(a: &ModeAssignment, min_count: usize) -> usize {
    a.counts.iter().filter(|&&c| c >= min_count).count()
}

/// Reference mode distribution for total variation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TvKind {
    /// Uniform over modes.
    True,
    /// Empirical mode frequencies of the training set.
    Differential,
}

/// `1/n` for every mode.
pub fn uniform_reference(n_modes: usize) -> Vec<f64> {
    vec![1.0 / n_modes as f64; n_modes]
}

/// Registered mode frequencies of a (training) set, normalised to sum to 1.
pub fn empirical_reference(a: &ModeAssignment) -> Vec<f64> {
    a.registered_frequencies()
}

fn check_reference(a: &ModeAssignment, q: &[f64]) -> Result<()> {
    if q.len() != a.n_modes() {
        return Err(Error::ShapeMismatch {
            op: "mode reference",
            lhs: vec![a.n_modes()],
            rhs: vec![q.len()],
        });
    }
    Ok(())
}

/// `Σ_i |count_i/total − q_i|`.
pub fn total_variation(a: &ModeAssignment, q: &[f64]) -> Result<f64> {
    check_reference(a, q)?;
    Ok(a.frequencies().iter().zip(q).map(|(p, q)| (p - q).abs()).sum())
}

/// Smoothed discrete KL divergence `Σ p log(p/q)` after adding `eps` to every
/// entry of both distributions and renormalising.
pub fn kl_divergence(p: &[f64], q: &[f64], eps: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch {
            op: "kl_divergence",
            lhs: vec![p.len()],
            rhs: vec![q.len()],
        });
    }
    if p.is_empty() {
        return Err(Error::Empty("kl_divergence"));
    }
    if !(eps > 0.0) {
        return Err(Error::Config(format!("smoothing must be > 0, got {eps}")));
    }
    let smooth = |v: &[f64]| {
        let s: f64 = v.iter().map(|x| x + eps).sum();
        v.iter().map(|x| (x + eps) / s).collect::<Vec<_>>()
    };
    let (ps, qs) = (smooth(p), smooth(q));
    // Clamp rounding noise so the result honours KL ≥ 0.
    Ok(ps
        .iter()
        .zip(&qs)
        .map(|(a, b)| a * (a / b).ln())
        .sum::<f64>()
        .max(0.0))
}

/// KL of the registered mode frequencies against `q`.
pub fn kl_mode_frequency(a: &ModeAssignment, q: &[f64], eps: f64) -> Result<f64> {
    check_reference(a, q)?;
    kl_divergence(&a.registered_frequencies(), q, eps)
}

/// Normalised histogram on `[lo, hi]` with equal-width bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    pub fn same_binning(&self, other: &Histogram) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.bins() == other.bins()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    /// Left edge of every bin plus the right edge of the last.
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins())
            .map(|i| self.lo + i as f64 * self.bin_width())
            .collect()
    }
}

/// Histogram of `values`; values outside the range land in the edge bins.
/// Masses are all zero when `values` is empty.
pub fn histogram(values: &[f64], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config(format!("invalid histogram range [{lo}, {hi}]")));
    }
    let mut counts = vec![0usize; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let i = ((v - lo) / width).floor();
        let i = if i.is_nan() || i < 0.0 { 0 } else { (i as usize).min(bins - 1) };
        counts[i] += 1;
    }
    let n = values.len();
    let masses = counts
        .iter()
        .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect();
    Ok(Histogram { lo, hi, masses })
}

/// Histogram of the per-sample `M_d` reduction of `samples`.
pub fn density_1d(samples: &Tensor, bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (n, _) = samples.require_matrix("density_1d")?;
    let values = if n == 0 { Vec::new() } else { md_reduce_rows(samples)? };
    histogram(&values, bins, range)
}

/// Smoothed `KL(generated ‖ real)` between two histograms of equal binning.
pub fn kl_1d(generated: &Histogram, real: &Histogram, eps: f64) -> Result<f64> {
    if !generated.same_binning(real) {
        return Err(Error::Config(format!(
            "histogram binning differs: [{}, {}]/{} vs [{}, {}]/{}",
            generated.lo,
            generated.hi,
            generated.bins(),
            real.lo,
            real.hi,
            real.bins()
        )));
    }
    kl_divergence(&generated.masses, &real.masses, eps)
}

/// Labels every latent point by the mode its generated sample registers to.
pub fn latent_label_assignment(
    generator: impl FnOnce(&Tensor) -> Result<Tensor>,
    grid: &GaussianGrid,
    latents: &Tensor,
    k_sigma: f64,
) -> Result<ModeAssignment> {
    let out = generator(latents)?;
    if out.rows() != latents.rows() {
        return Err(Error::ShapeMismatch {
            op: "latent_label_assignment",
            lhs: latents.shape().to_vec(),
            rhs: out.shape().to_vec(),
        });
    }
    register(&out, grid, k_sigma)
}

/// Settings shared by every evaluation of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Generated samples drawn per evaluation.
    pub n_samples: usize,
    pub k_sigma: f64,
    pub min_count: usize,
    pub smoothing: f64,
    pub bins: usize,
    pub range: (f64, f64),
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            k_sigma: DEFAULT_K_SIGMA,
            min_count: DEFAULT_MIN_COUNT,
            smoothing: DEFAULT_SMOOTHING,
            bins: 100,
            range: (-5.0, 5.0),
        }
    }
}

/// One evaluation snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub registered_modes: usize,
    pub registered_points: usize,
    pub tv_true: f64,
    pub tv_differential: f64,
    pub kl_modes: f64,
    pub kl_1d: f64,
    pub histogram_1d: Histogram,
}

/// Precomputes the training-set references once per run.
#[derive(Clone, Debug)]
pub struct Evaluator {
    pub grid: GaussianGrid,
    pub config: EvalConfig,
    pub training_reference: Vec<f64>,
    pub real_histogram: Histogram,
}

impl Evaluator {
    pub fn new(grid: GaussianGrid, training: &Tensor, config: EvalConfig) -> Result<Self> {
        let a = register(training, &grid, config.k_sigma)?;
        let training_reference = empirical_reference(&a);
        let real_histogram = density_1d(training, config.bins, config.range)?;
        Ok(Self {
            grid,
            config,
            training_reference,
            real_histogram,
        })
    }

    pub fn reference(&self, kind: TvKind) -> Vec<f64> {
        match kind {
            TvKind::True => uniform_reference(self.grid.n_modes()),
            TvKind::Differential => self.training_reference.clone(),
        }
    }

    pub fn report(&self, generated: &Tensor) -> Result<MetricsReport> {
        let c = &self.config;
        let a = register(generated, &self.grid, c.k_sigma)?;
        let uniform = self.reference(TvKind::True);
        let hist = density_1d(generated, c.bins, c.range)?;
        Ok(MetricsReport {
            registered_modes: count_registered_modes(&a, c.min_count),
            registered_points: a.registered(),
            tv_true: total_variation(&a, &uniform)?,
            tv_differential: total_variation(&a, &self.reference(TvKind::Differential))?,
            kl_modes: kl_mode_frequency(&a, &uniform, c.smoothing)?,
            kl_1d: kl_1d(&hist, &self.real_histogram, c.smoothing)?,
            histogram_1d: hist,
        })
    }
}
