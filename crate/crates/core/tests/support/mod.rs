//! Independent scalar-loop oracles shared by the integration tests.
//!
//! Nothing here calls into the autodiff engine: networks, losses and input
//! gradients are re-derived with plain nested loops on `f64`.

#![allow(dead_code)]

pub mod derived;
pub mod gradcheck;

use distgan_core::nn::{Activation, MlpSpec, ParameterSet};
use distgan_core::objectives::{PenaltyForm, ReconLabel};
use distgan_core::Tensor;
use rand::Rng;

/// Plain-loop copy of an MLP.
#[derive(Clone, Debug)]
pub struct Net {
    /// `(W as fan_in×fan_out rows, b)` per layer.
    pub layers: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
    pub sigmoid_out: bool,
}

impl Net {
    pub fn from_params(spec: &MlpSpec, set: &ParameterSet) -> Self {
        Self::from_tensors(spec, &set.values)
    }

    pub fn from_tensors(spec: &MlpSpec, values: &[Tensor]) -> Self {
        let layers = values
            .chunks(2)
            .map(|wb| {
                let (fi, fo) = (wb[0].shape()[0], wb[0].shape()[1]);
                let w = (0..fi).map(|i| wb[0].data()[i * fo..(i + 1) * fo].to_vec()).collect();
                (w, wb[1].data().to_vec())
            })
            .collect();
        Self {
            layers,
            sigmoid_out: spec.output_activation == Activation::Sigmoid,
        }
    }

    /// Returns `(activated output, raw logits, ReLU masks per hidden layer)`.
    pub fn run(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<Vec<bool>>) {
        let mut h = x.to_vec();
        let mut masks = Vec::new();
        let last = self.layers.len() - 1;
        for (k, (w, b)) in self.layers.iter().enumerate() {
            let mut z = b.clone();
            for (i, hi) in h.iter().enumerate() {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj += hi * w[i][j];
                }
            }
            if k < last {
                masks.push(z.iter().map(|v| *v > 0.0).collect());
                h = z.iter().map(|v| v.max(0.0)).collect();
            } else {
                h = z;
            }
        }
        let out = if self.sigmoid_out { h.iter().map(|v| sigmoid(*v)).collect() } else { h.clone() };
        (out, h, masks)
    }

    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        self.run(x).0
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.run(x).1[0]
    }

    /// Explicit input gradient of the (single) raw logit:
    /// `W_L^T` pulled back through each layer's ReLU mask.
    pub fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        let (_, _, masks) = self.run(x);
        let last = self.layers.len() - 1;
        // g = ∂logit/∂h_k, starting at the output layer's input.
        let mut g: Vec<f64> = self.layers[last].0.iter().map(|row| row[0]).collect();
        for k in (0..last).rev() {
            let g_masked: Vec<f64> = g.iter().zip(&masks[k]).map(|(v, m)| if *m { *v } else { 0.0 }).collect();
            let w = &self.layers[k].0;
            g = w.iter().map(|row| row.iter().zip(&g_masked).map(|(a, b)| a * b).sum()).collect();
        }
        g
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn log_sigmoid(x: f64) -> f64 {
    -(1.0 + (-x).exp()).ln()
}

pub fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn col_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect()
}

/// Batch mean of `‖x − x_rec‖²`.
pub fn recon(x: &[Vec<f64>], x_rec: &[Vec<f64>]) -> f64 {
    let s: f64 = x
        .iter()
        .zip(x_rec)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>())
        .sum();
    s / x.len() as f64
}

/// `(f − λ_w g)²` from already evaluated batches.
pub fn latent_distance(rec: &[Vec<f64>], gz: &[Vec<f64>], ex: &[Vec<f64>], z: &[Vec<f64>], lw: f64) -> f64 {
    let (mr, mg) = (col_means(rec), col_means(gz));
    let f = mean(&mr.iter().zip(&mg).map(|(a, b)| a - b).collect::<Vec<_>>());
    let (me, mz) = (col_means(ex), col_means(z));
    let g = mean(&me.iter().zip(&mz).map(|(a, b)| a - b).collect::<Vec<_>>());
    (f - lw * g).powi(2)
}

pub fn score_distance(real_logits: &[f64], fake_logits: &[f64]) -> f64 {
    let r = mean(&real_logits.iter().map(|v| sigmoid(*v)).collect::<Vec<_>>());
    let f = mean(&fake_logits.iter().map(|v| sigmoid(*v)).collect::<Vec<_>>());
    (r - f).abs()
}

/// Batch mean of the per-sample penalty at fixed points.
pub fn penalty(d: &Net, x_hat: &[Vec<f64>], form: PenaltyForm) -> f64 {
    let v: Vec<f64> = x_hat
        .iter()
        .map(|p| {
            let n2: f64 = d.input_gradient(p).iter().map(|g| g * g).sum();
            match form {
                PenaltyForm::SquaredNorm => (n2 - 1.0).powi(2),
                PenaltyForm::Norm => ((n2 + 1e-12).sqrt() - 1.0).powi(2),
            }
        })
        .collect();
    mean(&v)
}

pub fn interpolate(x: &[Vec<f64>], gz: &[Vec<f64>], eps: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .zip(gz)
        .zip(eps)
        .map(|((a, b), e)| a.iter().zip(b).map(|(p, q)| e * p + (1.0 - e) * q).collect())
        .collect()
}

/// Cross-entropy discriminator objective assembled from its components.
#[allow(clippy::too_many_arguments)]
pub fn disc_loss(
    d: &Net,
    x: &[Vec<f64>],
    gz: &[Vec<f64>],
    rec: &[Vec<f64>],
    label: ReconLabel,
    form: Option<PenaltyForm>,
    lambda_p: f64,
    eps: &[f64],
) -> f64 {
    let real = mean(&x.iter().map(|p| log_sigmoid(d.logit(p))).collect::<Vec<_>>());
    let fake = mean(&gz.iter().map(|p| log_sigmoid(-d.logit(p))).collect::<Vec<_>>());
    let c = match label {
        ReconLabel::Real => mean(&rec.iter().map(|p| log_sigmoid(d.logit(p))).collect::<Vec<_>>()),
        ReconLabel::Fake => mean(&rec.iter().map(|p| log_sigmoid(-d.logit(p))).collect::<Vec<_>>()),
        ReconLabel::None => 0.0,
    };
    let p = form.map_or(0.0, |f| penalty(d, &interpolate(x, gz, eps), f));
    -(real + fake + c - lambda_p * p)
}

/// Central differences of `f` with respect to every entry of `params`.
pub fn finite_differences(params: &[Tensor], h: f64, f: impl Fn(&[Tensor]) -> f64) -> Vec<Tensor> {
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let mut g = Tensor::zeros(params[k].shape());
        for i in 0..params[k].len() {
            let orig = params[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let up = f(&work);
            work[k].data_mut()[i] = orig - h;
            let down = f(&work);
            work[k].data_mut()[i] = orig;
            g.data_mut()[i] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Relative error with an absolute floor, `|a − n| / max(|a|, |n|, floor)`,
/// so that gradients that vanish up to rounding do not dominate.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

pub fn max_rel_err(a: &[Tensor], n: &[Tensor], floor: f64) -> f64 {
    a.iter()
        .zip(n)
        .flat_map(|(x, y)| x.data().iter().zip(y.data()).map(|(p, q)| rel_err(*p, *q, floor)))
        .fold(0.0, f64::max)
}

/// Absolute floor used in [`rel_err`] by the gradient checks.
pub const FD_FLOOR: f64 = 1e-4;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

pub fn random_matrix(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Random parameters with non-zero biases so that ReLU kinks are generic.
pub fn random_params(rng: &mut impl Rng, spec: &MlpSpec) -> Vec<Tensor> {
    spec.layer_dims()
        .into_iter()
        .flat_map(|(fi, fo)| {
            let s = (2.0 / fi as f64).sqrt();
            [random_matrix(rng, fi, fo, s), random_matrix(rng, 1, fo, 0.5)]
        })
        .collect()
}

pub fn set_from(values: Vec<Tensor>) -> ParameterSet {
    let n = values.len();
    ParameterSet {
        names: (0..n).map(|i| format!("p{i}")).collect(),
        adam: distgan_core::nn::AdamState::zeros_like(&values),
        values,
    }
}

/// Smallest distance of any hidden pre-activation to the ReLU kink, over a
/// set of inputs.
pub fn kink_margin(net: &Net, inputs: &[Vec<f64>]) -> f64 {
    let mut m = f64::INFINITY;
    for x in inputs {
        let mut h = x.clone();
        let last = net.layers.len() - 1;
        for (k, (w, b)) in net.layers.iter().enumerate() {
            let mut z = b.clone();
            for (i, hi) in h.iter().enumerate() {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj += hi * w[i][j];
                }
            }
            if k < last {
                m = z.iter().fold(m, |a, v| a.min(v.abs()));
                h = z.iter().map(|v| v.max(0.0)).collect();
            }
        }
    }
    m
}
