//! Autodiff gradients of every loss against central differences of the
//! scalar-loop oracles, on one random configuration.

use distgan_core::nn::{Activation, BoundMlp, MlpSpec};
use distgan_core::objectives::{
    discriminator_loss, generator_loss, gradient_penalty, interpolate, latent_data_distance,
    reconstruction_loss, DiscriminatorSpec, LatentDataTerms, PenaltyForm, ReconLabel,
};
use distgan_core::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Worst relative error per loss for one configuration.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub description: String,
    pub l_r: f64,
    pub l_w: f64,
    pub l_g: f64,
    pub l_d: f64,
    pub l_p_squared: f64,
    pub l_p_norm: f64,
    /// Largest absolute difference between engine and oracle loss values.
    pub value_err: f64,
}

impl GradCheck {
    pub fn first_order_max(&self) -> f64 {
        self.l_r.max(self.l_w).max(self.l_g).max(self.l_d)
    }

    pub fn penalty_max(&self) -> f64 {
        self.l_p_squared.max(self.l_p_norm)
    }
}

struct Config {
    e: MlpSpec,
    g: MlpSpec,
    d: MlpSpec,
    pe: Vec<Tensor>,
    pg: Vec<Tensor>,
    pd: Vec<Tensor>,
    x: Tensor,
    z: Tensor,
    eps: Vec<f64>,
    lw: f64,
    label: ReconLabel,
}

fn draw(rng: &mut ChaCha8Rng) -> Config {
    let d_x = rng.random_range(1..=3);
    let d_z = rng.random_range(1..=3);
    let mut spec = |d_in, d_out, act| MlpSpec {
        d_in,
        d_out,
        n_hidden: rng.random_range(1..=3),
        d_hidden: rng.random_range(1..=32),
        output_activation: act,
    };
    let e = spec(d_x, d_z, Activation::Identity);
    let g = spec(d_z, d_x, Activation::Identity);
    let d = spec(d_x, 1, Activation::Sigmoid);
    let b = rng.random_range(1..=8);
    Config {
        pe: random_params(rng, &e),
        pg: random_params(rng, &g),
        pd: random_params(rng, &d),
        x: random_matrix(rng, b, d_x, 2.0),
        z: random_matrix(rng, b, d_z, 1.0),
        eps: (0..b).map(|_| rng.random::<f64>()).collect(),
        lw: rng.random_range(0.5..2.0),
        label: [ReconLabel::Real, ReconLabel::Fake, ReconLabel::None][rng.random_range(0..3)],
        e,
        g,
        d,
    }
}

fn outputs(net: &Net, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    inputs.iter().map(|x| net.output(x)).collect()
}

/// Minimum distance from the ReLU kinks (and from the `|·|` kink of the
/// score distance) over everything the losses evaluate.
fn margin(c: &Config) -> f64 {
    let (e, g, d) = (
        Net::from_tensors(&c.e, &c.pe),
        Net::from_tensors(&c.g, &c.pg),
        Net::from_tensors(&c.d, &c.pd),
    );
    let x = rows(&c.x);
    let z = rows(&c.z);
    let ex = outputs(&e, &x);
    let rec = outputs(&g, &ex);
    let gz = outputs(&g, &z);
    let xh = interpolate_rows(&x, &gz, &c.eps);
    let score = {
        let r: Vec<f64> = x.iter().map(|p| d.logit(p)).collect();
        let f: Vec<f64> = gz.iter().map(|p| d.logit(p)).collect();
        score_distance(&r, &f)
    };
    kink_margin(&e, &x)
        .min(kink_margin(&g, &ex))
        .min(kink_margin(&g, &z))
        .min(kink_margin(&d, &x))
        .min(kink_margin(&d, &gz))
        .min(kink_margin(&d, &rec))
        .min(kink_margin(&d, &xh))
        .min(score)
}

fn interpolate_rows(x: &[Vec<f64>], gz: &[Vec<f64>], eps: &[f64]) -> Vec<Vec<f64>> {
    super::interpolate(x, gz, eps)
}

/// Minimum kink margin accepted before differencing.
pub const KINK_MARGIN: f64 = 1e-3;

/// Draws configurations from `seed` until one keeps every ReLU input and the
/// score difference at least [`KINK_MARGIN`] away from zero, then compares
/// gradients.
pub fn check(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = loop {
        let c = draw(&mut rng);
        if margin(&c) > KINK_MARGIN {
            break c;
        }
    };
    let x = rows(&c.x);
    let z = rows(&c.z);
    let ne = c.pe.len();
    let mut value_err = 0.0f64;

    // L_R and L_W with respect to encoder and generator parameters.
    let eg: Vec<Tensor> = c.pe.iter().chain(&c.pg).cloned().collect();
    let ae_oracle = |p: &[Tensor], with_w: bool| {
        let e = Net::from_tensors(&c.e, &p[..ne]);
        let g = Net::from_tensors(&c.g, &p[ne..]);
        let ex = outputs(&e, &x);
        let rec = outputs(&g, &ex);
        if with_w {
            latent_distance(&rec, &outputs(&g, &z), &ex, &z, c.lw)
        } else {
            recon(&x, &rec)
        }
    };
    let mut ae_engine = |with_w: bool| {
        let mut gr = Graph::first_order();
        let e = BoundMlp::bind(&mut gr, c.e, &set_from(c.pe.clone())).unwrap();
        let g = BoundMlp::bind(&mut gr, c.g, &set_from(c.pg.clone())).unwrap();
        let xv = gr.constant(c.x.clone()).unwrap();
        let zv = gr.constant(c.z.clone()).unwrap();
        let ex = e.apply(&mut gr, xv).unwrap();
        let rec = g.apply(&mut gr, ex).unwrap();
        let loss = if with_w {
            let gz = g.apply(&mut gr, zv).unwrap();
            let t = LatentDataTerms {
                reconstructed: rec,
                generated: gz,
                encoded: ex,
                latent: zv,
            };
            latent_data_distance(&mut gr, t, c.lw).unwrap()
        } else {
            reconstruction_loss(&mut gr, xv, rec).unwrap()
        };
        value_err = value_err.max((gr.item(loss).unwrap() - ae_oracle(&eg, with_w)).abs());
        let targets: Vec<_> = e.params.iter().chain(&g.params).copied().collect();
        gr.backward(loss, &targets).unwrap()
    };
    let l_r = max_rel_err(&ae_engine(false), &finite_differences(&eg, FD_STEP, |p| ae_oracle(p, false)), FD_FLOOR);
    let l_w = max_rel_err(&ae_engine(true), &finite_differences(&eg, FD_STEP, |p| ae_oracle(p, true)), FD_FLOOR);

    // L_G with respect to generator parameters, discriminator fixed.
    let dnet = Net::from_tensors(&c.d, &c.pd);
    let real_logits: Vec<f64> = x.iter().map(|p| dnet.logit(p)).collect();
    let lg_oracle = |p: &[Tensor]| {
        let g = Net::from_tensors(&c.g, p);
        let fake: Vec<f64> = outputs(&g, &z).iter().map(|q| dnet.logit(q)).collect();
        score_distance(&real_logits, &fake)
    };
    let lg_engine = {
        let mut gr = Graph::first_order();
        let g = BoundMlp::bind(&mut gr, c.g, &set_from(c.pg.clone())).unwrap();
        let d = BoundMlp::bind(&mut gr, c.d, &set_from(c.pd.clone())).unwrap();
        let xv = gr.constant(c.x.clone()).unwrap();
        let zv = gr.constant(c.z.clone()).unwrap();
        let gz = g.apply(&mut gr, zv).unwrap();
        let loss = generator_loss(&mut gr, &d, xv, gz).unwrap();
        value_err = value_err.max((gr.item(loss).unwrap() - lg_oracle(&c.pg)).abs());
        gr.backward(loss, &g.params).unwrap()
    };
    let l_g = max_rel_err(&lg_engine, &finite_differences(&c.pg, FD_STEP, lg_oracle), FD_FLOOR);

    // L_D (first order, no penalty) and L_P with respect to discriminator
    // parameters, at fixed generated and reconstructed batches.
    let e = Net::from_tensors(&c.e, &c.pe);
    let g = Net::from_tensors(&c.g, &c.pg);
    let gz = outputs(&g, &z);
    let rec = outputs(&g, &outputs(&e, &x));
    let gz_t = Tensor::from_rows(&gz).unwrap();
    let rec_t = Tensor::from_rows(&rec).unwrap();
    let ld_oracle = |p: &[Tensor]| disc_loss(&Net::from_tensors(&c.d, p), &x, &gz, &rec, c.label, None, 0.1, &c.eps);
    let ld_engine = {
        let mut gr = Graph::first_order();
        let d = BoundMlp::bind(&mut gr, c.d, &set_from(c.pd.clone())).unwrap();
        let xv = gr.constant(c.x.clone()).unwrap();
        let gzv = gr.constant(gz_t.clone()).unwrap();
        let recv = gr.constant(rec_t.clone()).unwrap();
        let spec = DiscriminatorSpec::cross_entropy(c.label, None, 0.1);
        let l = discriminator_loss(&mut gr, &d, &spec, xv, gzv, Some(recv), &c.eps).unwrap();
        value_err = value_err.max((gr.item(l.total).unwrap() - ld_oracle(&c.pd)).abs());
        gr.backward(l.total, &d.params).unwrap()
    };
    let l_d = max_rel_err(&ld_engine, &finite_differences(&c.pd, FD_STEP, ld_oracle), FD_FLOOR);

    let x_hat = interpolate(&c.x, &gz_t, &c.eps).unwrap();
    let xh_rows = rows(&x_hat);
    let mut lp = |form: PenaltyForm| {
        let oracle = |p: &[Tensor]| penalty(&Net::from_tensors(&c.d, p), &xh_rows, form);
        let mut gr = Graph::higher_order();
        let d = BoundMlp::bind(&mut gr, c.d, &set_from(c.pd.clone())).unwrap();
        let p = gradient_penalty(&mut gr, &d, &x_hat, form).unwrap();
        value_err = value_err.max((gr.item(p).unwrap() - oracle(&c.pd)).abs());
        let engine = gr.backward(p, &d.params).unwrap();
        max_rel_err(&engine, &finite_differences(&c.pd, FD_STEP, oracle), FD_FLOOR)
    };
    let l_p_squared = lp(PenaltyForm::SquaredNorm);
    let l_p_norm = lp(PenaltyForm::Norm);

    GradCheck {
        description: format!(
            "seed {seed}: batch {}, d_x {}, d_z {}, E {}x{}, G {}x{}, D {}x{}, label {}",
            c.x.rows(),
            c.e.d_in,
            c.e.d_out,
            c.e.n_hidden,
            c.e.d_hidden,
            c.g.n_hidden,
            c.g.d_hidden,
            c.d.n_hidden,
            c.d.d_hidden,
            c.label
        ),
        l_r,
        l_w,
        l_g,
        l_d,
        l_p_squared,
        l_p_norm,
        value_err,
    }
}
