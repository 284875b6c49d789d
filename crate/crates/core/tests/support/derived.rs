//! Loss-formula examples checked against independent oracles. Shared by the
//! objectives tests and the acceptance suite.

use distgan_core::nn::{Activation, BoundMlp, MlpSpec};
use distgan_core::objectives::{
    discriminator_loss, discriminator_loss_from_logits, generator_loss_from_logits, gradient_penalty,
    latent_data_distance, md_reduce_rows, reconstruction_loss, score_distance_from_logits, BaselineKind,
    DiscriminatorSpec, GeneratorLoss, LatentDataTerms, PenaltyForm, ReconLabel,
};
use distgan_core::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Outcome of one example: the measured error and the bound it must meet.
#[derive(Clone, Debug)]
pub struct DerivedCheck {
    pub name: &'static str,
    pub error: f64,
    pub tolerance: f64,
}

impl DerivedCheck {
    pub fn passed(&self) -> bool {
        self.error.is_finite() && self.error <= self.tolerance
    }
}

fn constant(g: &mut Graph, t: &Tensor) -> Var {
    g.constant(t.clone()).unwrap()
}

pub fn col(v: &[f64]) -> Tensor {
    Tensor::matrix(v.len(), 1, v.to_vec()).unwrap()
}

/// Per-sample mean of 100 U[−1,1] coordinates has std (1/√3)/10; the error
/// is relative.
pub fn md_reduce_spread() -> DerivedCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_matrix(&mut rng, 10_000, 100, 1.0);
    let m = md_reduce_rows(&x).unwrap();
    let mu = m.iter().sum::<f64>() / m.len() as f64;
    let sd = (m.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (m.len() - 1) as f64).sqrt();
    let want = (1.0 / 3f64.sqrt()) / 10.0;
    DerivedCheck {
        name: "md_reduce spread",
        error: (sd - want).abs() / want,
        tolerance: 0.1,
    }
}

pub fn reconstruction() -> DerivedCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_matrix(&mut rng, 4, 3, 3.0);
    let xr = random_matrix(&mut rng, 4, 3, 3.0);
    let mut g = Graph::first_order();
    let (a, b) = (constant(&mut g, &x), constant(&mut g, &xr));
    let l = reconstruction_loss(&mut g, a, b).unwrap();
    DerivedCheck {
        name: "reconstruction loss",
        error: (g.item(l).unwrap() - recon(&rows(&x), &rows(&xr))).abs(),
        tolerance: 1e-12,
    }
}

/// Encoder and generator given as fixed tables over a batch of 8.
pub fn latent_data() -> DerivedCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z = random_matrix(&mut rng, 8, 2, 1.0);
    let ex = random_matrix(&mut rng, 8, 2, 1.0);
    let rec = random_matrix(&mut rng, 8, 2, 4.0);
    let gz = random_matrix(&mut rng, 8, 2, 4.0);
    let mut g = Graph::first_order();
    let terms = LatentDataTerms {
        reconstructed: constant(&mut g, &rec),
        generated: constant(&mut g, &gz),
        encoded: constant(&mut g, &ex),
        latent: constant(&mut g, &z),
    };
    let mut error = 0.0f64;
    for lw in [1.0, 0.5, 2.0] {
        let l = latent_data_distance(&mut g, terms, lw).unwrap();
        let want = latent_distance(&rows(&rec), &rows(&gz), &rows(&ex), &rows(&z), lw);
        error = error.max((g.item(l).unwrap() - want).abs());
    }
    DerivedCheck {
        name: "latent-data distance",
        error,
        tolerance: 1e-12,
    }
}

pub fn score_distance_loss() -> DerivedCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r: Vec<f64> = (0..16).map(|_| rng.random_range(-5.0..5.0)).collect();
    let f: Vec<f64> = (0..16).map(|_| rng.random_range(-5.0..5.0)).collect();
    let mut g = Graph::first_order();
    let (a, b) = (constant(&mut g, &col(&r)), constant(&mut g, &col(&f)));
    let l = score_distance_from_logits(&mut g, a, b).unwrap();
    DerivedCheck {
        name: "discriminator-score distance",
        error: (g.item(l).unwrap() - score_distance(&r, &f)).abs(),
        tolerance: 1e-12,
    }
}

/// One-hidden-layer ReLU critic with random weights.
pub fn relu_critic(seed: u64, hidden: usize) -> (MlpSpec, Vec<Tensor>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = MlpSpec {
        d_in: 2,
        d_out: 1,
        n_hidden: 1,
        d_hidden: hidden,
        output_activation: Activation::Sigmoid,
    };
    let p = random_params(&mut rng, &spec);
    (spec, p)
}

pub fn penalty_value() -> DerivedCheck {
    let (spec, p) = relu_critic(4, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let xh = random_matrix(&mut rng, 4, 2, 2.0);
    let net = Net::from_tensors(&spec, &p);
    let mut error = 0.0f64;
    for form in [PenaltyForm::SquaredNorm, PenaltyForm::Norm] {
        let mut g = Graph::higher_order();
        let d = BoundMlp::bind(&mut g, spec, &set_from(p.clone())).unwrap();
        let v = gradient_penalty(&mut g, &d, &xh, form).unwrap();
        error = error.max((g.item(v).unwrap() - penalty(&net, &rows(&xh), form)).abs());
    }
    DerivedCheck {
        name: "gradient penalty vs explicit Jacobian",
        error,
        tolerance: 1e-10,
    }
}

pub fn discriminator_components() -> DerivedCheck {
    let (spec, p) = relu_critic(5, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let x = random_matrix(&mut rng, 6, 2, 3.0);
    let gz = random_matrix(&mut rng, 6, 2, 3.0);
    let rec = random_matrix(&mut rng, 6, 2, 3.0);
    let eps: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
    let net = Net::from_tensors(&spec, &p);
    let mut g = Graph::higher_order();
    let d = BoundMlp::bind(&mut g, spec, &set_from(p.clone())).unwrap();
    let (xv, gzv, rv) = (constant(&mut g, &x), constant(&mut g, &gz), constant(&mut g, &rec));
    let ds = DiscriminatorSpec::cross_entropy(ReconLabel::Real, Some(PenaltyForm::SquaredNorm), 0.1);
    let l = discriminator_loss(&mut g, &d, &ds, xv, gzv, Some(rv), &eps).unwrap();
    let want = disc_loss(
        &net,
        &rows(&x),
        &rows(&gz),
        &rows(&rec),
        ReconLabel::Real,
        Some(PenaltyForm::SquaredNorm),
        0.1,
        &eps,
    );
    let total = g.item(l.total).unwrap();
    // The reported components must reassemble the total as well.
    let pv = g.item(l.penalty.unwrap()).unwrap();
    let parts = g.item(l.real_term).unwrap() + g.item(l.fake_term).unwrap() + g.item(l.recon_term.unwrap()).unwrap();
    DerivedCheck {
        name: "discriminator loss component sum",
        error: (total - want).abs().max((total + parts - 0.1 * pv).abs()),
        tolerance: 1e-12,
    }
}

/// Real outputs with mean 1.0, fake with mean 0.2, no penalty.
pub fn wgan_critic() -> DerivedCheck {
    let mut g = Graph::first_order();
    let r = constant(&mut g, &col(&[0.5, 1.5, 1.0, 1.0]));
    let f = constant(&mut g, &col(&[0.1, 0.3, 0.2]));
    let spec = DiscriminatorSpec {
        penalty: None,
        ..BaselineKind::WganGp.discriminator(10.0)
    };
    let l = discriminator_loss_from_logits(&mut g, &spec, r, f, None, None).unwrap();
    let gl = generator_loss_from_logits(&mut g, GeneratorLoss::Wasserstein, None, f).unwrap();
    DerivedCheck {
        name: "wgan-gp critic on hand-set outputs",
        error: (g.item(l.total).unwrap() + 0.8).abs().max((g.item(gl).unwrap() + 0.2).abs()),
        tolerance: 1e-12,
    }
}

pub fn all() -> Vec<DerivedCheck> {
    vec![
        md_reduce_spread(),
        reconstruction(),
        latent_data(),
        score_distance_loss(),
        penalty_value(),
        discriminator_components(),
        wgan_critic(),
    ]
}
