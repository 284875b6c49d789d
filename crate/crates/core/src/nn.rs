//! Fully-connected networks, initialization and the Adam optimizer.

use rand::Rng as _;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Identity,
}

/// Shape of an MLP: `n_hidden` ReLU layers of width `d_hidden` followed by a
/// linear output layer and `output_activation`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub d_in: usize,
    pub d_out: usize,
    pub n_hidden: usize,
    pub d_hidden: usize,
    pub output_activation: Activation,
}

impl MlpSpec {
    /// Encoder for the 2-D grid: 2 → 3×128 → 2, linear output.
    pub fn synthetic_encoder() -> Self {
        Self {
            d_in: 2,
            d_out: 2,
            n_hidden: 3,
            d_hidden: 128,
            output_activation: Activation::Identity,
        }
    }

    /// Generator for the 2-D grid: 2 → 3×128 → 2, linear output.
    pub fn synthetic_generator() -> Self {
        Self::synthetic_encoder()
    }

    /// Discriminator for the 2-D grid: 2 → 3×128 → 1, sigmoid output.
    pub fn synthetic_discriminator() -> Self {
        Self {
            d_in: 2,
            d_out: 1,
            n_hidden: 3,
            d_hidden: 128,
            output_activation: Activation::Sigmoid,
        }
    }

    /// One hidden layer of width 4, used by the 1-D demo.
    pub fn demo_1d(d_in: usize, d_out: usize, output_activation: Activation) -> Self {
        Self {
            d_in,
            d_out,
            n_hidden: 1,
            d_hidden: 4,
            output_activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_out == 0 || self.n_hidden == 0 || self.d_hidden == 0 {
            return Err(Error::Config(format!("all MLP extents must be >= 1: {self:?}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.n_hidden + 1);
        let mut prev = self.d_in;
        for _ in 0..self.n_hidden {
            dims.push((prev, self.d_hidden));
            prev = self.d_hidden;
        }
        dims.push((prev, self.d_out));
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// First and second moment estimates for every tensor of a parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn zeros_like(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }
}

/// Named weights and biases of one network, `W0, b0, …, W{n_hidden},
/// b{n_hidden}`, with the state of the optimizer that owns them.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    pub names: Vec<String>,
    pub values: Vec<Tensor>,
    pub adam: AdamState,
}

impl ParameterSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.values[i])
    }

    /// Places every tensor in `graph` as a leaf and returns the handles in
    /// order.
    pub fn bind(&self, graph: &mut Graph) -> Result<Vec<Var>> {
        self.values.iter().map(|t| graph.leaf(t.clone())).collect()
    }

    /// One Adam update with this set's own optimizer state.
    pub fn adam_step(&mut self, grads: &[Tensor], step: u64, cfg: &AdamConfig) -> Result<()> {
        adam_step(&mut self.values, &mut self.adam, grads, step, cfg)
    }
}

/// Weights uniform in ±√(6/(fan_in+fan_out)), biases zero, optimizer state
/// zero. `seed` selects a ChaCha8 stream; the same seed always produces the
/// same set.
pub fn init_params(spec: &MlpSpec, seed: u64) -> ParameterSet {
    init_params_with(spec, &mut rng::stream_id(seed, 0x1417))
}

/// [`init_params`] drawing from an existing stream.
pub fn init_params_with(spec: &MlpSpec, rng: &mut rng::Rng) -> ParameterSet {
    let mut names = Vec::new();
    let mut values = Vec::new();
    for (k, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        names.push(format!("W{k}"));
        values.push(Tensor::with_data(vec![fan_in, fan_out], w));
        names.push(format!("b{k}"));
        values.push(Tensor::zeros(&[1, fan_out]));
    }
    let adam = AdamState::zeros_like(&values);
    ParameterSet {
        names,
        values,
        adam,
    }
}

/// Result of an MLP forward pass.
#[derive(Clone, Copy, Debug)]
pub struct MlpOutput {
    /// Pre-activation of the final layer (raw logits for a discriminator).
    pub logits: Var,
    /// `output_activation(logits)`; the same node as `logits` for identity.
    pub output: Var,
}

/// Records `h ← ReLU(h·W_k + b_k)` for each hidden layer, then the output
/// layer, on `graph`. `params` are handles from [`ParameterSet::bind`].
pub fn forward(graph: &mut Graph, spec: &MlpSpec, params: &[Var], batch: Var) -> Result<MlpOutput> {
    let layers = spec.n_hidden + 1;
    if params.len() != 2 * layers {
        return Err(Error::InvalidShape {
            shape: vec![params.len()],
            reason: format!("expected {} parameter tensors", 2 * layers),
        });
    }
    let width = graph.value(batch).require_matrix("forward")?.1;
    if width != spec.d_in {
        return Err(Error::ShapeMismatch {
            op: "forward",
            lhs: graph.shape(batch).to_vec(),
            rhs: vec![spec.d_in],
        });
    }
    let mut h = batch;
    for k in 0..layers {
        let z = graph.matmul(h, params[2 * k])?;
        let z = graph.add_row(z, params[2 * k + 1])?;
        h = if k + 1 < layers { graph.relu(z)? } else { z };
    }
    let output = match spec.output_activation {
        Activation::Sigmoid => graph.sigmoid(h)?,
        Activation::Identity => h,
    };
    Ok(MlpOutput { logits: h, output })
}

/// A network whose parameters have been placed in a graph.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    pub spec: MlpSpec,
    pub params: Vec<Var>,
}

impl BoundMlp {
    pub fn bind(graph: &mut Graph, spec: MlpSpec, set: &ParameterSet) -> Result<Self> {
        Ok(Self {
            spec,
            params: set.bind(graph)?,
        })
    }

    pub fn forward(&self, graph: &mut Graph, batch: Var) -> Result<MlpOutput> {
        forward(graph, &self.spec, &self.params, batch)
    }

    /// Activated output.
    pub fn apply(&self, graph: &mut Graph, batch: Var) -> Result<Var> {
        Ok(self.forward(graph, batch)?.output)
    }
}

/// Evaluates a network on a batch outside any training graph.
pub fn predict(spec: &MlpSpec, params: &ParameterSet, batch: &Tensor) -> Result<Tensor> {
    let mut g = Graph::first_order();
    let p = params.bind(&mut g)?;
    let x = g.constant(batch.clone())?;
    let out = forward(&mut g, spec, &p, x)?;
    Ok(g.value(out.output).clone())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay_every: u64,
    pub decay_base: f64,
}

impl Default for AdamConfig {
    /// lr 0.001 decayed ×0.9 every 10K steps, β₁ = 0.8, β₂ = 0.999, ε = 1e-8.
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.8,
            beta2: 0.999,
            eps: 1e-8,
            decay_every: 10_000,
            decay_base: 0.9,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.decay_every > 0
            && self.decay_base > 0.0
            && self.decay_base <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam configuration {self:?}")))
        }
    }
}

/// `lr · decay_base^⌊step / decay_every⌋`.
pub fn lr_at(step: u64, cfg: &AdamConfig) -> f64 {
    let k = step / cfg.decay_every.max(1);
    cfg.lr * cfg.decay_base.powi(k.min(i32::MAX as u64) as i32)
}

/// Bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut [Tensor],
    state: &mut AdamState,
    grads: &[Tensor],
    step: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::ShapeMismatch {
            op: "adam_step",
            lhs: vec![params.len()],
            rhs: vec![grads.len()],
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite { op: "adam_step" });
        }
    }
    state.t += 1;
    let t = state.t.min(i32::MAX as u64) as i32;
    let lr = lr_at(step, cfg);
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((p, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
