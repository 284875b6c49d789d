//! Python module `distgan`: data generation, variant training, evaluation and
//! SVG figures from `distgan-core`. Matrices cross the boundary as lists of
//! rows.

use distgan_core::data::{self, GaussianGrid, GridPreset};
use distgan_core::metrics::{self, EvalConfig, Evaluator, MetricsReport};
use distgan_core::training::{self, TrainConfig, TrainState, VARIANT_NAMES};
use distgan_core::{viz, Tensor};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: distgan_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn tensor(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    Tensor::from_rows(&rows).map_err(err)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

/// Square grid of Gaussian modes.
#[pyclass(name = "GaussianGrid", frozen)]
struct PyGrid {
    inner: GaussianGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (side = 5, spacing = 2.0, sigma = 0.1))]
    fn new(side: usize, spacing: f64, sigma: f64) -> Self {
        Self {
            inner: data::make_grid(GridPreset { side, spacing, sigma }),
        }
    }

    #[getter]
    fn means(&self) -> Vec<[f64; 2]> {
        self.inner.means.clone()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn n_modes(&self) -> usize {
        self.inner.n_modes()
    }

    /// `n` samples drawn with `seed`, as a list of `[x, y]` rows.
    fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        rows(&data::sample_data(&self.inner, n, seed).samples)
    }

    fn __repr__(&self) -> String {
        format!("GaussianGrid(n_modes={}, sigma={})", self.inner.n_modes(), self.inner.sigma)
    }
}

/// `n × d_z` uniform latent draws in [−1, 1].
#[pyfunction]
fn sample_prior(d_z: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    rows(&data::sample_prior(d_z, n, seed))
}

#[pyfunction]
fn variants() -> Vec<&'static str> {
    VARIANT_NAMES.to_vec()
}

fn report_dict<'py>(py: Python<'py>, r: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("registered_modes", r.registered_modes)?;
    d.set_item("registered_points", r.registered_points)?;
    d.set_item("tv_true", r.tv_true)?;
    d.set_item("tv_differential", r.tv_differential)?;
    d.set_item("kl_modes", r.kl_modes)?;
    d.set_item("kl_1d", r.kl_1d)?;
    Ok(d)
}

/// Mode-collapse metrics of `generated` against `grid`, with references taken
/// from `training`.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    grid: &PyGrid,
    training: Vec<Vec<f64>>,
    generated: Vec<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let ev = Evaluator::new(grid.inner.clone(), &tensor(training)?, EvalConfig::default()).map_err(err)?;
    report_dict(py, &ev.report(&tensor(generated)?).map_err(err)?)
}

/// Mode index of every sample within 3σ of a mean, `None` elsewhere.
#[pyfunction]
fn assign_modes(grid: &PyGrid, samples: Vec<Vec<f64>>) -> PyResult<Vec<Option<usize>>> {
    let a = metrics::register(&tensor(samples)?, &grid.inner, metrics::DEFAULT_K_SIGMA).map_err(err)?;
    Ok(a.labels)
}

/// One variant's networks and optimizer state, stepped from Python.
#[pyclass(name = "Trainer")]
struct PyTrainer {
    cfg: TrainConfig,
    state: TrainState,
}

#[pymethods]
impl PyTrainer {
    #[new]
    #[pyo3(signature = (variant, seed = 0, hidden_width = None, hidden_layers = None, batch_size = None))]
    fn new(
        variant: &str,
        seed: u64,
        hidden_width: Option<usize>,
        hidden_layers: Option<usize>,
        batch_size: Option<usize>,
    ) -> PyResult<Self> {
        let mut cfg = TrainConfig::synthetic(training::build_variant(variant).map_err(err)?, seed);
        for spec in [&mut cfg.encoder, &mut cfg.generator, &mut cfg.discriminator] {
            spec.d_hidden = hidden_width.unwrap_or(spec.d_hidden);
            spec.n_hidden = hidden_layers.unwrap_or(spec.n_hidden);
        }
        cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
        let state = TrainState::new(&cfg).map_err(err)?;
        Ok(Self { cfg, state })
    }

    #[getter]
    fn variant(&self) -> &str {
        &self.cfg.variant.name
    }

    #[getter]
    fn step_count(&self) -> u64 {
        self.state.step
    }

    #[getter]
    fn d_z(&self) -> usize {
        self.cfg.d_z
    }

    /// One training step on a data batch `x` and latent batch `z`; returns the
    /// losses (`l_r` and `l_w` are `None` for baselines).
    fn step<'py>(&mut self, py: Python<'py>, x: Vec<Vec<f64>>, z: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
        let l = training::train_step(&mut self.state, &tensor(x)?, &tensor(z)?, &self.cfg).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("l_r", l.l_r)?;
        d.set_item("l_w", l.l_w)?;
        d.set_item("l_g", l.l_g)?;
        d.set_item("l_d", l.l_d)?;
        Ok(d)
    }

    fn generate(&self, z: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.state.generate(&self.cfg, &tensor(z)?).map_err(err)?))
    }

    /// Parameters and optimizer state in the text checkpoint format.
    fn checkpoint(&self) -> String {
        self.state.checkpoint().to_text()
    }
}

/// Trains `variant` on a fresh grid dataset and returns one metrics dict per
/// epoch.
#[pyfunction]
#[pyo3(signature = (variant, seed = 0, epochs = 1, n = 50_000, hidden_width = None))]
fn run<'py>(
    py: Python<'py>,
    variant: &str,
    seed: u64,
    epochs: usize,
    n: usize,
    hidden_width: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = TrainConfig::synthetic(training::build_variant(variant).map_err(err)?, seed);
    cfg.epochs = epochs;
    if let Some(w) = hidden_width {
        for spec in [&mut cfg.encoder, &mut cfg.generator, &mut cfg.discriminator] {
            spec.d_hidden = w;
        }
    }
    let grid = data::make_grid(GridPreset::default());
    let ds = data::sample_data(&grid, n, seed);
    let log = py
        .detach(|| training::run_experiment(&cfg, &ds, &mut |_| Ok(())))
        .map_err(err)?;
    if let Some(d) = &log.diverged {
        return Err(PyValueError::new_err(format!("diverged at epoch {}: {}", d.epoch, d.message)));
    }
    log.evals
        .iter()
        .map(|e| {
            let d = match &e.metrics {
                Some(m) => report_dict(py, m)?,
                None => PyDict::new(py),
            };
            d.set_item("epoch", e.epoch)?;
            d.set_item("step", e.step)?;
            Ok(d)
        })
        .collect()
}

/// SVG scatter of real and generated points over the grid.
#[pyfunction]
fn plot_scatter(real: Vec<Vec<f64>>, generated: Vec<Vec<f64>>, grid: &PyGrid) -> PyResult<String> {
    viz::plot_scatter(&tensor(real)?, &tensor(generated)?, &grid.inner).map_err(err)
}

/// SVG map of 2-D latents coloured by the mode their samples land in.
#[pyfunction]
fn plot_latent_map(labels: Vec<Option<usize>>, latents: Vec<Vec<f64>>) -> PyResult<String> {
    viz::plot_latent_map(&labels, &tensor(latents)?).map_err(err)
}

#[pymodule]
fn distgan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyTrainer>()?;
    m.add_function(wrap_pyfunction!(sample_prior, m)?)?;
    m.add_function(wrap_pyfunction!(variants, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(assign_modes, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(plot_scatter, m)?)?;
    m.add_function(wrap_pyfunction!(plot_latent_map, m)?)?;
    Ok(())
}
