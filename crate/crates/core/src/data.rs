//! Synthetic datasets: the 2-D Gaussian grid, the 1-D demo distribution and
//! the uniform latent prior.

use std::io::{Read, Write};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Geometry of a square grid of isotropic Gaussian modes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPreset {
    /// Modes per side.
    pub side: usize,
    /// Distance between neighbouring means.
    pub spacing: f64,
    pub sigma: f64,
}

impl Default for GridPreset {
    /// 5×5 means at {−4,−2,0,2,4}², σ = 0.1.
    fn default() -> Self {
        Self {
            side: 5,
            spacing: 2.0,
            sigma: 0.1,
        }
    }
}

/// Ground-truth mixture: equal-weight modes sharing one standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianGrid {
    pub means: Vec<[f64; 2]>,
    pub sigma: f64,
    /// Half-width of the square spanned by the means.
    pub extent: f64,
}

impl GaussianGrid {
    pub fn n_modes(&self) -> usize {
        self.means.len()
    }
}

/// Builds the grid described by `preset`, centred on the origin. Means are
/// enumerated row-major with x varying fastest.
pub fn make_grid(preset: GridPreset) -> GaussianGrid {
    let extent = preset.spacing * (preset.side.saturating_sub(1)) as f64 / 2.0;
    let coord = |i: usize| -extent + preset.spacing * i as f64;
    let mut means = Vec::with_capacity(preset.side * preset.side);
    for iy in 0..preset.side {
        for ix in 0..preset.side {
            means.push([coord(ix), coord(iy)]);
        }
    }
    GaussianGrid {
        means,
        sigma: preset.sigma,
        extent,
    }
}

/// One-dimensional Gaussian used for the qualitative 1-D comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian1d {
    pub mean: f64,
    pub std: f64,
}

impl Default for Gaussian1d {
    fn default() -> Self {
        Self {
            mean: 2.0,
            std: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Grid(GaussianGrid),
    Demo1d(Gaussian1d),
    /// Loaded from an external file.
    External,
}

/// `N×d` training samples plus their provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Tensor,
    pub source: DataSource,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    /// Writes one sample per row, no header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for i in 0..self.len() {
            w.write_record(self.samples.row(i).iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads rows written by [`Dataset::write_csv`] or any headerless numeric
    /// CSV with a constant column count.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| {
                        Error::Config(format!("dataset line {}: {e}", line + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Empty("dataset csv"));
        }
        Ok(Self {
            samples: Tensor::from_rows(&rows)?,
            source: DataSource::External,
            seed: 0,
        })
    }
}

/// Draws `n` points: a uniformly chosen mode plus isotropic noise of std σ.
pub fn sample_data(grid: &GaussianGrid, n: usize, seed: u64) -> Dataset {
    let mut rng = rng::stream(seed, Stream::Data);
    let k = grid.n_modes();
    let mut data = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let m = grid.means[rng.random_range(0..k)];
        let nx: f64 = StandardNormal.sample(&mut rng);
        let ny: f64 = StandardNormal.sample(&mut rng);
        data.push(m[0] + grid.sigma * nx);
        data.push(m[1] + grid.sigma * ny);
    }
    Dataset {
        samples: Tensor::with_data(vec![n, 2], data),
        source: DataSource::Grid(grid.clone()),
        seed,
    }
}

/// `n×d_z` draws, i.i.d. uniform on [−1, 1].
pub fn sample_prior(d_z: usize, n: usize, seed: u64) -> Tensor {
    let mut rng = rng::stream(seed, Stream::Prior);
    sample_prior_with(&mut rng, d_z, n)
}

/// Prior draws from an existing stream.
pub fn sample_prior_with(rng: &mut rng::Rng, d_z: usize, n: usize) -> Tensor {
    let data = (0..n * d_z)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    Tensor::with_data(vec![n, d_z], data)
}

/// `n` one-dimensional samples from the default demo Gaussian.
pub fn make_1d_demo(n: usize, seed: u64) -> Dataset {
    make_1d_demo_with(Gaussian1d::default(), n, seed)
}

pub fn make_1d_demo_with(spec: Gaussian1d, n: usize, seed: u64) -> Dataset {
    let mut rng = rng::stream(seed, Stream::Data);
    let data = (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            spec.mean + spec.std * e
        })
        .collect();
    Dataset {
        samples: Tensor::with_data(vec![n, 1], data),
        source: DataSource::Demo1d(spec),
        seed,
    }
}
