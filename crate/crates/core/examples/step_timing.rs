use std::time::Instant;

use distgan_core::data::{make_grid, sample_data, sample_prior, GridPreset};
use distgan_core::training::{build_variant, train_step, TrainConfig, TrainState};

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "dist-gan".into());
    let cfg = TrainConfig::synthetic(build_variant(&name).unwrap(), 1);
    let data = sample_data(&make_grid(GridPreset::default()), 128, 1);
    let z = sample_prior(2, 128, 1);
    let mut st = TrainState::new(&cfg).unwrap();
    let n = 50;
    let t = Instant::now();
    for _ in 0..n {
        train_step(&mut st, &data.samples, &z, &cfg).unwrap();
    }
    let per = t.elapsed().as_secs_f64() / n as f64;
    println!("{name}: {:.2} ms/step, {:.1} s/epoch", per * 1e3, per * 390.0);
}
