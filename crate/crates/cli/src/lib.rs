//! Orchestration for the distgan lab: strict TOML experiment configs, seeded
//! run directories, results tables, figures and the ablation batch.

pub mod ablation;
pub mod config;
pub mod plot;
pub mod pool;
pub mod run;
pub mod table;

pub use config::ExperimentConfig;
