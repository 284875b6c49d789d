//! `distgan table`: mean ± sample standard deviation of the final
//! evaluation of every completed run, grouped by variant.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use distgan_core::training::{ABLATION_VARIANTS, VARIANT_NAMES};
use walkdir::WalkDir;

use crate::run::{read_metrics, Manifest, MetricsRow, Status};

/// A run directory with its manifest and metrics.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub rows: Vec<MetricsRow>,
}

impl RunRecord {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Manifest::read(dir)?;
        let rows = if dir.join("metrics.csv").is_file() { read_metrics(dir)? } else { Vec::new() };
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            rows,
        })
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

/// Every run directory (a directory holding `manifest.toml`) below `roots`,
/// in variant then seed order.
pub fn discover(roots: &[PathBuf]) -> Result<Vec<RunRecord>> {
    let mut dirs = Vec::new();
    for root in roots {
        if !root.exists() {
            bail!("{} does not exist", root.display());
        }
        for entry in WalkDir::new(root).sort_by_file_name() {
            let entry = entry?;
            if entry.file_name() == "manifest.toml" {
                dirs.push(entry.path().parent().unwrap().to_path_buf());
            }
        }
    }
    dirs.sort();
    dirs.dedup();
    let mut runs = dirs.iter().map(|d| RunRecord::load(d)).collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| {
        let ka = (variant_rank(&a.manifest.variant), &a.manifest.variant, a.manifest.seed, &a.dir);
        let kb = (variant_rank(&b.manifest.variant), &b.manifest.variant, b.manifest.seed, &b.dir);
        ka.cmp(&kb)
    });
    Ok(runs)
}

/// Ablation variants first in their table order, then the other presets.
fn variant_rank(name: &str) -> usize {
    ABLATION_VARIANTS
        .iter()
        .chain(VARIANT_NAMES.iter().filter(|v| !ABLATION_VARIANTS.contains(v)))
        .position(|v| *v == name)
        .unwrap_or(usize::MAX)
}

/// Mean and sample standard deviation (n − 1); the deviation is undefined
/// for a single value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        // Shifted by the first value so identical inputs give exactly std 0.
        let k = values[0];
        let mean = k + values.iter().map(|v| v - k).sum::<f64>() / n as f64;
        let std = (n > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Some(Self { n, mean, std })
    }

    fn text(s: Option<Stat>, decimals: usize) -> String {
        match s {
            None => "-".into(),
            Some(s) => match s.std {
                Some(d) => format!("{:.*} ± {:.*}", decimals, s.mean, decimals, d),
                None => format!("{:.*} ± n/a", decimals, s.mean),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub variant: String,
    pub completed: usize,
    pub diverged: usize,
    pub failed: usize,
    pub registered_modes: Option<Stat>,
    pub registered_points: Option<Stat>,
    pub tv_true: Option<Stat>,
    pub tv_diff: Option<Stat>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<TableRow>,
}

/// Aggregates the final evaluation of completed runs; diverged and failed
/// runs are only counted.
pub fn build(runs: &[RunRecord]) -> Result<ResultsTable> {
    if !runs.iter().any(|r| r.manifest.status == Status::Completed) {
        bail!("no completed runs among {} run directories", runs.len());
    }
    let mut rows: Vec<TableRow> = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        let v = &r.manifest.variant;
        if rows.iter().any(|row| &row.variant == v) {
            continue;
        }
        let group: Vec<&RunRecord> = runs[i..].iter().filter(|x| &x.manifest.variant == v).collect();
        let count = |s: Status| group.iter().filter(|x| x.manifest.status == s).count();
        let done: Vec<&MetricsRow> = group
            .iter()
            .filter(|x| x.manifest.status == Status::Completed)
            .filter_map(|x| x.last())
            .collect();
        let col = |f: fn(&MetricsRow) -> Option<f64>| Stat::of(&done.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
        rows.push(TableRow {
            variant: v.clone(),
            completed: count(Status::Completed),
            diverged: count(Status::Diverged),
            failed: count(Status::Failed) + count(Status::Running),
            registered_modes: col(|r| r.registered_modes.map(|v| v as f64)),
            registered_points: col(|r| r.registered_points.map(|v| v as f64)),
            tv_true: col(|r| r.tv_true),
            tv_diff: col(|r| r.tv_diff),
        });
    }
    Ok(ResultsTable { rows })
}

impl ResultsTable {
    pub fn row(&self, variant: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "variant,completed,diverged,failed,registered_modes_mean,registered_modes_std,registered_points_mean,registered_points_std,tv_true_mean,tv_true_std,tv_diff_mean,tv_diff_std\n",
        );
        let cell = |x: Option<Stat>| match x {
            None => ",".to_string(),
            Some(st) => format!("{},{}", st.mean, st.std.map_or(String::new(), |d| d.to_string())),
        };
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.variant,
                r.completed,
                r.diverged,
                r.failed,
                cell(r.registered_modes),
                cell(r.registered_points),
                cell(r.tv_true),
                cell(r.tv_diff)
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<18} {:>4} {:>4} {:>4}  {:<16} {:<20} {:<14} {:<14}\n",
            "variant", "done", "div", "fail", "modes", "points", "TV (true)", "TV (diff)"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<18} {:>4} {:>4} {:>4}  {:<16} {:<20} {:<14} {:<14}",
                r.variant,
                r.completed,
                r.diverged,
                r.failed,
                Stat::text(r.registered_modes, 2),
                Stat::text(r.registered_points, 2),
                Stat::text(r.tv_true, 2),
                Stat::text(r.tv_diff, 2)
            );
        }
        s
    }
}

/// `variant,seed,epoch,registered_modes,registered_points`, one line per
/// evaluation of every run.
pub fn curves_csv(runs: &[RunRecord]) -> String {
    let mut s = String::from("variant,seed,epoch,registered_modes,registered_points\n");
    for r in runs {
        for m in &r.rows {
            let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.manifest.variant,
                r.manifest.seed,
                m.epoch,
                opt(m.registered_modes),
                opt(m.registered_points)
            );
        }
    }
    s
}

/// Writes `table.csv`, `table.txt` and `curves.csv` into `out`.
pub fn write_outputs(out: &Path, table: &ResultsTable, runs: &[RunRecord]) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("table.csv"), table.to_csv())?;
    std::fs::write(out.join("table.txt"), table.to_text())?;
    std::fs::write(out.join("curves.csv"), curves_csv(runs))?;
    Ok(())
}
