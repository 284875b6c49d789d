use std::fs;
use std::path::Path;
use std::process::Command;

use distgan_cli::ablation::{configs, run_batch, Preset};
use distgan_cli::plot::{render, FigureKind};
use distgan_cli::run::{execute, read_metrics, run_dir, Manifest, Status, METRICS_COLUMNS, VERSION};
use distgan_cli::table::{build, curves_csv, discover};
use distgan_cli::ExperimentConfig;

const TINY: &str = r#"
[experiment]
variant = "dist-gan"
seeds = [0]

[data]
n = 512

[training]
epochs = 2

[network]
hidden_width = 16
"#;

fn tiny(epochs: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::parse(TINY, "tiny").unwrap();
    c.training.epochs = Some(epochs);
    c
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_distgan"))
}

#[test]
fn minimal_config_writes_one_row_per_epoch() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(2);
    let out = execute(&cfg, 0, tmp.path()).unwrap();
    assert_eq!(out.dir, run_dir(tmp.path(), &cfg, 0));
    let text = fs::read_to_string(out.dir.join("metrics.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), METRICS_COLUMNS.join(","));
    let rows = read_metrics(&out.dir).unwrap();
    assert_eq!(rows.iter().map(|r| (r.epoch, r.step)).collect::<Vec<_>>(), vec![(1, 4), (2, 8)]);
    let m = Manifest::read(&out.dir).unwrap();
    assert_eq!((m.status, m.steps, m.version.as_str()), (Status::Completed, 8, VERSION));
    assert_eq!(m.config_hash, cfg.hash());
    assert!(out.dir.join("checkpoints/final.txt").is_file());
    assert!(!out.dir.join("DIVERGED").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = tiny(2);
    let da = execute(&cfg, 3, a.path()).unwrap().dir;
    let db = execute(&cfg, 3, b.path()).unwrap().dir;
    for f in ["metrics.csv", "checkpoints/final.txt", "manifest.toml", "snapshots/epoch-0002.csv"] {
        assert_eq!(fs::read(da.join(f)).unwrap(), fs::read(db.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unknown_key_is_rejected_with_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "[experiment]\nvariant = \"dist-gan\"\nseeds = [0]\n\n[training]\nlamda_p = 0.1\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(&path).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lamda_p") && err.contains("line 6"), "{err}");

    let err = ExperimentConfig::parse("[experiment]\nvariant = \"dist-gan\"\nseeds = []\n", "x").unwrap_err();
    assert!(format!("{err:#}").contains("seeds"));
    let err = ExperimentConfig::parse("[experiment]\nvariant = \"dist-gan-9\"\nseeds = [1]\n", "x").unwrap_err();
    assert!(format!("{err:#}").contains("dist-gan-9"));
}

#[test]
fn binary_runs_a_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("tiny.toml");
    fs::write(&path, TINY).unwrap();
    let out = bin()
        .args(["run", "--seeds", "1,2", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(tmp.path().join("runs"))
        .env("DISTGAN_WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("completed")).count(), 2);
    let cfg = ExperimentConfig::parse(TINY, "tiny").unwrap();
    assert!(run_dir(&tmp.path().join("runs"), &cfg, 2).join("metrics.csv").is_file());
}

#[test]
fn divergence_marks_the_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(2);
    // Means near 1e300 overflow the squared reconstruction error.
    cfg.data.spacing = 1e300;
    let out = execute(&cfg, 0, tmp.path()).unwrap();
    assert_eq!(out.manifest.status, Status::Diverged);
    let marker = fs::read_to_string(out.dir.join("DIVERGED")).unwrap();
    assert!(marker.contains("step 0"), "{marker}");
    assert!(read_metrics(&out.dir).unwrap().is_empty());
}

#[test]
fn plot_emits_one_figure_per_eval_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = execute(&tiny(5), 0, tmp.path()).unwrap().dir;
    let files = render(&dir, &[FigureKind::LatentMap], None).unwrap();
    assert_eq!(files.len(), 5);
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(f).unwrap()).collect();
    let again = render(&dir, &[FigureKind::LatentMap], None).unwrap();
    assert_eq!(first, again.iter().map(|f| fs::read(f).unwrap()).collect::<Vec<_>>());
    for f in &files {
        roxmltree::Document::parse(&String::from_utf8(fs::read(f).unwrap()).unwrap()).unwrap();
    }
    let all = render(&dir, &FigureKind::ALL, Some(5)).unwrap();
    assert_eq!(all.len(), 3);

    let out = bin().arg("plot").arg(&dir).args(["--kinds", "heatmap"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("latent-map, density, scatter"), "{err}");
    assert!(render(&dir, &[FigureKind::Density], Some(99)).is_err());
}

/// A run directory holding only a manifest and a one-row metrics file.
fn fake_run(root: &Path, variant: &str, seed: u64, status: Status, modes: usize) {
    let dir = root.join(format!("{variant}-000000000000")).join(format!("seed-{seed}"));
    fs::create_dir_all(&dir).unwrap();
    let m = Manifest {
        version: VERSION.into(),
        config_hash: "0".repeat(64),
        variant: variant.into(),
        seed,
        status,
        epochs: 500,
        steps: 195_000,
        message: None,
    };
    fs::write(dir.join("manifest.toml"), toml::to_string(&m).unwrap()).unwrap();
    let body = format!(
        "{}\n195000,500,{modes},1800,0.2,0.21,0.01,0.001,0.1,0.01,0.05,1.2\n",
        METRICS_COLUMNS.join(",")
    );
    fs::write(dir.join("metrics.csv"), body).unwrap();
}

#[test]
fn table_aggregates_completed_runs() {
    let tmp = tempfile::tempdir().unwrap();
    for s in 0..8 {
        fake_run(tmp.path(), "dist-gan", s, Status::Completed, 25);
    }
    for s in 0..7 {
        fake_run(tmp.path(), "wgan-gp", s, Status::Completed, 24);
    }
    fake_run(tmp.path(), "wgan-gp", 7, Status::Diverged, 3);
    fake_run(tmp.path(), "gan1", 0, Status::Completed, 24);
    fake_run(tmp.path(), "gan1", 1, Status::Completed, 26);
    let runs = discover(&[tmp.path().to_path_buf()]).unwrap();
    let t = build(&runs).unwrap();
    // Ablation order, not directory order.
    let order: Vec<&str> = t.rows.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(order, vec!["gan1", "wgan-gp", "dist-gan"]);

    let d = t.row("dist-gan").unwrap();
    assert_eq!((d.completed, d.diverged), (8, 0));
    assert_eq!(d.registered_modes.unwrap().std, Some(0.0));
    assert_eq!(d.tv_true.unwrap().std, Some(0.0));

    let w = t.row("wgan-gp").unwrap();
    assert_eq!((w.completed, w.diverged), (7, 1));
    assert_eq!(w.registered_modes.unwrap().n, 7);
    assert_eq!(w.registered_modes.unwrap().mean, 24.0);

    let g = t.row("gan1").unwrap().registered_modes.unwrap();
    assert_eq!(g.mean, 25.0);
    assert!((g.std.unwrap() - 2f64.sqrt()).abs() < 1e-15);

    assert!(t.to_text().contains("25.00 ± 0.00"));
    assert_eq!(t.to_csv().lines().count(), 4);
    assert_eq!(curves_csv(&runs).lines().count(), 1 + 8 + 8 + 2);

    let empty = tempfile::tempdir().unwrap();
    fake_run(empty.path(), "gan1", 0, Status::Diverged, 1);
    assert!(build(&discover(&[empty.path().to_path_buf()]).unwrap()).is_err());
}

#[test]
fn smoke_ablation_batch_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfgs = configs(Preset::SyntheticSmoke, None, Some(2));
    for c in &mut cfgs {
        c.data.n = 256;
        c.network.hidden_width = Some(8);
        c.network.hidden_layers = Some(1);
    }
    let (cells, table) = run_batch(&cfgs, tmp.path(), 2).unwrap();
    assert_eq!(cells.len(), 27);
    assert!(cells.iter().all(|c| c.outcome.is_ok()));
    let runs = discover(&[tmp.path().to_path_buf()]).unwrap();
    assert_eq!(runs.len(), 27);
    assert_eq!(table.rows.len(), 9);
    for f in ["table.csv", "table.txt", "curves.csv"] {
        assert!(tmp.path().join(f).is_file());
    }
    let curves = fs::read_to_string(tmp.path().join("curves.csv")).unwrap();
    assert_eq!(curves.lines().next().unwrap(), "variant,seed,epoch,registered_modes,registered_points");
    assert_eq!(curves.lines().count(), 1 + 27 * 2);
}
