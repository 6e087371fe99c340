use std::path::PathBuf;

use pcbnet::harness::commands::{self, TrainOptions};
use pcbnet::harness::{
    aggregate_stats, grid_expand, render_json, run_experiment, Architecture, DataSource, ExperimentSpec, Grid,
    HarnessError,
};

const SMALL: Architecture = Architecture { filters: [2, 2, 4, 4], dense_units: 8 };

fn grid_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../grids").join(name)
}

fn small_spec(dataset: &str) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(dataset, DataSource::Synthetic { per_class: 16, seed: 1 });
    spec.runs = 2;
    spec.epochs = 2;
    spec.architecture = SMALL;
    spec
}

#[test]
fn experiments_repeat_bitwise() {
    for (dataset, folds) in [("SBT_balanced_24_30t_8f_16x12", 0), ("SBT_unbalanced_8s16n_8f_16x12", 4)] {
        let mut spec = small_spec(dataset);
        spec.folds = folds;
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(render_json(&a.report).unwrap(), render_json(&b.report).unwrap(), "{dataset}");
        assert!(a.report.is_consistent());
        assert_eq!(a.report.records.iter().map(|r| r.seed).collect::<Vec<_>>(), [0, 1]);
    }
}

#[test]
fn cross_validation_tests_every_entry_once_per_run() {
    let mut spec = small_spec("SBT_unbalanced_8s16n_8f_16x12");
    spec.folds = 4;
    let out = run_experiment(&spec).unwrap();
    for r in &out.report.records {
        assert_eq!(r.fold_results.len(), 4);
        assert_eq!(r.result.unwrap().confusion.total(), 24);
    }
}

#[test]
fn single_run_aggregate_is_the_run() {
    let mut spec = small_spec("SBT_balanced_24_30t_8f_16x12");
    spec.runs = 1;
    let report = run_experiment(&spec).unwrap().report;
    let s = report.summary.unwrap();
    assert_eq!(s.mean_accuracy, report.records[0].accuracy().unwrap());
    assert_eq!(s.std_accuracy, 0.0);
    assert_eq!(aggregate_stats(&[0.7, 0.7, 0.7]).unwrap().std, 0.0);
}

#[test]
fn repository_grids_expand() {
    let paper = Grid::load(&grid_path("paper.toml")).unwrap();
    let specs = grid_expand(&paper).unwrap();
    // depth 12, test size 8, unbalanced 12, flip 16, largest 24
    assert_eq!(specs.len(), 72);
    assert!(specs.iter().all(|s| s.runs == 3 && s.folds == 0));
    let cv = grid_expand(&Grid::load(&grid_path("paper_cv.toml")).unwrap()).unwrap();
    assert_eq!(cv.len(), 16);
    assert!(cv.iter().all(|s| s.runs == 30 && s.folds == 10));
    assert!(grid_expand(&Grid::load(&grid_path("desk.toml")).unwrap()).is_ok());
}

#[test]
fn missing_pool_directory_is_an_error() {
    let mut spec = small_spec("SBT_balanced_24_30t_8f_16x12");
    spec.source =
        DataSource::Pools { suspicious: "/nonexistent/s".into(), normal: "/nonexistent/n".into(), loop_pad: false };
    assert!(run_experiment(&spec).is_err());
}

#[test]
fn library_pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let pools = dir.path().join("pools");
    commands::synth(8, "16x12".parse().unwrap(), 8, 3, &pools).unwrap();
    let data = dir.path().join("data");
    let (info, index) = commands::build_dataset(
        "SBT_balanced_16_30t_8f_16x12",
        &pools.join("suspicious"),
        &pools.join("normal"),
        &data,
        false,
    )
    .unwrap();
    assert_eq!(info.name, "SBT_balanced_16_30t_8f_16x12");
    assert_eq!(index.entries.len(), 16);

    let opts = TrainOptions { epochs: 2, batch_size: 4, architecture: SMALL, ..TrainOptions::default() };
    let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    commands::train(&data, &opts, &a).unwrap();
    commands::train(&data, &opts, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let report = dir.path().join("eval.json");
    let r = commands::eval(&data, &a, &report).unwrap();
    assert_eq!(r.evaluated, "test");
    assert!(report.exists());

    let wrong = commands::train(&data, &TrainOptions { architecture: SMALL, batch_size: 0, ..opts }, &a);
    assert!(matches!(wrong, Err(HarnessError::Invalid(_)) | Err(HarnessError::Network(_))), "{wrong:?}");
}

/// The learnability setup at the full convolution and dense widths, about
/// fifteen minutes on one core; run with `--ignored`.
#[test]
#[ignore]
fn paper_width_learns_synthetic_motion() {
    let mut spec =
        ExperimentSpec::new("SBT_balanced_120_30t_10f_32x24", DataSource::Synthetic { per_class: 60, seed: 0 });
    spec.runs = 1;
    spec.epochs = 100;
    let report = run_experiment(&spec).unwrap().report;
    let acc = report.records[0].accuracy().unwrap();
    assert!(acc >= 0.9, "{acc}");
}
