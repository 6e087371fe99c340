use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::commands::load_pool;
use super::{aggregate_stats, worker_threads, Architecture, HarnessError};
use crate::dataset::{
    assemble_dataset, flip_horizontal, make_folds, parse_dataset_name, split_train_test, synth_generate, Clip,
    DatasetIndex, DatasetSpec, Label, Split,
};
use crate::network::{
    build_network, evaluate, train_epoch, ConfusionMatrix, EvalResult, Network, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS,
};
use crate::tensor::rng::{seeded_stream, streams, SeededRng};
use crate::tensor::AdamConfig;

pub const DEFAULT_RUNS: usize = 30;
/// Test share used for plain-split runs when the dataset name has none.
pub const DEFAULT_TEST_PERCENT: u32 = 30;

/// Where the source clips of an experiment come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    /// Generated pools of `per_class` clips per class.
    Synthetic { per_class: usize, seed: u64 },
    /// Directories of segment files, as written by `extract` or `synth`.
    Pools {
        suspicious: PathBuf,
        normal: PathBuf,
        #[serde(default)]
        loop_pad: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Dataset name; must fix depth and resolution.
    pub dataset: String,
    pub runs: usize,
    /// 0 trains once per run on a stratified split, k ≥ 2 runs k-fold
    /// cross-validation.
    pub folds: usize,
    pub epochs: usize,
    pub seed_base: u64,
    pub architecture: Architecture,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub source: DataSource,
}

impl ExperimentSpec {
    pub fn new(dataset: impl Into<String>, source: DataSource) -> Self {
        ExperimentSpec {
            dataset: dataset.into(),
            runs: DEFAULT_RUNS,
            folds: 0,
            epochs: DEFAULT_EPOCHS,
            seed_base: 0,
            architecture: Architecture::PAPER,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: AdamConfig::default().learning_rate,
            source,
        }
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec, HarnessError> {
        Ok(parse_dataset_name(&self.dataset)?)
    }

    /// Test percentage for plain-split runs.
    pub fn test_percent(&self) -> Result<Option<u32>, HarnessError> {
        let spec = self.dataset_spec()?;
        Ok((self.folds == 0).then(|| spec.test_percent.unwrap_or(DEFAULT_TEST_PERCENT)))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |m: String| Err(HarnessError::Invalid(m));
        if self.runs == 0 {
            return invalid("runs must be at least 1".into());
        }
        if self.folds == 1 {
            return invalid("folds must be 0 (plain split) or at least 2".into());
        }
        if self.batch_size == 0 {
            return invalid("batch size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return invalid(format!("learning rate {} is not a finite non-negative number", self.learning_rate));
        }
        let (depth, resolution) = self.dataset_spec()?.clip_shape()?;
        self.architecture.config(depth, resolution).validate()?;
        Ok(())
    }

    fn run_seed(&self, run: usize) -> u64 {
        self.seed_base.wrapping_add(run as u64)
    }
}

/// One training run. Exactly one of `result` and `error` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    /// Test result; with folds, the matrix pooled over all folds.
    pub result: Option<EvalResult>,
    pub fold_results: Vec<EvalResult>,
    /// Last epoch's training loss, averaged over folds.
    pub final_loss: Option<f64>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn accuracy(&self) -> Option<f64> {
        self.result.map(|r| r.accuracy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub completed: usize,
    pub failed: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub best_accuracy: f64,
    /// First run reaching `best_accuracy`.
    pub best_run: usize,
}

/// Per-run results and their aggregate. Contains no timing, so equal
/// specs give equal reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub runs: usize,
    pub folds: usize,
    pub test_percent: Option<u32>,
    pub epochs: usize,
    pub seed_base: u64,
    pub architecture: Architecture,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub records: Vec<RunRecord>,
    /// `None` when every run failed.
    pub summary: Option<RunSummary>,
}

impl RunReport {
    pub fn summarize(records: &[RunRecord]) -> Option<RunSummary> {
        let accs: Vec<(usize, f64)> = records.iter().filter_map(|r| r.accuracy().map(|a| (r.run, a))).collect();
        let values: Vec<f64> = accs.iter().map(|&(_, a)| a).collect();
        let agg = aggregate_stats(&values).ok()?;
        let (best_run, best_accuracy) =
            accs.iter().copied().fold(accs[0], |best, cur| if cur.1 > best.1 { cur } else { best });
        Some(RunSummary {
            completed: accs.len(),
            failed: records.len() - accs.len(),
            mean_accuracy: agg.mean,
            std_accuracy: agg.std,
            best_accuracy,
            best_run,
        })
    }

    /// Whether `summary` matches a fresh recomputation from `records`.
    pub fn is_consistent(&self) -> bool {
        self.summary == Self::summarize(&self.records)
    }

    pub fn best_record(&self) -> Option<&RunRecord> {
        let best = self.summary?.best_run;
        self.records.iter().find(|r| r.run == best)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutcome {
    pub report: RunReport,
    /// Seconds per run, by run index.
    pub wall_seconds: Vec<f64>,
}

/// An assembled dataset with one in-memory clip per index entry.
pub(crate) struct Materialized {
    pub index: DatasetIndex,
    pub clips: Vec<Clip>,
}

pub(crate) fn materialize(
    spec: &DatasetSpec,
    suspicious: &[Clip],
    normal: &[Clip],
) -> Result<Materialized, HarnessError> {
    let ids = |pool: &[Clip]| pool.iter().map(|c| c.source_id.clone()).collect::<Vec<_>>();
    let index = assemble_dataset(spec, &ids(suspicious), &ids(normal))?;
    let lookup: HashMap<(Label, &str), &Clip> =
        suspicious.iter().chain(normal).map(|c| ((c.label, c.source_id.as_str()), c)).collect();
    let clips = index
        .entries
        .iter()
        .map(|e| {
            let clip = lookup[&(e.label, e.source_id.as_str())];
            if e.flipped {
                flip_horizontal(clip)
            } else {
                clip.clone()
            }
        })
        .collect();
    Ok(Materialized { index, clips })
}

fn source_pools(spec: &DatasetSpec, source: &DataSource) -> Result<(Vec<Clip>, Vec<Clip>), HarnessError> {
    let (depth, resolution) = spec.clip_shape()?;
    match source {
        DataSource::Synthetic { per_class, seed } => {
            let pools = synth_generate(*per_class, resolution, depth, *seed)?;
            Ok((pools.suspicious, pools.normal))
        }
        DataSource::Pools { suspicious, normal, loop_pad } => Ok((
            load_pool(suspicious, Label::Suspicious, depth, resolution, *loop_pad)?
                .into_iter()
                .map(|(c, _)| c)
                .collect(),
            load_pool(normal, Label::Normal, depth, resolution, *loop_pad)?.into_iter().map(|(c, _)| c).collect(),
        )),
    }
}

/// Trains for `epochs` passes and returns the loss of each.
pub fn fit(
    net: &mut Network<f32>,
    clips: &[&Clip],
    epochs: usize,
    rng: &mut SeededRng,
) -> Result<Vec<f64>, HarnessError> {
    net.set_training(true);
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let loss = train_epoch(net, clips, rng)?;
        log::debug!("epoch {} loss {loss:.6}", epoch + 1);
        losses.push(loss);
    }
    net.set_training(false);
    Ok(losses)
}

struct Trained {
    result: EvalResult,
    final_loss: f64,
}

fn train_and_test(
    spec: &ExperimentSpec,
    data: &Materialized,
    index: &DatasetIndex,
    in_test: impl Fn(usize) -> bool,
    seed: u64,
    shuffle_stream: u64,
) -> Result<Trained, HarnessError> {
    let (depth, resolution) = index.spec.clip_shape()?;
    let config = spec
        .architecture
        .config(depth, resolution)
        .with_seed(seed)
        .with_learning_rate(spec.learning_rate)
        .with_batch_size(spec.batch_size)
        .with_epochs(spec.epochs);
    let (test, train): (Vec<(usize, &Clip)>, Vec<(usize, &Clip)>) =
        data.clips.iter().enumerate().partition(|&(i, _)| in_test(i));
    let train: Vec<&Clip> = train.into_iter().map(|(_, c)| c).collect();
    let test: Vec<&Clip> = test.into_iter().map(|(_, c)| c).collect();
    let mut net = build_network::<f32>(&config)?;
    let mut rng = seeded_stream(seed, shuffle_stream);
    let losses = fit(&mut net, &train, spec.epochs, &mut rng)?;
    Ok(Trained { result: evaluate(&net, &test)?, final_loss: losses.last().copied().unwrap_or(f64::NAN) })
}

fn run_once(spec: &ExperimentSpec, data: &Materialized, run: usize) -> Result<RunRecord, HarnessError> {
    let seed = spec.run_seed(run);
    if spec.folds == 0 {
        let fraction = spec.test_percent()?.unwrap_or(DEFAULT_TEST_PERCENT) as f64 / 100.0;
        let index = split_train_test(&data.index, fraction, seed)?;
        let is_test = |i: usize| index.entries[i].split == Some(Split::Test);
        let t = train_and_test(spec, data, &index, is_test, seed, streams::SHUFFLE)?;
        return Ok(RunRecord {
            run,
            seed,
            result: Some(t.result),
            fold_results: Vec::new(),
            final_loss: Some(t.final_loss),
            error: None,
        });
    }
    let index = make_folds(&data.index, spec.folds, seed)?;
    let mut pooled = ConfusionMatrix::default();
    let mut fold_results = Vec::with_capacity(spec.folds);
    let mut loss_sum = 0.0;
    for fold in 0..spec.folds {
        let is_test = |i: usize| index.entries[i].fold == Some(fold);
        let stream = streams::SHUFFLE | ((fold as u64 + 1) << 32);
        let t = train_and_test(spec, data, &index, is_test, seed, stream)?;
        pooled.merge(&t.result.confusion);
        fold_results.push(t.result);
        loss_sum += t.final_loss;
    }
    Ok(RunRecord {
        run,
        seed,
        result: Some(EvalResult::from_confusion(pooled)?),
        fold_results,
        final_loss: Some(loss_sum / spec.folds as f64),
        error: None,
    })
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn guarded_run(spec: &ExperimentSpec, data: &Materialized, run: usize) -> (RunRecord, f64) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| run_once(spec, data, run)));
    let error = match outcome {
        Ok(Ok(record)) => return (record, start.elapsed().as_secs_f64()),
        Ok(Err(e)) => e.to_string(),
        Err(payload) => format!("run panicked: {}", panic_message(payload)),
    };
    log::warn!("{} run {run} failed: {error}", spec.dataset);
    let record = RunRecord {
        run,
        seed: spec.run_seed(run),
        result: None,
        fold_results: Vec::new(),
        final_loss: None,
        error: Some(error),
    };
    (record, start.elapsed().as_secs_f64())
}

/// Runs `spec.runs` independent trainings with seeds `seed_base + run`.
///
/// Runs are spread over [`worker_threads`] threads and merged in run order.
/// A failing run is recorded in its [`RunRecord`] and the others continue.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome, HarnessError> {
    spec.validate()?;
    let dataset = spec.dataset_spec()?;
    let (suspicious, normal) = source_pools(&dataset, &spec.source)?;
    let data = materialize(&dataset, &suspicious, &normal)?;
    drop((suspicious, normal));

    let slots: Mutex<Vec<Option<(RunRecord, f64)>>> = Mutex::new(vec![None; spec.runs]);
    let next = AtomicUsize::new(0);
    let threads = worker_threads().min(spec.runs);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let run = next.fetch_add(1, Ordering::Relaxed);
                if run >= spec.runs {
                    break;
                }
                let done = guarded_run(spec, &data, run);
                if let Some(acc) = done.0.accuracy() {
                    log::info!("{} run {}/{}: accuracy {acc:.4} ({:.1}s)", spec.dataset, run + 1, spec.runs, done.1);
                }
                slots.lock().expect("no panics while holding the lock")[run] = Some(done);
            });
        }
    });
    let (records, wall_seconds): (Vec<RunRecord>, Vec<f64>) = slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|slot| slot.expect("every run is claimed by a worker"))
        .unzip();

    let report = RunReport {
        dataset: spec.dataset.clone(),
        runs: spec.runs,
        folds: spec.folds,
        test_percent: spec.test_percent()?,
        epochs: spec.epochs,
        seed_base: spec.seed_base,
        architecture: spec.architecture,
        batch_size: spec.batch_size,
        learning_rate: spec.learning_rate,
        summary: RunReport::summarize(&records),
        records,
    };
    Ok(ExperimentOutcome { report, wall_seconds })
}
