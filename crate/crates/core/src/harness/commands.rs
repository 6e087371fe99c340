//! The work behind each CLI subcommand.
//!
//! Directory conventions:
//!
//! * a frames directory holds one `<video_id>.pcb` (grayscale `[T, H, W]`)
//!   or `<video_id>.rgb.pcb` (`[3·T, H, W]`, RGB planes per frame) per video,
//! * a pool directory holds segment files of one class; sorted by name
//!   (digit runs compared numerically) they become `SB_1, SB_2, …` or
//!   `NB_1, NB_2, …`,
//! * a dataset directory holds `clips/`, `index.csv` and `dataset.json`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::{fit, materialize};
use super::{
    confusion_table, emit_report, grid_expand, render_csv, run_experiment, summary_csv, summary_table, Architecture,
    Grid, HarnessError, ReportFormat, RunReport,
};
use crate::dataset::{
    clip_file_name, parse_dataset_name, prepare_clip, read_clip, rgb_video_to_grayscale, split_train_test,
    synth_generate, write_clip, Clip, DatasetIndex, DatasetSpec, Label, Resolution, Split,
};
use crate::network::{build_network, evaluate, load_checkpoint, save_checkpoint, EvalResult};
use crate::pcb::{
    category_counts, extract_pcb_segments, load_manifest, segment_timeline, timeline_runs, FrameCategory,
};
use crate::tensor::rng::{seeded_stream, streams};
use crate::tensor::{AdamConfig, Tensor};

/// Seed of the train/test split written by `build-dataset`.
pub const BUILD_SPLIT_SEED: u64 = 0;
pub const RGB_SUFFIX: &str = ".rgb.pcb";
pub const GRAY_SUFFIX: &str = ".pcb";

fn natural_cmp(a: &str, b: &str) -> Ordering {
    let chunks = |s: &str| -> Vec<(bool, String)> {
        let mut out: Vec<(bool, String)> = Vec::new();
        for ch in s.chars() {
            let digit = ch.is_ascii_digit();
            match out.last_mut() {
                Some((d, text)) if *d == digit => text.push(ch),
                _ => out.push((digit, ch.to_string())),
            }
        }
        out
    };
    let (ca, cb) = (chunks(a), chunks(b));
    for (x, y) in ca.iter().zip(&cb) {
        let ord = match (x, y) {
            ((true, p), (true, q)) => {
                let (p, q) = (p.trim_start_matches('0'), q.trim_start_matches('0'));
                p.len().cmp(&q.len()).then_with(|| p.cmp(q))
            }
            _ => x.1.cmp(&y.1),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len()).then_with(|| a.cmp(b))
}

/// Segment files of a pool directory in pool order.
pub fn read_pool_dir(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(HarnessError::io(dir))? {
        let entry = entry.map_err(HarnessError::io(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(GRAY_SUFFIX) && entry.path().is_file() {
            names.push(name);
        }
    }
    names.sort_by(|a, b| natural_cmp(a, b));
    Ok(names.into_iter().map(|n| dir.join(n)).collect())
}

/// Reads a segment file as a grayscale `[L, H, W]` volume.
pub fn load_segment(path: &Path) -> Result<Tensor<f32>, HarnessError> {
    let raw = read_clip(path).map_err(|e| with_path(e, path))?;
    let is_rgb = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(RGB_SUFFIX));
    Ok(if is_rgb { rgb_video_to_grayscale(&raw)? } else { raw })
}

fn with_path(e: crate::dataset::DatasetError, path: &Path) -> HarnessError {
    match e {
        crate::dataset::DatasetError::Io(source) => HarnessError::Io { path: path.into(), source },
        other => other.into(),
    }
}

/// Loads a pool directory as unflipped clips at the given shape, paired
/// with the file each came from.
pub fn load_pool(
    dir: &Path,
    label: Label,
    depth: usize,
    resolution: Resolution,
    loop_pad: bool,
) -> Result<Vec<(Clip, PathBuf)>, HarnessError> {
    read_pool_dir(dir)?
        .into_iter()
        .enumerate()
        .map(|(i, path)| {
            let source_id = format!("{}_{}", label.prefix(), i + 1);
            let segment = load_segment(&path)?;
            let clip = prepare_clip(&segment, label, &source_id, depth, resolution, loop_pad, false)
                .map_err(|e| HarnessError::Invalid(format!("{}: {e}", path.display())))?;
            Ok((clip, path))
        })
        .collect()
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(HarnessError::io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentFile {
    pub ordinal: usize,
    pub start: usize,
    pub end: usize,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineRun {
    pub category: FrameCategory,
    pub start: usize,
    pub end: usize,
}

/// Written as `<video_id>.segments.json` next to the segment files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub video_id: String,
    pub frame_count: usize,
    pub segments: Vec<SegmentFile>,
    pub dropped_zero_width: usize,
    pub unknown_fields: Vec<String>,
    pub timeline: Vec<TimelineRun>,
    pub category_counts: BTreeMap<FrameCategory, usize>,
}

/// Cuts the PCB segments of one annotated video out of its frame file.
pub fn extract(manifest: &Path, frames: &Path, out: &Path) -> Result<ExtractSummary, HarnessError> {
    let loaded = load_manifest(manifest).map_err(|e| match e {
        crate::pcb::PcbError::Io(source) => HarnessError::Io { path: manifest.into(), source },
        other => other.into(),
    })?;
    let m = &loaded.manifest;
    let gray = frames.join(format!("{}{GRAY_SUFFIX}", m.video_id));
    let rgb = frames.join(format!("{}{RGB_SUFFIX}", m.video_id));
    let (path, channels, suffix) = if rgb.is_file() {
        (rgb, 3, RGB_SUFFIX)
    } else if gray.is_file() {
        (gray, 1, GRAY_SUFFIX)
    } else {
        return Err(HarnessError::Invalid(format!(
            "no frame file {} or {} for video {}",
            gray.display(),
            rgb.display(),
            m.video_id
        )));
    };
    let video = read_clip(&path).map_err(|e| with_path(e, &path))?;
    let dims = video.dims().to_vec();
    if dims[0] % channels != 0 || dims[0] / channels != m.frame_count {
        return Err(HarnessError::Invalid(format!(
            "{} holds {} frames, manifest says {}",
            path.display(),
            dims[0] / channels,
            m.frame_count
        )));
    }
    let extraction = extract_pcb_segments(m)?;
    let timeline = segment_timeline(m)?;
    create_dir(out)?;
    let plane = channels * dims[1] * dims[2];
    let mut segments = Vec::new();
    for s in &extraction.segments {
        let data = video.data()[s.start * plane..s.end * plane].to_vec();
        let tensor = Tensor::new(vec![channels * s.len(), dims[1], dims[2]], data)?;
        let file = format!("{}_pcb{}{suffix}", m.video_id, s.ordinal);
        write_clip(&out.join(&file), &tensor)?;
        segments.push(SegmentFile { ordinal: s.ordinal, start: s.start, end: s.end, file });
    }
    let summary = ExtractSummary {
        video_id: m.video_id.clone(),
        frame_count: m.frame_count,
        segments,
        dropped_zero_width: extraction.dropped_zero_width,
        unknown_fields: loaded.unknown_fields.clone(),
        timeline: timeline_runs(&timeline)
            .into_iter()
            .map(|(category, start, end)| TimelineRun { category, start, end })
            .collect(),
        category_counts: category_counts(&timeline),
    };
    write_json(&out.join(format!("{}.segments.json", m.video_id)), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceFile {
    pub source_id: String,
    pub label: Label,
    pub file: PathBuf,
}

/// Contents of `dataset.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    /// Seed of the stored train/test split, if the name has a test size.
    pub split_seed: Option<u64>,
    pub loop_pad: bool,
    pub sources: Vec<SourceFile>,
}

/// Assembles a named dataset from two pool directories and writes it out.
pub fn build_dataset(
    name: &str,
    suspicious: &Path,
    normal: &Path,
    out: &Path,
    loop_pad: bool,
) -> Result<(DatasetInfo, DatasetIndex), HarnessError> {
    let spec = parse_dataset_name(name)?;
    let (depth, resolution) = spec.clip_shape()?;
    let s_pool = load_pool(suspicious, Label::Suspicious, depth, resolution, loop_pad)?;
    let n_pool = load_pool(normal, Label::Normal, depth, resolution, loop_pad)?;
    let sources = s_pool
        .iter()
        .chain(&n_pool)
        .map(|(c, path)| SourceFile { source_id: c.source_id.clone(), label: c.label, file: path.clone() })
        .collect();
    let (s_clips, n_clips): (Vec<Clip>, Vec<Clip>) =
        (s_pool.into_iter().map(|(c, _)| c).collect(), n_pool.into_iter().map(|(c, _)| c).collect());
    let data = materialize(&spec, &s_clips, &n_clips)?;
    let index = match spec.test_fraction() {
        Some(f) => split_train_test(&data.index, f, BUILD_SPLIT_SEED)?,
        None => data.index,
    };

    create_dir(&out.join("clips"))?;
    for (entry, clip) in index.entries.iter().zip(&data.clips) {
        write_clip(&out.join(&entry.clip_path), &clip.frames)?;
    }
    index.save(&out.join("index.csv"))?;
    let info = DatasetInfo {
        name: spec.to_string(),
        split_seed: spec.test_fraction().map(|_| BUILD_SPLIT_SEED),
        loop_pad,
        sources,
    };
    write_json(&out.join("dataset.json"), &info)?;
    Ok((info, index))
}

/// A dataset directory loaded back into memory.
pub struct OpenDataset {
    pub info: DatasetInfo,
    pub spec: DatasetSpec,
    pub index: DatasetIndex,
    /// One clip per index entry.
    pub clips: Vec<Clip>,
}

impl OpenDataset {
    /// Clips on one side of the stored split; every clip when the dataset
    /// has no split.
    pub fn side(&self, split: Split) -> Vec<&Clip> {
        if self.index.entries.iter().all(|e| e.split.is_none()) {
            return self.clips.iter().collect();
        }
        self.index.entries.iter().zip(&self.clips).filter(|(e, _)| e.split == Some(split)).map(|(_, c)| c).collect()
    }
}

pub fn open_dataset(dir: &Path) -> Result<OpenDataset, HarnessError> {
    let info: DatasetInfo = read_json(&dir.join("dataset.json"))?;
    let spec = parse_dataset_name(&info.name)?;
    let index_path = dir.join("index.csv");
    let index = DatasetIndex::load(spec, &index_path).map_err(|e| with_path(e, &index_path))?;
    let (depth, resolution) = spec.clip_shape()?;
    let clips = index
        .entries
        .iter()
        .map(|e| {
            let path = dir.join(&e.clip_path);
            let frames = read_clip(&path).map_err(|err| with_path(err, &path))?;
            if frames.dims() != [depth, resolution.height, resolution.width] {
                return Err(HarnessError::Invalid(format!(
                    "{} is {:?}, dataset {} expects [{depth}, {}, {}]",
                    path.display(),
                    frames.dims(),
                    info.name,
                    resolution.height,
                    resolution.width
                )));
            }
            let mut clip = Clip::new(frames, e.label, e.source_id.clone())?;
            clip.flipped = e.flipped;
            Ok(clip)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(OpenDataset { info, spec, index, clips })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub per_class: usize,
    pub resolution: Resolution,
    pub depth: usize,
    pub seed: u64,
    pub files: usize,
}

/// Writes synthetic pools as `suspicious/SB_i.pcb` and `normal/NB_i.pcb`.
pub fn synth(
    per_class: usize,
    resolution: Resolution,
    depth: usize,
    seed: u64,
    out: &Path,
) -> Result<SynthSummary, HarnessError> {
    let pools = synth_generate(per_class, resolution, depth, seed)?;
    for (dir, clips) in [("suspicious", &pools.suspicious), ("normal", &pools.normal)] {
        let dir = out.join(dir);
        create_dir(&dir)?;
        for c in clips.iter() {
            write_clip(&dir.join(clip_file_name(&c.source_id, false)), &c.frames)?;
        }
    }
    Ok(SynthSummary { per_class, resolution, depth, seed, files: 2 * per_class })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub architecture: Architecture,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: crate::network::DEFAULT_EPOCHS,
            batch_size: crate::network::DEFAULT_BATCH_SIZE,
            learning_rate: AdamConfig::default().learning_rate,
            seed: 0,
            architecture: Architecture::PAPER,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub dataset: String,
    pub train_clips: usize,
    pub parameter_count: usize,
    pub step_count: u64,
    pub losses: Vec<f64>,
}

/// Trains on the dataset's train side and saves the final checkpoint.
pub fn train(dataset: &Path, options: &TrainOptions, checkpoint: &Path) -> Result<TrainSummary, HarnessError> {
    let data = open_dataset(dataset)?;
    let (depth, resolution) = data.spec.clip_shape()?;
    let config = options
        .architecture
        .config(depth, resolution)
        .with_seed(options.seed)
        .with_learning_rate(options.learning_rate)
        .with_batch_size(options.batch_size)
        .with_epochs(options.epochs);
    config.validate()?;
    let mut net = build_network::<f32>(&config)?;
    let clips = data.side(Split::Train);
    let mut rng = seeded_stream(options.seed, streams::SHUFFLE);
    let losses = fit(&mut net, &clips, options.epochs, &mut rng)?;
    save_checkpoint(&net, checkpoint).map_err(|e| match e {
        crate::network::NetworkError::Io(source) => HarnessError::Io { path: checkpoint.into(), source },
        other => other.into(),
    })?;
    Ok(TrainSummary {
        dataset: data.info.name.clone(),
        train_clips: clips.len(),
        parameter_count: net.parameter_count(),
        step_count: net.step_count(),
        losses,
    })
}

/// Written by `eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub checkpoint: PathBuf,
    /// `"test"`, or `"all"` for a dataset without a split.
    pub evaluated: String,
    pub result: EvalResult,
}

impl EvalReport {
    pub fn table(&self) -> String {
        let name = parse_dataset_name(&self.dataset).map_or(self.dataset.clone(), |s| s.short_name());
        confusion_table(&name, &self.result)
    }
}

pub fn eval(dataset: &Path, checkpoint: &Path, report: &Path) -> Result<EvalReport, HarnessError> {
    let data = open_dataset(dataset)?;
    let net = load_checkpoint(checkpoint).map_err(|e| match e {
        crate::network::NetworkError::Io(source) => HarnessError::Io { path: checkpoint.into(), source },
        other => other.into(),
    })?;
    let has_split = data.index.entries.iter().any(|e| e.split.is_some());
    let clips = data.side(Split::Test);
    let out = EvalReport {
        dataset: data.info.name.clone(),
        checkpoint: checkpoint.into(),
        evaluated: if has_split { "test" } else { "all" }.into(),
        result: evaluate(&net, &clips)?,
    };
    write_json(report, &out)?;
    Ok(out)
}

/// Runs every experiment of a grid. `runs`, `folds` and `seed` override the
/// grid file. Writes per-experiment `<dataset>.json` and `<dataset>.csv`,
/// `summary.csv`, `summary.txt`, and wall times in `timings.csv`.
pub fn experiment(
    grid: &Path,
    runs: usize,
    folds: usize,
    seed: u64,
    out: &Path,
) -> Result<Vec<RunReport>, HarnessError> {
    let mut grid = Grid::load(grid)?;
    grid.runs = Some(runs);
    grid.folds = Some(folds);
    grid.seed = Some(seed);
    let specs = grid_expand(&grid)?;
    create_dir(out)?;
    let mut reports = Vec::with_capacity(specs.len());
    let mut timings = csv::Writer::from_writer(Vec::new());
    timings.write_record(["dataset", "run", "wall_seconds"])?;
    for (i, spec) in specs.iter().enumerate() {
        log::info!("experiment {}/{}: {}", i + 1, specs.len(), spec.dataset);
        let outcome = run_experiment(spec)?;
        emit_report(&outcome.report, ReportFormat::Json, &out.join(format!("{}.json", spec.dataset)))?;
        let csv_path = out.join(format!("{}.csv", spec.dataset));
        fs::write(&csv_path, render_csv(&outcome.report)?).map_err(HarnessError::io(&csv_path))?;
        for (run, secs) in outcome.wall_seconds.iter().enumerate() {
            timings.write_record([spec.dataset.clone(), run.to_string(), format!("{secs:.3}")])?;
        }
        reports.push(outcome.report);
    }
    let mut text = summary_table(&reports);
    for r in &reports {
        if let Some(best) = r.best_record().and_then(|b| b.result) {
            let name = parse_dataset_name(&r.dataset).map_or(r.dataset.clone(), |s| s.short_name());
            text.push('\n');
            text.push_str(&confusion_table(&name, &best));
        }
    }
    let write = |name: &str, body: String| {
        let path = out.join(name);
        fs::write(&path, body).map_err(HarnessError::io(&path))
    };
    write("summary.csv", summary_csv(&reports)?)?;
    write("summary.txt", text)?;
    let timings = timings.into_inner().map_err(|e| HarnessError::Invalid(format!("csv buffer: {e}")))?;
    write("timings.csv", String::from_utf8(timings).expect("csv writer emits UTF-8"))?;
    Ok(reports)
}
