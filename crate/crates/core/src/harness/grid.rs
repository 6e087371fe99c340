//! Experiment grids in TOML.
//!
//! ```toml
//! runs = 3
//! folds = 0
//!
//! [source]
//! kind = "synthetic"
//! per_class = 60
//! seed = 0
//!
//! [[groups]]
//! datasets = ["SBT_balanced_60"]
//! test_percents = [20]
//! depths = [10, 30, 90]
//! resolutions = ["32x24", "40x30", "80x60", "160x120"]
//! ```
//!
//! Each group is the Cartesian product of its axes; the grid is the
//! concatenation of its groups. `flip` defaults to `[false]`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Architecture, DataSource, ExperimentSpec, HarnessError};
use crate::dataset::{format_dataset_name, parse_dataset_name, Resolution};
use crate::tensor::AdamConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridGroup {
    /// Base names fixing balance and ratio, e.g. `SBT_unbalanced_30s60n`.
    pub datasets: Vec<String>,
    pub test_percents: Vec<u32>,
    pub depths: Vec<usize>,
    pub resolutions: Vec<Resolution>,
    #[serde(default = "no_flip")]
    pub flip: Vec<bool>,
}

fn no_flip() -> Vec<bool> {
    vec![false]
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridNetwork {
    pub filters: Option<[usize; 4]>,
    pub dense_units: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub runs: Option<usize>,
    pub folds: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub source: DataSource,
    #[serde(default)]
    pub network: GridNetwork,
    pub groups: Vec<GridGroup>,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Grid, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Grid { path: PathBuf::new(), detail: e.to_string() })
    }

    /// Loads a grid file. Relative pool directories are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Grid, HarnessError> {
        let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let mut grid: Grid =
            toml::from_str(&text).map_err(|e| HarnessError::Grid { path: path.into(), detail: e.to_string() })?;
        if let DataSource::Pools { suspicious, normal, .. } = &mut grid.source {
            let base = path.parent().unwrap_or(Path::new(""));
            for dir in [suspicious, normal] {
                if dir.is_relative() {
                    *dir = base.join(&*dir);
                }
            }
        }
        Ok(grid)
    }

    fn architecture(&self) -> Architecture {
        let paper = Architecture::PAPER;
        Architecture {
            filters: self.network.filters.unwrap_or(paper.filters),
            dense_units: self.network.dense_units.unwrap_or(paper.dense_units),
        }
    }
}

fn axis_error(detail: String) -> HarnessError {
    HarnessError::Grid { path: PathBuf::new(), detail }
}

/// Expands every group into experiment specs with canonical dataset names.
pub fn grid_expand(grid: &Grid) -> Result<Vec<ExperimentSpec>, HarnessError> {
    if grid.groups.is_empty() {
        return Err(axis_error("grid has no groups".into()));
    }
    let mut out = Vec::new();
    for (g, group) in grid.groups.iter().enumerate() {
        let empty = [
            ("datasets", group.datasets.is_empty()),
            ("test_percents", group.test_percents.is_empty()),
            ("depths", group.depths.is_empty()),
            ("resolutions", group.resolutions.is_empty()),
            ("flip", group.flip.is_empty()),
        ];
        if let Some((axis, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(axis_error(format!("group {g}: axis {axis} is empty")));
        }
        if let Some(t) = group.test_percents.iter().find(|&&t| t == 0 || t >= 100) {
            return Err(axis_error(format!("group {g}: test percent {t} is not in 1..=99")));
        }
        for name in &group.datasets {
            let base = parse_dataset_name(name)?;
            if base.test_percent.is_some() || base.depth.is_some() || base.resolution.is_some() || base.flip {
                return Err(axis_error(format!(
                    "group {g}: dataset {name:?} must name only balance and ratio, the rest comes from the axes"
                )));
            }
            for &t in &group.test_percents {
                for &d in &group.depths {
                    for &flip in &group.flip {
                        for &r in &group.resolutions {
                            let spec = base.with_test_percent(t).with_depth(d).with_resolution(r).with_flip(flip);
                            let mut e = ExperimentSpec::new(format_dataset_name(&spec), grid.source.clone());
                            e.runs = grid.runs.unwrap_or(e.runs);
                            e.folds = grid.folds.unwrap_or(e.folds);
                            e.epochs = grid.epochs.unwrap_or(e.epochs);
                            e.seed_base = grid.seed.unwrap_or(e.seed_base);
                            e.architecture = grid.architecture();
                            e.batch_size = grid.network.batch_size.unwrap_or(e.batch_size);
                            e.learning_rate = grid.network.learning_rate.unwrap_or(AdamConfig::default().learning_rate);
                            e.validate().map_err(|err| axis_error(format!("group {g}: {}: {err}", e.dataset)))?;
                            out.push(e);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
