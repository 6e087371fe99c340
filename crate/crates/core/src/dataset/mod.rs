//! From PCB segments and normal footage to fixed-size training clips.
//!
//! Frames are grayscale in `[0, 1]`. A [`Clip`] is a `[depth, height, width]`
//! volume plus its label and the pool index it came from (`SB_17`, `NB_3`).

mod assemble;
mod clip_io;
mod name;
mod split;
mod synth;
mod transform;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

pub use assemble::{
    assemble_dataset, assemble_dataset_with, indexed_pool, AssemblyOptions, DatasetIndex, IndexEntry, Split,
    PAPER_SOURCES_PER_CLASS,
};
pub use clip_io::{decode_clip, encode_clip, read_clip, write_clip, CLIP_HEADER_LEN, CLIP_MAGIC};
pub use name::{format_dataset_name, parse_dataset_name, Balance, DatasetSpec};
pub use split::{make_folds, split_train_test};
pub use synth::{synth_generate, SynthPools, SYNTH_MIN_DEPTH, SYNTH_MIN_RESOLUTION, SYNTH_NOISE_SIGMA};
pub use transform::{
    flip_horizontal, flip_volume, prepare_clip, resize, resize_volume, rgb_video_to_grayscale, temporal_indices,
    temporal_sample, to_grayscale,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{0}")]
    Validation(String),
    #[error("segment of {length} frames is shorter than depth {depth}")]
    TooShort { length: usize, depth: usize },
    #[error("dataset name {name:?}: bad token {token:?}: {reason}")]
    Parse { name: String, token: String, reason: String },
    #[error("not enough {label} samples: {required} required, {available} available")]
    InsufficientSamples { label: Label, required: usize, available: usize },
    #[error("stratification: {0}")]
    Stratification(String),
    #[error("clip format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Normal = 0,
    Suspicious = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        match index {
            0 => Some(Label::Normal),
            1 => Some(Label::Suspicious),
            _ => None,
        }
    }

    /// Pool prefix: `SB` for suspicious behavior, `NB` for normal behavior.
    pub fn prefix(self) -> &'static str {
        match self {
            Label::Normal => "NB",
            Label::Suspicious => "SB",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Normal => "normal",
            Label::Suspicious => "suspicious",
        })
    }
}

/// Frame size, written `WxH` (e.g. `80x60`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

impl Resolution {
    pub const fn new(width: usize, height: usize) -> Self {
        Resolution { width, height }
    }
}

/// The four resolutions of the experiment grid.
pub const PAPER_RESOLUTIONS: [Resolution; 4] =
    [Resolution::new(160, 120), Resolution::new(80, 60), Resolution::new(40, 30), Resolution::new(32, 24)];
pub const PAPER_DEPTHS: [usize; 3] = [10, 30, 90];
pub const PAPER_TEST_PERCENTS: [u32; 3] = [20, 30, 40];
/// Source footage resolution.
pub const SOURCE_RESOLUTION: Resolution = Resolution::new(320, 240);

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for Resolution {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DatasetError::Validation(format!("resolution {s:?} is not WxH"));
        let (w, h) = s.split_once('x').ok_or_else(bad)?;
        let width: usize = w.parse().map_err(|_| bad())?;
        let height: usize = h.parse().map_err(|_| bad())?;
        if width == 0 || height == 0 {
            return Err(bad());
        }
        Ok(Resolution { width, height })
    }
}

impl Serialize for Resolution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Resolution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    /// `[depth, height, width]`, values in `[0, 1]`.
    pub frames: Tensor<f32>,
    pub label: Label,
    pub source_id: String,
    pub flipped: bool,
}

impl Clip {
    pub fn new(frames: Tensor<f32>, label: Label, source_id: impl Into<String>) -> Result<Self, DatasetError> {
        let clip = Clip { frames, label, source_id: source_id.into(), flipped: false };
        clip.validate()?;
        Ok(clip)
    }

    pub fn depth(&self) -> usize {
        self.frames.dims()[0]
    }

    pub fn resolution(&self) -> Resolution {
        Resolution::new(self.frames.dims()[2], self.frames.dims()[1])
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.frames.rank() != 3 {
            return Err(DatasetError::Validation(format!(
                "clip {} must be [depth, height, width], got {:?}",
                self.source_id,
                self.frames.dims()
            )));
        }
        if let Some(v) = self.frames.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(DatasetError::Validation(format!(
                "clip {} has pixel value {v} outside [0, 1]",
                self.source_id
            )));
        }
        Ok(())
    }

    /// File name used inside a materialized dataset, e.g. `SB_3_flip.pcb`.
    pub fn file_name(&self) -> String {
        clip_file_name(&self.source_id, self.flipped)
    }
}

pub fn clip_file_name(source_id: &str, flipped: bool) -> String {
    if flipped {
        format!("{source_id}_flip.pcb")
    } else {
        format!("{source_id}.pcb")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_parses_and_prints() {
        let r: Resolution = "80x60".parse().unwrap();
        assert_eq!(r, Resolution::new(80, 60));
        assert_eq!(r.to_string(), "80x60");
        assert!("80by60".parse::<Resolution>().is_err());
        assert!("0x60".parse::<Resolution>().is_err());
    }

    #[test]
    fn paper_divisors_of_source_resolution() {
        // 320x240 divided by 2, 4, 8 and 10
        let divided: Vec<_> = [2, 4, 8, 10]
            .iter()
            .map(|d| Resolution::new(SOURCE_RESOLUTION.width / d, SOURCE_RESOLUTION.height / d))
            .collect();
        assert_eq!(divided, PAPER_RESOLUTIONS.to_vec());
    }

    #[test]
    fn clip_rejects_out_of_range_pixels() {
        let frames = Tensor::new(vec![1, 1, 2], vec![0.5, 1.5]).unwrap();
        assert!(Clip::new(frames, Label::Normal, "NB_1").is_err());
    }
}
