//! Dataset composition from indexed source pools, and the index file.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{clip_file_name, Balance, DatasetError, DatasetSpec, Label};

/// Distinct sources per class in the original footage (SB₁..SB₆₀, NB₁..NB₆₀).
pub const PAPER_SOURCES_PER_CLASS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssemblyOptions {
    /// Class counts above this are filled with originals plus flipped
    /// versions of the first `count / 2` sources.
    pub sources_per_class: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { sources_per_class: PAPER_SOURCES_PER_CLASS }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    /// Relative to the dataset directory.
    pub clip_path: String,
    #[serde(with = "label_as_index")]
    pub label: Label,
    pub source_id: String,
    pub flipped: bool,
    pub split: Option<Split>,
    pub fold: Option<usize>,
}

mod label_as_index {
    use super::Label;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(label: &Label, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(label.index() as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Label, D::Error> {
        let i = u8::deserialize(d)?;
        Label::from_index(i as usize).ok_or_else(|| de::Error::custom(format!("label {i} is not 0 or 1")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex {
    pub spec: DatasetSpec,
    pub entries: Vec<IndexEntry>,
}

impl DatasetIndex {
    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &IndexEntry> {
        self.entries.iter().filter(move |e| e.split == Some(split))
    }

    /// Entries whose fold is `fold` (test side) or any other fold (train side).
    pub fn fold_partition(&self, fold: usize) -> (Vec<&IndexEntry>, Vec<&IndexEntry>) {
        self.entries.iter().partition(|e| e.fold != Some(fold))
    }

    /// `(source_id, flipped)` pairs for one class, in index order.
    pub fn composition(&self, label: Label) -> Vec<(String, bool)> {
        self.entries.iter().filter(|e| e.label == label).map(|e| (e.source_id.clone(), e.flipped)).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(spec: DatasetSpec, reader: R) -> Result<Self, DatasetError> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let expected = ["clip_path", "label", "source_id", "flipped", "split", "fold"];
        if headers.iter().ne(expected) {
            return Err(DatasetError::Validation(format!(
                "index header is {:?}, expected {}",
                headers.iter().collect::<Vec<_>>(),
                expected.join(",")
            )));
        }
        let entries = r.deserialize().collect::<Result<Vec<IndexEntry>, _>>()?;
        Ok(DatasetIndex { spec, entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(spec: DatasetSpec, path: &Path) -> Result<Self, DatasetError> {
        Self::read_csv(spec, fs::File::open(path)?)
    }
}

/// Source ids `SB_1..SB_n` or `NB_1..NB_n`.
pub fn indexed_pool(label: Label, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{}_{i}", label.prefix())).collect()
}

pub fn assemble_dataset(
    spec: &DatasetSpec,
    suspicious_pool: &[String],
    normal_pool: &[String],
) -> Result<DatasetIndex, DatasetError> {
    assemble_dataset_with(spec, suspicious_pool, normal_pool, AssemblyOptions::default())
}

/// Picks sources by ascending pool position. A class count `c` is met with
/// `c` originals when `c <= sources_per_class`, otherwise with the first
/// `c / 2` sources in both orientations. The `flip` suffix swaps every
/// original for its flipped version.
pub fn assemble_dataset_with(
    spec: &DatasetSpec,
    suspicious_pool: &[String],
    normal_pool: &[String],
    options: AssemblyOptions,
) -> Result<DatasetIndex, DatasetError> {
    if spec.balance == Balance::Unbalanced && spec.normal_count != 2 * spec.suspicious_count {
        return Err(DatasetError::Validation(format!("{spec} does not keep the 1:2 ratio")));
    }
    let mut entries = Vec::with_capacity(spec.total());
    for (label, count, pool) in
        [(Label::Suspicious, spec.suspicious_count, suspicious_pool), (Label::Normal, spec.normal_count, normal_pool)]
    {
        for (source_id, flipped) in class_composition(label, count, pool.len(), spec.flip, options)? {
            let source_id = pool[source_id].clone();
            entries.push(IndexEntry {
                clip_path: format!("clips/{}", clip_file_name(&source_id, flipped)),
                label,
                source_id,
                flipped,
                split: None,
                fold: None,
            });
        }
    }
    Ok(DatasetIndex { spec: *spec, entries })
}

fn class_composition(
    label: Label,
    count: usize,
    available: usize,
    flip: bool,
    options: AssemblyOptions,
) -> Result<Vec<(usize, bool)>, DatasetError> {
    let limit = options.sources_per_class;
    if count <= limit {
        if count > available {
            return Err(DatasetError::InsufficientSamples { label, required: count, available });
        }
        return Ok((0..count).map(|i| (i, flip)).collect());
    }
    if flip {
        return Err(DatasetError::Validation(format!(
            "{count} {label} samples exceed {limit} sources, so they already include flipped copies; drop the flip suffix"
        )));
    }
    if !count.is_multiple_of(2) || count / 2 > limit {
        return Err(DatasetError::InsufficientSamples {
            label,
            required: count.div_ceil(2),
            available: available.min(limit),
        });
    }
    let sources = count / 2;
    if sources > available {
        return Err(DatasetError::InsufficientSamples { label, required: sources, available });
    }
    Ok((0..sources).map(|i| (i, false)).chain((0..sources).map(|i| (i, true))).collect())
}
