//! Stratified, source-grouped train/test splits and k-fold assignment.
//!
//! An original clip and its flipped copy share a `source_id` and always land
//! on the same side of a split and in the same fold.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{DatasetError, DatasetIndex, Label, Split};
use crate::tensor::rng::{seeded_stream, streams};

/// Entry positions grouped by source, per class, in first-appearance order.
fn groups_by_class(index: &DatasetIndex) -> BTreeMap<Label, Vec<Vec<usize>>> {
    let mut out: BTreeMap<Label, Vec<Vec<usize>>> = BTreeMap::new();
    let mut seen: BTreeMap<(Label, &str), usize> = BTreeMap::new();
    for (i, e) in index.entries.iter().enumerate() {
        let groups = out.entry(e.label).or_default();
        match seen.get(&(e.label, e.source_id.as_str())) {
            Some(&g) => groups[g].push(i),
            None => {
                seen.insert((e.label, &e.source_id), groups.len());
                groups.push(vec![i]);
            }
        }
    }
    out
}

/// Marks roughly `test_fraction` of each class as test, whole source groups
/// at a time. Any fold assignment is left untouched.
pub fn split_train_test(index: &DatasetIndex, test_fraction: f64, seed: u64) -> Result<DatasetIndex, DatasetError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::Validation(format!("test fraction {test_fraction} is not in (0, 1)")));
    }
    let mut out = index.clone();
    let mut rng = seeded_stream(seed, streams::SPLIT);
    for (label, mut groups) in groups_by_class(index) {
        groups.shuffle(&mut rng);
        let total: usize = groups.iter().map(Vec::len).sum();
        let target = (test_fraction * total as f64).round() as usize;
        let mut taken = 0usize;
        for group in &groups {
            let side = if taken.abs_diff(target) > (taken + group.len()).abs_diff(target) {
                taken += group.len();
                Split::Test
            } else {
                Split::Train
            };
            for &i in group {
                out.entries[i].split = Some(side);
            }
        }
        if taken == 0 || taken == total {
            return Err(DatasetError::Stratification(format!(
                "{label} class of {total} entries gets {taken} test entries at fraction {test_fraction}"
            )));
        }
    }
    Ok(out)
}

/// Assigns every entry a fold in `0..k`. Within each class, shuffled source
/// groups go to the fold currently holding the fewest entries of that class.
pub fn make_folds(index: &DatasetIndex, k: usize, seed: u64) -> Result<DatasetIndex, DatasetError> {
    if k < 2 {
        return Err(DatasetError::Validation(format!("{k} folds: need at least 2")));
    }
    let mut out = index.clone();
    let mut rng = seeded_stream(seed, streams::FOLDS);
    for (label, mut groups) in groups_by_class(index) {
        if k > groups.len() {
            return Err(DatasetError::Stratification(format!(
                "{k} folds requested but the {label} class has only {} sources",
                groups.len()
            )));
        }
        groups.shuffle(&mut rng);
        let mut fill = vec![0usize; k];
        for group in &groups {
            let fold = (0..k).min_by_key(|&f| fill[f]).expect("k >= 2");
            fill[fold] += group.len();
            for &i in group {
                out.entries[i].fold = Some(fold);
            }
        }
    }
    Ok(out)
}
