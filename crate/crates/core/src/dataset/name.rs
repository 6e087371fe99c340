//! Dataset names such as `SBT_unbalanced_60s120n_30t_30f_40x30_flip`.
//!
//! Grammar (tokens joined by `_`):
//!
//! ```text
//! [SBT] <balance> <ratio> [<test>t] [<depth>f] [<W>x<H>] [flip]
//! balance := balanced | bal | unbalanced | unb
//! ratio   := <total>                 (balanced: total/2 per class)
//!          | <s>s<n>n                (unbalanced)
//! ```
//!
//! Optional tokens must appear in the order shown. Names are formatted in the
//! long form, with the `SBT` prefix, so `parse ∘ format` is the identity.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DatasetError, Resolution, PAPER_DEPTHS, PAPER_RESOLUTIONS, PAPER_TEST_PERCENTS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balance {
    Balanced,
    Unbalanced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DatasetSpec {
    pub balance: Balance,
    pub suspicious_count: usize,
    pub normal_count: usize,
    pub test_percent: Option<u32>,
    /// Frames per clip.
    pub depth: Option<usize>,
    pub resolution: Option<Resolution>,
    pub flip: bool,
}

impl DatasetSpec {
    /// `total` samples split evenly between the classes.
    pub fn balanced(total: usize) -> Result<Self, DatasetError> {
        if total == 0 || !total.is_multiple_of(2) {
            return Err(DatasetError::Validation(format!(
                "a balanced dataset needs a positive even size, got {total}"
            )));
        }
        Ok(Self::with_counts(Balance::Balanced, total / 2, total / 2))
    }

    /// One suspicious sample for every two normal ones.
    pub fn unbalanced(suspicious: usize, normal: usize) -> Result<Self, DatasetError> {
        if suspicious == 0 || normal != 2 * suspicious {
            return Err(DatasetError::Validation(format!(
                "an unbalanced dataset needs a 1:2 ratio, got {suspicious}s{normal}n"
            )));
        }
        Ok(Self::with_counts(Balance::Unbalanced, suspicious, normal))
    }

    fn with_counts(balance: Balance, suspicious_count: usize, normal_count: usize) -> Self {
        DatasetSpec {
            balance,
            suspicious_count,
            normal_count,
            test_percent: None,
            depth: None,
            resolution: None,
            flip: false,
        }
    }

    pub fn with_test_percent(mut self, percent: u32) -> Self {
        self.test_percent = Some(percent);
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = Some(depth);
        self
    }

    pub fn with_resolution(mut self, resolution: Resolution) -> Self {
        self.resolution = Some(resolution);
        self
    }

    pub fn with_flip(mut self, flip: bool) -> Self {
        self.flip = flip;
        self
    }

    pub fn total(&self) -> usize {
        self.suspicious_count + self.normal_count
    }

    pub fn test_fraction(&self) -> Option<f64> {
        self.test_percent.map(|p| p as f64 / 100.0)
    }

    /// Checks grid membership: test %, depth and resolution, where present,
    /// must be among the experiment grid's values.
    pub fn check_paper_grid(&self) -> Result<(), DatasetError> {
        if let Some(t) = self.test_percent {
            if !PAPER_TEST_PERCENTS.contains(&t) {
                return Err(DatasetError::Validation(format!("test size {t}% is not in {PAPER_TEST_PERCENTS:?}")));
            }
        }
        if let Some(d) = self.depth {
            if !PAPER_DEPTHS.contains(&d) {
                return Err(DatasetError::Validation(format!("depth {d} is not in {PAPER_DEPTHS:?}")));
            }
        }
        if let Some(r) = self.resolution {
            if !PAPER_RESOLUTIONS.contains(&r) {
                return Err(DatasetError::Validation(format!("resolution {r} is not a grid resolution")));
            }
        }
        Ok(())
    }

    /// The `[depth, resolution]` needed to build clips, or an error naming
    /// what is missing.
    pub fn clip_shape(&self) -> Result<(usize, Resolution), DatasetError> {
        match (self.depth, self.resolution) {
            (Some(d), Some(r)) => Ok((d, r)),
            _ => Err(DatasetError::Validation(format!(
                "dataset {} does not fix both depth and resolution",
                format_dataset_name(self)
            ))),
        }
    }

    fn ratio_token(&self) -> String {
        match self.balance {
            Balance::Balanced => self.total().to_string(),
            Balance::Unbalanced => format!("{}s{}n", self.suspicious_count, self.normal_count),
        }
    }

    fn suffix_tokens(&self, with_resolution: bool) -> Vec<String> {
        let mut tokens = vec![self.ratio_token()];
        if let Some(t) = self.test_percent {
            tokens.push(format!("{t}t"));
        }
        if let Some(d) = self.depth {
            tokens.push(format!("{d}f"));
        }
        if let (true, Some(r)) = (with_resolution, self.resolution) {
            tokens.push(r.to_string());
        }
        if self.flip {
            tokens.push("flip".into());
        }
        tokens
    }

    /// Short form used in result tables, e.g. `unb_60s120n_30t_10f_80x60`.
    pub fn short_name(&self) -> String {
        let head = match self.balance {
            Balance::Balanced => "bal",
            Balance::Unbalanced => "unb",
        };
        std::iter::once(head.to_string()).chain(self.suffix_tokens(true)).collect::<Vec<_>>().join("_")
    }

    /// Long name without the resolution token, as used for result rows
    /// whose resolution is a table column.
    pub fn row_name(&self) -> String {
        self.long_name(false)
    }

    fn long_name(&self, with_resolution: bool) -> String {
        let head = match self.balance {
            Balance::Balanced => "balanced",
            Balance::Unbalanced => "unbalanced",
        };
        ["SBT".to_string(), head.to_string()]
            .into_iter()
            .chain(self.suffix_tokens(with_resolution))
            .collect::<Vec<_>>()
            .join("_")
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.long_name(true))
    }
}

pub fn format_dataset_name(spec: &DatasetSpec) -> String {
    spec.to_string()
}

fn numeric_with_suffix(token: &str, suffix: char) -> Option<u64> {
    let digits = token.strip_suffix(suffix)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn parse_dataset_name(name: &str) -> Result<DatasetSpec, DatasetError> {
    let err = |token: &str, reason: &str| DatasetError::Parse {
        name: name.to_string(),
        token: token.to_string(),
        reason: reason.to_string(),
    };
    let mut tokens = name.split('_').peekable();
    if tokens.peek() == Some(&"SBT") {
        tokens.next();
    }
    let balance = match tokens.next() {
        Some("balanced" | "bal") => Balance::Balanced,
        // the misspelling occurs in published dataset tables
        Some("unbalanced" | "unb" | "unabalanced") => Balance::Unbalanced,
        Some(t) => return Err(err(t, "expected balanced/bal or unbalanced/unb")),
        None => return Err(err("", "missing balance")),
    };
    let ratio = tokens.next().ok_or_else(|| err("", "missing sample count"))?;
    let mut spec = match balance {
        Balance::Balanced => {
            let total: usize = ratio.parse().map_err(|_| err(ratio, "balanced sample count must be an integer"))?;
            DatasetSpec::balanced(total).map_err(|e| err(ratio, &e.to_string()))?
        }
        Balance::Unbalanced => {
            let parsed = ratio.strip_suffix('n').and_then(|rest| {
                let (s, n) = rest.split_once('s')?;
                Some((s.parse::<usize>().ok()?, n.parse::<usize>().ok()?))
            });
            let (s, n) = parsed.ok_or_else(|| err(ratio, "unbalanced ratio must look like 60s120n"))?;
            DatasetSpec::unbalanced(s, n).map_err(|e| err(ratio, &e.to_string()))?
        }
    };

    // optional tokens, each at most once and in grammar order
    let mut stage = 0;
    for token in tokens {
        let (this_stage, apply): (usize, Box<dyn FnOnce(&mut DatasetSpec)>) =
            if let Some(t) = numeric_with_suffix(token, 't') {
                if t == 0 || t >= 100 {
                    return Err(err(token, "test percentage must be in 1..99"));
                }
                (1, Box::new(move |s| s.test_percent = Some(t as u32)))
            } else if let Some(d) = numeric_with_suffix(token, 'f') {
                if d == 0 {
                    return Err(err(token, "depth must be positive"));
                }
                (2, Box::new(move |s| s.depth = Some(d as usize)))
            } else if token == "flip" {
                (4, Box::new(|s| s.flip = true))
            } else if let Ok(r) = token.parse::<Resolution>() {
                (3, Box::new(move |s| s.resolution = Some(r)))
            } else {
                return Err(err(token, "unrecognised token"));
            };
        if this_stage <= stage {
            return Err(err(token, "token repeated or out of order"));
        }
        stage = this_stage;
        apply(&mut spec);
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let s = parse_dataset_name("SBT_unbalanced_60s120n_30t_30f_40x30_flip").unwrap();
        assert_eq!(s.balance, Balance::Unbalanced);
        assert_eq!((s.suspicious_count, s.normal_count), (60, 120));
        assert_eq!(s.test_percent, Some(30));
        assert_eq!(s.depth, Some(30));
        assert_eq!(s.resolution, Some(Resolution::new(40, 30)));
        assert!(s.flip);
        assert_eq!(format_dataset_name(&s), "SBT_unbalanced_60s120n_30t_30f_40x30_flip");
    }

    #[test]
    fn balanced_count_is_split_evenly() {
        let s = parse_dataset_name("SBT_balanced_120_30t_10f_80x60").unwrap();
        assert_eq!((s.suspicious_count, s.normal_count), (60, 60));
        assert!(!s.flip);
        assert_eq!(s.short_name(), "bal_120_30t_10f_80x60");
        assert_eq!(s.row_name(), "SBT_balanced_120_30t_10f");
    }

    #[test]
    fn short_forms_parse() {
        let s = parse_dataset_name("unb_60s120n_30t_10f_80x60").unwrap();
        assert_eq!(s.short_name(), "unb_60s120n_30t_10f_80x60");
        let s = parse_dataset_name("bal_240_30t_30f").unwrap();
        assert_eq!(s.total(), 240);
        assert_eq!(s.resolution, None);
    }

    #[test]
    fn malformed_names_name_the_token() {
        match parse_dataset_name("SBT_bogus") {
            Err(DatasetError::Parse { token, .. }) => assert_eq!(token, "bogus"),
            other => panic!("{other:?}"),
        }
        match parse_dataset_name("SBT_balanced_60_10f_20t") {
            Err(DatasetError::Parse { token, .. }) => assert_eq!(token, "20t"),
            other => panic!("{other:?}"),
        }
        match parse_dataset_name("SBT_unbalanced_60s100n") {
            Err(DatasetError::Parse { token, .. }) => assert_eq!(token, "60s100n"),
            other => panic!("{other:?}"),
        }
        assert!(parse_dataset_name("SBT_balanced_61").is_err());
        assert!(parse_dataset_name("SBT_balanced_60_30t_xyz").is_err());
        assert!(parse_dataset_name("").is_err());
    }

    #[test]
    fn grid_membership() {
        let s = parse_dataset_name("SBT_balanced_60_20t_10f_32x24").unwrap();
        assert!(s.check_paper_grid().is_ok());
        let s = parse_dataset_name("SBT_balanced_60_25t_10f_32x24").unwrap();
        assert!(s.check_paper_grid().is_err());
        let s = parse_dataset_name("SBT_balanced_60_20t_12f").unwrap();
        assert!(s.check_paper_grid().is_err());
    }

    fn any_spec() -> impl Strategy<Value = DatasetSpec> {
        (
            any::<bool>(),
            1usize..200,
            proptest::option::of(1u32..100),
            proptest::option::of(1usize..200),
            proptest::option::of((1usize..400, 1usize..400)),
            any::<bool>(),
        )
            .prop_map(|(bal, k, t, d, r, flip)| {
                let mut s = if bal {
                    DatasetSpec::balanced(2 * k).unwrap()
                } else {
                    DatasetSpec::unbalanced(k, 2 * k).unwrap()
                };
                s.test_percent = t;
                s.depth = d;
                s.resolution = r.map(|(w, h)| Resolution::new(w, h));
                s.with_flip(flip)
            })
    }

    proptest! {
        #[test]
        fn format_then_parse_is_identity(spec in any_spec()) {
            let name = format_dataset_name(&spec);
            prop_assert_eq!(parse_dataset_name(&name).unwrap(), spec);
            prop_assert_eq!(parse_dataset_name(&spec.short_name()).unwrap(), spec);
        }
    }
}
