use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator), 0 for a single value.
    pub std: f64,
}

pub fn aggregate_stats(values: &[f64]) -> Result<Aggregate, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Invalid("aggregate of an empty sequence".into()));
    }
    if values.iter().all(|&v| v == values[0]) {
        // summing would leave rounding noise in both fields
        return Ok(Aggregate { mean: values[0], std: 0.0 });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(Aggregate { mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values_have_zero_spread() {
        let a = aggregate_stats(&[0.7, 0.7, 0.7]).unwrap();
        assert_eq!(a, Aggregate { mean: 0.7, std: 0.0 });
    }

    #[test]
    fn two_values() {
        let a = aggregate_stats(&[0.6, 0.8]).unwrap();
        assert!((a.mean - 0.7).abs() < 1e-12);
        assert!((a.std - 0.02f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_and_empty() {
        assert_eq!(aggregate_stats(&[0.25]).unwrap(), Aggregate { mean: 0.25, std: 0.0 });
        assert!(aggregate_stats(&[]).is_err());
    }
}
