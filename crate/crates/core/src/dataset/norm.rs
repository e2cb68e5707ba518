use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::geo::FeatureVector;

/// Mean and sample standard deviation (n - 1 divisor) of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

impl ColumnStats {
    pub fn fit(name: &str, values: &[f64]) -> Result<Self, DatasetError> {
        if values.len() < 2 {
            return Err(DatasetError::TooFewValues(name.to_string()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(DatasetError::ZeroVariance(name.to_string()));
        }
        Ok(Self { mean, std })
    }

    #[inline]
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    #[inline]
    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Standardization for the four features and one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub features: [ColumnStats; 4],
    pub target: ColumnStats,
}

impl NormStats {
    pub fn normalize_features(&self, x: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|j| self.features[j].normalize(x[j]))
    }

    pub fn denormalize_features(&self, z: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|j| self.features[j].denormalize(z[j]))
    }
}

pub fn fit_norm(features: &[[f64; 4]], target: &[f64]) -> Result<NormStats, DatasetError> {
    let mut cols: Vec<ColumnStats> = Vec::with_capacity(4);
    for (j, name) in FeatureVector::NAMES.iter().enumerate() {
        let col: Vec<f64> = features.iter().map(|r| r[j]).collect();
        cols.push(ColumnStats::fit(name, &col)?);
    }
    Ok(NormStats {
        features: [cols[0], cols[1], cols[2], cols[3]],
        target: ColumnStats::fit("target", target)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_column() {
        let s = ColumnStats::fit("x", &[1.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, std::f64::consts::SQRT_2);
        assert!((s.normalize(1.0) + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((s.normalize(3.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn constant_column_rejected() {
        assert!(matches!(
            ColumnStats::fit("x", &[4.0, 4.0, 4.0]),
            Err(DatasetError::ZeroVariance(_))
        ));
        assert!(matches!(
            ColumnStats::fit("x", &[4.0]),
            Err(DatasetError::TooFewValues(_))
        ));
    }

    proptest! {
        #[test]
        fn standardizes_and_round_trips(v in prop::collection::vec(-100.0..100.0f64, 3..80)) {
            prop_assume!(v.iter().any(|x| (x - v[0]).abs() > 1e-3));
            let s = ColumnStats::fit("x", &v).unwrap();
            let z: Vec<f64> = v.iter().map(|&x| s.normalize(x)).collect();
            let n = z.len() as f64;
            let m = z.iter().sum::<f64>() / n;
            let var = z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
            prop_assert!(m.abs() < 1e-10);
            prop_assert!((var - 1.0).abs() < 1e-10);
            for (&x, &zi) in v.iter().zip(&z) {
                prop_assert!((s.denormalize(zi) - x).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }
}
