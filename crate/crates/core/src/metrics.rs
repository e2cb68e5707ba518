//! Regression error metrics and the per-(model, set) report.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {actual} actual vs {predicted} predicted")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("empty input")]
    Empty,
    #[error("zero variance in {0} values")]
    ZeroVariance(&'static str),
    #[error("actual value of exactly zero at index {0}")]
    ZeroActual(usize),
}

fn check(actual: &[f64], predicted: &[f64]) -> Result<(), MetricError> {
    if actual.len() != predicted.len() {
        return Err(MetricError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    check(actual, predicted)?;
    let sse: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    Ok(sse / actual.len() as f64)
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    mse(actual, predicted).map(f64::sqrt)
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    check(actual, predicted)?;
    let sae: f64 = actual.iter().zip(predicted).map(|(y, p)| (y - p).abs()).sum();
    Ok(sae / actual.len() as f64)
}

/// Mean arctangent absolute percentage error, in percent.
///
/// Uses `atan(|p - y| / |y|)`, so the result is bounded by `50 * pi`.
pub fn maape(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    check(actual, predicted)?;
    if let Some(i) = actual.iter().position(|&y| y == 0.0) {
        return Err(MetricError::ZeroActual(i));
    }
    let total: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| ((p - y).abs() / y.abs()).atan())
        .sum();
    Ok(total / actual.len() as f64 * 100.0)
}

pub fn pearson_r(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    check(actual, predicted)?;
    let (ma, mp) = (mean(actual), mean(predicted));
    let (mut sap, mut saa, mut spp) = (0.0, 0.0, 0.0);
    for (y, p) in actual.iter().zip(predicted) {
        let (da, dp) = (y - ma, p - mp);
        sap += da * dp;
        saa += da * da;
        spp += dp * dp;
    }
    if saa == 0.0 {
        return Err(MetricError::ZeroVariance("actual"));
    }
    if spp == 0.0 {
        return Err(MetricError::ZeroVariance("predicted"));
    }
    Ok(sap / (saa * spp).sqrt())
}

pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    check(actual, predicted)?;
    let ma = mean(actual);
    let ss_tot: f64 = actual.iter().map(|y| (y - ma) * (y - ma)).sum();
    if ss_tot == 0.0 {
        return Err(MetricError::ZeroVariance("actual"));
    }
    let ss_res: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// All six metrics for one (model, dataset) pair. `r2` is a fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub maape: f64,
    pub r: f64,
    pub r2: f64,
    pub n: usize,
}

pub const REPORT_CSV_HEADER: &str = "kpi,set,mse,rmse,mae,maape_pct,r,r2";

impl EvalReport {
    /// One CSV row matching [`REPORT_CSV_HEADER`]. `r2` is written as a fraction.
    pub fn csv_row(&self, kpi: &str, set: &str) -> String {
        format!(
            "{kpi},{set},{},{},{},{},{},{}",
            self.mse, self.rmse, self.mae, self.maape, self.r, self.r2
        )
    }

    pub fn r2_percent(&self) -> f64 {
        self.r2 * 100.0
    }
}

pub fn evaluate(actual: &[f64], predicted: &[f64]) -> Result<EvalReport, MetricError> {
    let mse = mse(actual, predicted)?;
    Ok(EvalReport {
        mse,
        rmse: mse.sqrt(),
        mae: mae(actual, predicted)?,
        maape: maape(actual, predicted)?,
        r: pearson_r(actual, predicted)?,
        r2: r_squared(actual, predicted)?,
        n: actual.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction() {
        let a = [1.0, 2.0, 3.0];
        let rep = evaluate(&a, &a).unwrap();
        assert_eq!((rep.mse, rep.rmse, rep.mae, rep.maape), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(rep.r2, 1.0);
        assert!((rep.r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_prediction_case() {
        let (a, p) = ([0.0, 2.0], [1.0, 1.0]);
        assert_eq!(mse(&a, &p).unwrap(), 1.0);
        assert_eq!(rmse(&a, &p).unwrap(), 1.0);
        assert_eq!(mae(&a, &p).unwrap(), 1.0);
        assert_eq!(r_squared(&a, &p).unwrap(), 0.0);
        assert_eq!(pearson_r(&a, &p), Err(MetricError::ZeroVariance("predicted")));
        assert_eq!(maape(&a, &p), Err(MetricError::ZeroActual(0)));
    }

    #[test]
    fn maape_hand_case() {
        let v = maape(&[1.0], &[2.0]).unwrap();
        assert!((v - 78.539_816_339_744_83).abs() < 1e-8);
    }

    #[test]
    fn error_paths() {
        assert_eq!(
            mse(&[1.0], &[1.0, 2.0]),
            Err(MetricError::LengthMismatch { actual: 1, predicted: 2 })
        );
        assert_eq!(mae(&[], &[]), Err(MetricError::Empty));
        assert_eq!(
            r_squared(&[3.0, 3.0], &[1.0, 2.0]),
            Err(MetricError::ZeroVariance("actual"))
        );
    }

    #[test]
    fn negative_r2_is_reachable() {
        let r2 = r_squared(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!(r2 < 0.0);
    }

    #[test]
    fn csv_row_layout() {
        let rep = evaluate(&[1.0, 2.0, 4.0], &[1.5, 2.0, 3.0]).unwrap();
        let row = rep.csv_row("PL", "test");
        assert_eq!(row.split(',').count(), REPORT_CSV_HEADER.split(',').count());
        assert!(row.starts_with("PL,test,"));
    }

    fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec(1.0..100.0f64, n),
                prop::collection::vec(-50.0..150.0f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn metric_identities((a, p) in pairs()) {
            let m = mse(&a, &p).unwrap();
            let r = rmse(&a, &p).unwrap();
            prop_assert!((r * r - m).abs() <= 1e-12 * m.max(1e-300));
            prop_assert!(mae(&a, &p).unwrap() <= r * (1.0 + 1e-12));
            let q = maape(&a, &p).unwrap();
            prop_assert!((0.0..=50.0 * std::f64::consts::PI).contains(&q));
            if let Ok(r2) = r_squared(&a, &p) {
                prop_assert!(r2 <= 1.0);
            }
        }

        #[test]
        fn affine_predictions_correlate((a, _p) in pairs(), scale in 0.1..10.0f64, shift in -5.0..5.0f64) {
            prop_assume!(a.iter().any(|v| (v - a[0]).abs() > 1e-3));
            let p: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
            prop_assert!((pearson_r(&a, &p).unwrap() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn r2_one_iff_mse_zero((a, p) in pairs()) {
            prop_assume!(a.iter().any(|v| (v - a[0]).abs() > 1e-3));
            prop_assert_eq!(r_squared(&a, &a).unwrap(), 1.0);
            let r2 = r_squared(&a, &p).unwrap();
            let m = mse(&a, &p).unwrap();
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let var = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / a.len() as f64;
            // 1 - r2 == mse / var exactly in real arithmetic
            prop_assert!(((1.0 - r2) - m / var).abs() <= 1e-10 * (1.0 + m / var));
        }
    }
}
