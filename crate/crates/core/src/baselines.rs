//! Reference path-loss laws and single-layer comparison models.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, Kpi};
use crate::ebt::{fit_ebt, BaggedEnsemble, EbtConfig, EbtError};
use crate::geo::{GeoError, StationConfig};
use crate::linalg::least_squares;
use crate::metrics::{evaluate, EvalReport, MetricError};

/// Free-space constant for meters and hertz: `20 log10(4 pi / c)`.
pub const FSPL_CONSTANT_DB: f64 = -147.55;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("distance must be positive and finite, got {0}")]
    Distance(f64),
    #[error("frequency must be positive and finite, got {0}")]
    Frequency(f64),
    #[error("reference distance must be positive, got {0}")]
    ReferenceDistance(f64),
    #[error("need at least 2 distinct distances")]
    DegenerateDistances,
    #[error("length mismatch: {0} distances vs {1} values")]
    LengthMismatch(usize, usize),
    #[error("least-squares fit failed")]
    Singular,
    #[error("unknown baseline kind `{0}`")]
    UnknownKind(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Ebt(#[from] EbtError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// Free-space path loss in dB.
pub fn fspl(distance_m: f64, frequency_hz: f64) -> Result<f64, BaselineError> {
    if !positive(distance_m) {
        return Err(BaselineError::Distance(distance_m));
    }
    if !positive(frequency_hz) {
        return Err(BaselineError::Frequency(frequency_hz));
    }
    Ok(20.0 * distance_m.log10() + 20.0 * frequency_hz.log10() + FSPL_CONSTANT_DB)
}

/// `PL(d) = pl0 + 10 n log10(d / d0)`, shadowing `N(0, shadow_sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LnsplFit {
    pub pl0: f64,
    pub exponent: f64,
    pub shadow_sigma: f64,
    pub d0: f64,
}

pub fn fit_lnspl(distances: &[f64], pl: &[f64], d0: f64) -> Result<LnsplFit, BaselineError> {
    if !positive(d0) {
        return Err(BaselineError::ReferenceDistance(d0));
    }
    if distances.len() != pl.len() {
        return Err(BaselineError::LengthMismatch(distances.len(), pl.len()));
    }
    if let Some(&bad) = distances.iter().find(|d| !positive(**d)) {
        return Err(BaselineError::Distance(bad));
    }
    let first = distances.first().copied();
    if distances.len() < 2 || distances.iter().all(|d| Some(*d) == first) {
        return Err(BaselineError::DegenerateDistances);
    }
    let n = distances.len();
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { 10.0 * (distances[i] / d0).log10() });
    let fit = least_squares(&design, pl).ok_or(BaselineError::Singular)?;
    let dof = if n > 2 { (n - 2) as f64 } else { 1.0 };
    Ok(LnsplFit {
        pl0: fit.coefficients[0],
        exponent: fit.coefficients[1],
        shadow_sigma: (fit.sse / dof).sqrt(),
        d0,
    })
}

/// Mean path loss at `distance_m`; no shadowing draw.
pub fn predict_lnspl(fit: &LnsplFit, distance_m: f64) -> Result<f64, BaselineError> {
    if !positive(distance_m) {
        return Err(BaselineError::Distance(distance_m));
    }
    Ok(fit.pl0 + 10.0 * fit.exponent * (distance_m / fit.d0).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingleLayerKind {
    PlainLinear,
    PlainBaggedTrees,
}

impl SingleLayerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PlainLinear => "plain-linear",
            Self::PlainBaggedTrees => "plain-bagged-trees",
        }
    }
}

impl fmt::Display for SingleLayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SingleLayerKind {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain-linear" | "linear" => Ok(Self::PlainLinear),
            "plain-bagged-trees" | "bagged-trees" => Ok(Self::PlainBaggedTrees),
            _ => Err(BaselineError::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SingleLayerBody {
    /// Intercept then one coefficient per feature.
    Linear(Vec<f64>),
    Trees(BaggedEnsemble),
}

/// A model fitted directly on the four features, without stacking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleLayerModel {
    pub kind: SingleLayerKind,
    pub kpi: Kpi,
    pub station: StationConfig,
    pub min_distance: f64,
    pub body: SingleLayerBody,
}

pub fn fit_single_layer(
    train: &Dataset,
    station: &StationConfig,
    kpi: Kpi,
    kind: SingleLayerKind,
    min_distance: f64,
    ebt: &EbtConfig,
) -> Result<SingleLayerModel, BaselineError> {
    let x = train.features(station, min_distance)?;
    let y = train.targets(kpi)?;
    let body = match kind {
        SingleLayerKind::PlainLinear => {
            let design = DMatrix::from_fn(x.len(), 5, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
            let fit = least_squares(&design, &y).ok_or(BaselineError::Singular)?;
            SingleLayerBody::Linear(fit.coefficients)
        }
        SingleLayerKind::PlainBaggedTrees => SingleLayerBody::Trees(fit_ebt(&x, &y, ebt)?),
    };
    Ok(SingleLayerModel {
        kind,
        kpi,
        station: *station,
        min_distance,
        body,
    })
}

impl SingleLayerModel {
    pub fn predict_features(&self, x: &[[f64; 4]]) -> Vec<f64> {
        match &self.body {
            SingleLayerBody::Linear(b) => x
                .iter()
                .map(|r| b[0] + b[1] * r[0] + b[2] * r[1] + b[3] * r[2] + b[4] * r[3])
                .collect(),
            SingleLayerBody::Trees(e) => x.iter().map(|r| e.predict_row(r)).collect(),
        }
    }

    pub fn predict(&self, ds: &Dataset) -> Result<Vec<f64>, BaselineError> {
        let x = ds.features(&self.station, self.min_distance)?;
        Ok(self.predict_features(&x))
    }

    pub fn evaluate(&self, ds: &Dataset) -> Result<EvalReport, BaselineError> {
        let y = ds.targets(self.kpi)?;
        Ok(evaluate(&y, &self.predict(ds)?)?)
    }
}
