//! Drive-test samples: ingestion, serving-cell filtering, cleaning, spatial
//! splitting and standardization.

mod clean;
mod io;
mod norm;
mod quality;
mod split;

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{featurize, GeoError, GeoPoint, StationConfig};

pub use clean::{clean, CleanReport, CleaningRules};
pub use io::{
    load_csv, parse_timestamp, read_canonical_csv, write_canonical_csv, ColumnMap, LoadReport,
    RowRejection, CANONICAL_HEADER,
};
pub use norm::{fit_norm, ColumnStats, NormStats};
pub use quality::{classify_signal_quality, ratio_to_db, rsrq_consistency, SignalQuality};
pub use split::{check_disjoint, spatial_split, DataSplit, LocationGrid, LocationKey};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column map: {0}")]
    ColumnMap(String),
    #[error("mapped column `{0}` not present in header")]
    MissingColumn(String),
    #[error("zero parseable rows in {0}")]
    NoRows(String),
    #[error("split ratio must lie in (0, 1), got {0}")]
    Ratio(f64),
    #[error("need at least 2 distinct location keys, found {0}")]
    TooFewKeys(usize),
    #[error("zero variance in column `{0}`")]
    ZeroVariance(String),
    #[error("column `{0}` needs at least 2 values")]
    TooFewValues(String),
    #[error("non-positive RSSI power {0} W")]
    NonPositiveRssi(f64),
    #[error("resource block count must be at least 1")]
    ResourceBlocks,
    #[error("train and test share {0} location keys")]
    Leakage(usize),
    #[error("sample {index} lacks a {kpi} value")]
    MissingKpi { index: usize, kpi: Kpi },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// The four predicted indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Kpi {
    #[serde(rename = "PL")]
    Pl,
    #[serde(rename = "RSRP")]
    Rsrp,
    #[serde(rename = "RSRQ")]
    Rsrq,
    #[serde(rename = "RSSI")]
    Rssi,
}

impl Kpi {
    pub const ALL: [Kpi; 4] = [Kpi::Pl, Kpi::Rsrp, Kpi::Rsrq, Kpi::Rssi];

    pub fn name(self) -> &'static str {
        match self {
            Kpi::Pl => "PL",
            Kpi::Rsrp => "RSRP",
            Kpi::Rsrq => "RSRQ",
            Kpi::Rssi => "RSSI",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Kpi::Pl | Kpi::Rsrq => "dB",
            Kpi::Rsrp | Kpi::Rssi => "dBm",
        }
    }
}

impl fmt::Display for Kpi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kpi {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pl" => Ok(Kpi::Pl),
            "rsrp" => Ok(Kpi::Rsrp),
            "rsrq" => Ok(Kpi::Rsrq),
            "rssi" => Ok(Kpi::Rssi),
            other => Err(format!("unknown KPI `{other}` (expected pl, rsrp, rsrq or rssi)")),
        }
    }
}

/// One drive-test measurement row.
///
/// KPI fields are optional until the dataset has been cleaned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoSample {
    pub timestamp: DateTime<Utc>,
    pub position: GeoPoint,
    pub cell_id: String,
    pub rsrp: Option<f64>,
    pub rsrq: Option<f64>,
    pub rssi: Option<f64>,
    pub pl: Option<f64>,
    pub snr: Option<f64>,
}

impl GeoSample {
    pub fn kpi(&self, kpi: Kpi) -> Option<f64> {
        match kpi {
            Kpi::Pl => self.pl,
            Kpi::Rsrp => self.rsrp,
            Kpi::Rsrq => self.rsrq,
            Kpi::Rssi => self.rssi,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub entries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<GeoSample>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(samples: Vec<GeoSample>, source: impl Into<String>) -> Self {
        Self {
            samples,
            provenance: Provenance {
                source: source.into(),
                entries: Vec::new(),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub(crate) fn derive(&self, samples: Vec<GeoSample>, entry: String) -> Dataset {
        let mut provenance = self.provenance.clone();
        provenance.entries.push(entry);
        Dataset {
            samples,
            provenance,
        }
    }

    /// Model inputs for every sample, in sample order.
    pub fn features(
        &self,
        station: &StationConfig,
        min_distance: f64,
    ) -> Result<Vec<[f64; 4]>, GeoError> {
        self.samples
            .iter()
            .map(|s| featurize(station, &s.position, min_distance).map(|f| f.to_array()))
            .collect()
    }

    /// Target column for `kpi`; fails on the first sample lacking it.
    pub fn targets(&self, kpi: Kpi) -> Result<Vec<f64>, DatasetError> {
        self.samples
            .iter()
            .enumerate()
            .map(|(index, s)| s.kpi(kpi).ok_or(DatasetError::MissingKpi { index, kpi }))
            .collect()
    }
}

/// Keeps only the samples reported against `cell_id`.
pub fn filter_serving(ds: &Dataset, cell_id: &str) -> Dataset {
    let kept: Vec<GeoSample> = ds
        .samples
        .iter()
        .filter(|s| s.cell_id == cell_id)
        .cloned()
        .collect();
    let entry = if kept.is_empty() {
        format!("filter_serving cell_id={cell_id}: WARNING no samples matched (0 of {})", ds.len())
    } else {
        format!("filter_serving cell_id={cell_id}: kept {} of {}", kept.len(), ds.len())
    };
    ds.derive(kept, entry)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use chrono::TimeZone;

    pub fn sample(i: i64, cell: &str, rsrp: f64) -> GeoSample {
        GeoSample {
            timestamp: Utc.timestamp_opt(1_700_000_000 + i, 0).unwrap(),
            position: GeoPoint {
                latitude: 3.0 + i as f64 * 1e-4,
                longitude: 101.0,
                altitude_asl: 120.0,
            },
            cell_id: cell.to_string(),
            rsrp: Some(rsrp),
            rsrq: Some(-9.0),
            rssi: Some(rsrp + 25.0),
            pl: Some(15.0 - rsrp),
            snr: None,
        }
    }
}
