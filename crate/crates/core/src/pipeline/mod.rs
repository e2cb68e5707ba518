//! Per-KPI training, prediction, evaluation and persistence of the stack.
//!
//! Training runs strictly stage-wise on standardized data: STW is tuned and
//! frozen, EBT is tuned on the frozen STW residuals and frozen, and the GP
//! is then fitted on `[x | y_stw | eps]` with both lower layers fixed.

mod bench;
mod config;
mod container;
mod cv;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bench::{benchmark_throughput, LayerTimes, ThroughputReport, MIN_BENCH_ROWS};
pub use config::{GprInputs, Profile, StackConfig, TuneGrid};
pub use container::{decode_model, encode_model, load_model, save_model, ContainerError, FORMAT_VERSION};
pub use cv::{argmin_simplest, kfold_indices, sample_folds, tune_ebt, tune_stw, CvReport, GridScore, MetricSummary};

use crate::config::ConfigError;
use crate::dataset::{fit_norm, Dataset, DatasetError, DataSplit, Kpi, NormStats};
use crate::ebt::{fit_ebt, BaggedEnsemble, EbtConfig, EbtError};
use crate::geo::{featurize, GeoError, GeoPoint, StationConfig};
use crate::gpr::{build_aggregate_input, fit_gpr, GprError, GprModel};
use crate::metrics::{evaluate as score, EvalReport, MetricError};
use crate::stw::{fit_stw, residuals, StwConfig, StwError, StwModel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("need at least {folds} distinct location keys for {folds}-fold CV, found {keys}")]
    TooFewKeys { keys: usize, folds: usize },
    #[error("tuning grid is empty")]
    EmptyGrid,
    #[error("benchmark needs at least {MIN_BENCH_ROWS} rows, got {0}")]
    TooFewBenchRows(usize),
    #[error("{0} evaluation samples fall outside the test side of the split")]
    Leakage(usize),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Stw(#[from] StwError),
    #[error(transparent)]
    Ebt(#[from] EbtError),
    #[error(transparent)]
    Gpr(#[from] GprError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Container(#[from] ContainerError),
}

/// A trained stack for one KPI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleLayerModel {
    pub kpi: Kpi,
    pub config: StackConfig,
    pub config_fingerprint: String,
    /// Latest timestamp among the training samples.
    pub created: DateTime<Utc>,
    pub station: StationConfig,
    pub norm: NormStats,
    pub stw: StwModel,
    pub ebt: BaggedEnsemble,
    pub gpr: GprModel,
}

/// Predictions in KPI units.
#[derive(Debug, Clone, PartialEq)]
pub struct StackPrediction {
    pub value: Vec<f64>,
    /// One standard deviation of the GP posterior.
    pub uncertainty: Vec<f64>,
}

/// Output of each stage in KPI units: STW alone, STW plus the EBT
/// correction, and the full stack.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutputs {
    pub stw: Vec<f64>,
    pub stw_ebt: Vec<f64>,
    pub full: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReports {
    pub stw: EvalReport,
    pub stw_ebt: EvalReport,
    pub full: EvalReport,
}

struct Normalized {
    x: Vec<[f64; 4]>,
    stw: Vec<f64>,
    eps: Vec<f64>,
}

impl TripleLayerModel {
    fn lower_layers(&self, x: &[[f64; 4]]) -> Normalized {
        let xn: Vec<[f64; 4]> = x.iter().map(|r| self.norm.normalize_features(r)).collect();
        let stw: Vec<f64> = xn.iter().map(|r| self.stw.predict_row(r)).collect();
        let eps = self.ebt.predict_batch(&xn);
        Normalized { x: xn, stw, eps }
    }

    fn aggregate(&self, n: &Normalized) -> Vec<[f64; 6]> {
        build_aggregate_input(&n.x, &n.stw, &n.eps).expect("layer outputs have one value per row")
    }

    /// Full-stack prediction with uncertainty for raw feature rows.
    pub fn predict_features(&self, x: &[[f64; 4]]) -> Result<StackPrediction, PipelineError> {
        let n = self.lower_layers(x);
        let p = self.gpr.predict(&self.aggregate(&n))?;
        let t = &self.norm.target;
        Ok(StackPrediction {
            value: p.mean.iter().map(|&m| t.denormalize(m)).collect(),
            uncertainty: p.std.iter().map(|s| s * t.std).collect(),
        })
    }

    /// Full-stack mean only, skipping the variance solve.
    pub fn predict_mean(&self, x: &[[f64; 4]]) -> Result<Vec<f64>, PipelineError> {
        let n = self.lower_layers(x);
        let m = self.gpr.predict_mean(&self.aggregate(&n))?;
        Ok(m.iter().map(|&v| self.norm.target.denormalize(v)).collect())
    }

    pub fn predict_layers(&self, x: &[[f64; 4]]) -> Result<LayerOutputs, PipelineError> {
        let n = self.lower_layers(x);
        let full = self.gpr.predict_mean(&self.aggregate(&n))?;
        let t = &self.norm.target;
        Ok(LayerOutputs {
            stw: n.stw.iter().map(|&v| t.denormalize(v)).collect(),
            stw_ebt: n.stw.iter().zip(&n.eps).map(|(s, e)| t.denormalize(s + e)).collect(),
            full: full.iter().map(|&v| t.denormalize(v)).collect(),
        })
    }

    /// Prediction at one UAV position against the model's own station.
    pub fn predict_at(&self, uav: &GeoPoint) -> Result<(f64, f64), PipelineError> {
        predict(self, &self.station, uav)
    }

    pub fn dataset_features(&self, ds: &Dataset) -> Result<Vec<[f64; 4]>, PipelineError> {
        Ok(ds.features(&self.station, self.config.min_distance)?)
    }
}

/// Value and one-sigma uncertainty, in KPI units, at `uav` seen from `station`.
pub fn predict(m: &TripleLayerModel, station: &StationConfig, uav: &GeoPoint) -> Result<(f64, f64), PipelineError> {
    let f = featurize(station, uav, m.config.min_distance)?.to_array();
    let p = m.predict_features(&[f])?;
    Ok((p.value[0], p.uncertainty[0]))
}

/// Full-stack report over every sample of `ds`.
pub fn evaluate(m: &TripleLayerModel, ds: &Dataset) -> Result<EvalReport, PipelineError> {
    let y = ds.targets(m.kpi)?;
    let p = m.predict_mean(&m.dataset_features(ds)?)?;
    Ok(score(&y, &p)?)
}

/// Per-layer reports over every sample of `ds`.
pub fn evaluate_layers(m: &TripleLayerModel, ds: &Dataset) -> Result<LayerReports, PipelineError> {
    let y = ds.targets(m.kpi)?;
    let l = m.predict_layers(&m.dataset_features(ds)?)?;
    Ok(LayerReports {
        stw: score(&y, &l.stw)?,
        stw_ebt: score(&y, &l.stw_ebt)?,
        full: score(&y, &l.full)?,
    })
}

/// Like [`evaluate`], but first checks that every sample of `ds` lies on
/// the test side of `split`.
pub fn evaluate_split(m: &TripleLayerModel, ds: &Dataset, split: &DataSplit) -> Result<EvalReport, PipelineError> {
    let outside = split
        .grid
        .keys(&ds.samples)
        .iter()
        .filter(|k| !split.test_keys.contains(k) || split.train_keys.contains(k))
        .count();
    if outside > 0 {
        return Err(PipelineError::Leakage(outside));
    }
    evaluate(m, ds)
}

/// EBT settings chosen by cross-validation and the CV report.
struct Tuned {
    ebt: EbtConfig,
    report: CvReport,
}

fn tune_layers(
    xn: &[[f64; 4]],
    yn: &[f64],
    folds: &[usize],
    norm: &NormStats,
    cfg: &StackConfig,
) -> Result<(Tuned, StwModel, Vec<f64>), PipelineError> {
    let k = cfg.cv_folds;
    let stw_cands = cfg.grid.stw_candidates(&cfg.stw);
    let (best_stw, stw_scores) = tune_stw(xn, yn, folds, k, &stw_cands)?;
    let stw_cfg = stw_cands[best_stw];
    let stw = fit_stw(xn, yn, &stw_cfg)?;
    let y_stw = stw.predict(xn)?;
    let resid = residuals(yn, &y_stw)?;

    let ebt_cands = cfg.grid.ebt_candidates(&cfg.ebt);
    let (best_ebt, ebt_scores, held) = tune_ebt(xn, &resid, folds, k, &ebt_cands)?;
    let t = &norm.target;
    let mut fold_reports = Vec::with_capacity(k);
    for f in 0..k {
        let mut actual = Vec::new();
        let mut pred = Vec::new();
        for i in 0..yn.len() {
            if folds[i] == f {
                actual.push(t.denormalize(yn[i]));
                pred.push(t.denormalize(y_stw[i] + held[i]));
            }
        }
        fold_reports.push(score(&actual, &pred)?);
    }
    let report = CvReport {
        folds: k,
        mean: Some(MetricSummary::mean_of(&fold_reports)),
        std: Some(MetricSummary::std_of(&fold_reports)),
        fold_reports,
        stw_scores,
        ebt_scores,
        chosen_stw: stw_cfg,
        chosen_ebt: ebt_cands[best_ebt],
    };
    Ok((
        Tuned {
            ebt: ebt_cands[best_ebt],
            report,
        },
        stw,
        y_stw,
    ))
}

/// Out-of-fold lower-layer outputs: each fold is predicted by STW and EBT
/// fitted on the remaining folds.
fn cross_fitted(
    xn: &[[f64; 4]],
    yn: &[f64],
    folds: &[usize],
    k: usize,
    stw_cfg: &StwConfig,
    ebt_cfg: &EbtConfig,
) -> Result<(Vec<f64>, Vec<f64>), PipelineError> {
    let mut s_out = vec![0.0; yn.len()];
    let mut e_out = vec![0.0; yn.len()];
    for f in 0..k {
        let (xt, xh) = cv::split_rows(xn, folds, f);
        let (yt, _) = cv::split_rows(yn, folds, f);
        let stw = fit_stw(&xt, &yt, stw_cfg)?;
        let r = residuals(&yt, &stw.predict(&xt)?)?;
        let ebt = fit_ebt(&xt, &r, ebt_cfg)?;
        let s = stw.predict(&xh)?;
        let e = ebt.predict_batch(&xh);
        let mut j = 0;
        for i in 0..yn.len() {
            if folds[i] == f {
                s_out[i] = s[j];
                e_out[i] = e[j];
                j += 1;
            }
        }
    }
    Ok((s_out, e_out))
}

/// Stage-wise cross-validated selection of the STW and EBT settings.
pub fn tune(
    train_set: &Dataset,
    station: &StationConfig,
    kpi: Kpi,
    cfg: &StackConfig,
) -> Result<CvReport, PipelineError> {
    let (xn, yn, norm, folds) = prepare(train_set, station, kpi, cfg)?;
    Ok(tune_layers(&xn, &yn, &folds, &norm, cfg)?.0.report)
}

type Prepared = (Vec<[f64; 4]>, Vec<f64>, NormStats, Vec<usize>);

fn prepare(train_set: &Dataset, station: &StationConfig, kpi: Kpi, cfg: &StackConfig) -> Result<Prepared, PipelineError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(PipelineError::EmptyTrainingSet);
    }
    let x = train_set.features(station, cfg.min_distance)?;
    let y = train_set.targets(kpi)?;
    let norm = fit_norm(&x, &y)?;
    let xn: Vec<[f64; 4]> = x.iter().map(|r| norm.normalize_features(r)).collect();
    let yn: Vec<f64> = y.iter().map(|&v| norm.target.normalize(v)).collect();
    let keys = cfg.location_grid.keys(&train_set.samples);
    let folds = sample_folds(&keys, cfg.cv_folds, cfg.fold_seed)?;
    Ok((xn, yn, norm, folds))
}

/// Trains the full stack for `kpi` on `train_set`.
pub fn train(
    train_set: &Dataset,
    station: &StationConfig,
    kpi: Kpi,
    cfg: &StackConfig,
) -> Result<(TripleLayerModel, CvReport), PipelineError> {
    let (xn, yn, norm, folds) = prepare(train_set, station, kpi, cfg)?;

    let (stw, y_stw, ebt_cfg, report) = if cfg.tune {
        let (tuned, stw, y_stw) = tune_layers(&xn, &yn, &folds, &norm, cfg)?;
        (stw, y_stw, tuned.ebt, tuned.report)
    } else {
        let stw = fit_stw(&xn, &yn, &cfg.stw)?;
        let y_stw = stw.predict(&xn)?;
        let report = CvReport {
            folds: cfg.cv_folds,
            fold_reports: Vec::new(),
            mean: None,
            std: None,
            stw_scores: Vec::new(),
            ebt_scores: Vec::new(),
            chosen_stw: cfg.stw,
            chosen_ebt: cfg.ebt,
        };
        (stw, y_stw, cfg.ebt, report)
    };
    let resid = residuals(&yn, &y_stw)?;
    let ebt = fit_ebt(&xn, &resid, &ebt_cfg)?;

    let (s_in, e_in) = match cfg.gpr_inputs {
        GprInputs::InSample => (y_stw, ebt.predict_batch(&xn)),
        GprInputs::OutOfFold => cross_fitted(&xn, &yn, &folds, cfg.cv_folds, &stw.config, &ebt_cfg)?,
    };
    let z = build_aggregate_input(&xn, &s_in, &e_in)?;
    let gpr = fit_gpr(&z, &yn, &cfg.gpr)?;

    let created = train_set
        .samples
        .iter()
        .map(|s| s.timestamp)
        .max()
        .expect("non-empty training set");
    let model = TripleLayerModel {
        kpi,
        config_fingerprint: cfg.fingerprint(),
        config: cfg.clone(),
        created,
        station: *station,
        norm,
        stw,
        ebt,
        gpr,
    };
    Ok((model, report))
}
