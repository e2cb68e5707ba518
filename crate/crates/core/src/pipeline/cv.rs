use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataset::LocationKey;
use crate::ebt::{fit_ebt, EbtConfig};
use crate::metrics::{rmse, EvalReport};
use crate::stw::{fit_stw, StwConfig};

/// Fold number for each of `n_keys` keys: a seeded shuffle dealt round-robin,
/// so fold sizes differ by at most one.
pub fn kfold_indices(n_keys: usize, k: usize, seed: u64) -> Result<Vec<usize>, PipelineError> {
    if k < 2 || n_keys < k {
        return Err(PipelineError::TooFewKeys { keys: n_keys, folds: k });
    }
    let mut order: Vec<usize> = (0..n_keys).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n_keys];
    for (pos, &key) in order.iter().enumerate() {
        fold[key] = pos % k;
    }
    Ok(fold)
}

/// Fold per sample; every sample sharing a location key shares a fold.
pub fn sample_folds(keys: &[LocationKey], k: usize, seed: u64) -> Result<Vec<usize>, PipelineError> {
    // keys are ranked in sorted order, so sample order does not matter
    let mut index: BTreeMap<LocationKey, usize> = keys.iter().map(|k| (*k, 0)).collect();
    for (rank, v) in index.values_mut().enumerate() {
        *v = rank;
    }
    let folds = kfold_indices(index.len(), k, seed)?;
    Ok(keys.iter().map(|key| folds[index[key]]).collect())
}

pub(crate) fn split_rows<T: Copy>(v: &[T], folds: &[usize], f: usize) -> (Vec<T>, Vec<T>) {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (x, &g) in v.iter().zip(folds) {
        if g == f {
            held.push(*x);
        } else {
            train.push(*x);
        }
    }
    (train, held)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub label: String,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
}

/// Index of the lowest mean score, preferring earlier (simpler) entries on ties.
pub fn argmin_simplest(scores: &[f64]) -> Option<usize> {
    let best = scores.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let tol = 1e-12 * best.abs();
    scores.iter().position(|&s| s <= best + tol)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Scores each STW candidate by mean held-out RMSE across folds.
pub fn tune_stw(
    x: &[[f64; 4]],
    y: &[f64],
    folds: &[usize],
    k: usize,
    candidates: &[StwConfig],
) -> Result<(usize, Vec<GridScore>), PipelineError> {
    if candidates.is_empty() {
        return Err(PipelineError::EmptyGrid);
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for cfg in candidates {
        let mut fold_rmse = Vec::with_capacity(k);
        for f in 0..k {
            let (xt, xh) = split_rows(x, folds, f);
            let (yt, yh) = split_rows(y, folds, f);
            let m = fit_stw(&xt, &yt, cfg)?;
            fold_rmse.push(rmse(&yh, &m.predict(&xh)?)?);
        }
        scores.push(GridScore {
            label: format!("universe={:?} p_enter={}", cfg.universe, cfg.p_enter).to_lowercase(),
            mean_rmse: mean(&fold_rmse),
            fold_rmse,
        });
    }
    let means: Vec<f64> = scores.iter().map(|s| s.mean_rmse).collect();
    let best = argmin_simplest(&means).ok_or(PipelineError::EmptyGrid)?;
    Ok((best, scores))
}

/// Scores each EBT candidate on the frozen STW residuals. Also returns the
/// held-out residual predictions of the best candidate, in sample order.
pub fn tune_ebt(
    x: &[[f64; 4]],
    resid: &[f64],
    folds: &[usize],
    k: usize,
    candidates: &[EbtConfig],
) -> Result<(usize, Vec<GridScore>, Vec<f64>), PipelineError> {
    if candidates.is_empty() {
        return Err(PipelineError::EmptyGrid);
    }
    let mut scores = Vec::with_capacity(candidates.len());
    let mut held_preds = Vec::with_capacity(candidates.len());
    for cfg in candidates {
        let mut fold_rmse = Vec::with_capacity(k);
        let mut pred = vec![0.0; x.len()];
        for f in 0..k {
            let (xt, xh) = split_rows(x, folds, f);
            let (rt, rh) = split_rows(resid, folds, f);
            let e = fit_ebt(&xt, &rt, cfg)?;
            let p = e.predict_batch(&xh);
            fold_rmse.push(rmse(&rh, &p)?);
            let mut it = p.into_iter();
            for (slot, &g) in pred.iter_mut().zip(folds) {
                if g == f {
                    *slot = it.next().expect("one prediction per held-out row");
                }
            }
        }
        scores.push(GridScore {
            label: format!("n_learners={} min_leaf={}", cfg.n_learners, cfg.min_leaf),
            mean_rmse: mean(&fold_rmse),
            fold_rmse,
        });
        held_preds.push(pred);
    }
    let means: Vec<f64> = scores.iter().map(|s| s.mean_rmse).collect();
    let best = argmin_simplest(&means).ok_or(PipelineError::EmptyGrid)?;
    let chosen = held_preds.swap_remove(best);
    Ok((best, scores, chosen))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub maape: f64,
    pub r: f64,
    pub r2: f64,
}

impl MetricSummary {
    fn from_fn(reports: &[EvalReport], f: impl Fn(&[f64]) -> f64) -> Self {
        let col = |g: fn(&EvalReport) -> f64| f(&reports.iter().map(g).collect::<Vec<_>>());
        Self {
            mse: col(|r| r.mse),
            rmse: col(|r| r.rmse),
            mae: col(|r| r.mae),
            maape: col(|r| r.maape),
            r: col(|r| r.r),
            r2: col(|r| r.r2),
        }
    }

    pub fn mean_of(reports: &[EvalReport]) -> Self {
        Self::from_fn(reports, mean)
    }

    /// Sample standard deviation (n - 1 divisor); zero for a single fold.
    pub fn std_of(reports: &[EvalReport]) -> Self {
        Self::from_fn(reports, |v| {
            if v.len() < 2 {
                return 0.0;
            }
            let m = mean(v);
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        })
    }
}

/// Cross-validation outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    /// Held-out STW + EBT reports per fold, in KPI units.
    pub fold_reports: Vec<EvalReport>,
    pub mean: Option<MetricSummary>,
    pub std: Option<MetricSummary>,
    pub stw_scores: Vec<GridScore>,
    pub ebt_scores: Vec<GridScore>,
    pub chosen_stw: StwConfig,
    pub chosen_ebt: EbtConfig,
}
