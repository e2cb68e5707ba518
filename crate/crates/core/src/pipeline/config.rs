use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{parse_bool, parse_optional, parse_value, value_error, ConfigError};
use crate::dataset::LocationGrid;
use crate::ebt::EbtConfig;
use crate::geo::DEFAULT_MIN_DISTANCE_M;
use crate::gpr::GprOptions;
use crate::stw::{StwConfig, TermUniverse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Accuracy,
    Latency,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Self::Accuracy => "accuracy",
            Self::Latency => "latency",
        }
    }

    pub fn ebt(self) -> EbtConfig {
        match self {
            Self::Accuracy => EbtConfig::accuracy(),
            Self::Latency => EbtConfig::latency(),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "accuracy" => Ok(Self::Accuracy),
            "latency" => Ok(Self::Latency),
            _ => Err(format!("unknown profile `{s}` (expected accuracy or latency)")),
        }
    }
}

/// Which lower-layer outputs the aggregation layer is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GprInputs {
    /// Predictions of the layers fitted on all training rows.
    InSample,
    /// Cross-fitted predictions: each fold is predicted by layers fitted on the others.
    OutOfFold,
}

impl FromStr for GprInputs {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in-sample" => Ok(Self::InSample),
            "out-of-fold" => Ok(Self::OutOfFold),
            _ => Err(format!("unknown gpr input mode `{s}`")),
        }
    }
}

/// Candidate values searched by cross-validation. Empty EBT lists fall back
/// to the single value in the active EBT settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub stw_universe: Vec<TermUniverse>,
    pub stw_p_enter: Vec<f64>,
    pub ebt_n_learners: Vec<usize>,
    pub ebt_min_leaf: Vec<usize>,
}

impl Default for TuneGrid {
    fn default() -> Self {
        Self {
            stw_universe: vec![TermUniverse::Linear, TermUniverse::Interactions, TermUniverse::Quadratic],
            stw_p_enter: vec![0.01, 0.05],
            ebt_n_learners: Vec::new(),
            ebt_min_leaf: Vec::new(),
        }
    }
}

impl TuneGrid {
    /// STW candidates, simplest first: smaller universe, then stricter entry.
    pub fn stw_candidates(&self, base: &StwConfig) -> Vec<StwConfig> {
        let mut universes = self.stw_universe.clone();
        universes.sort_unstable();
        universes.dedup();
        let mut ps = self.stw_p_enter.clone();
        ps.sort_by(f64::total_cmp);
        ps.dedup();
        if universes.is_empty() {
            universes.push(base.universe);
        }
        if ps.is_empty() {
            ps.push(base.p_enter);
        }
        let mut out = Vec::new();
        for &u in &universes {
            for &p in &ps {
                out.push(StwConfig {
                    universe: u,
                    p_enter: p,
                    ..*base
                });
            }
        }
        out
    }

    /// EBT candidates, simplest first: fewer learners, then larger leaves.
    pub fn ebt_candidates(&self, base: &EbtConfig) -> Vec<EbtConfig> {
        let mut learners = if self.ebt_n_learners.is_empty() { vec![base.n_learners] } else { self.ebt_n_learners.clone() };
        let mut leaves = if self.ebt_min_leaf.is_empty() { vec![base.min_leaf] } else { self.ebt_min_leaf.clone() };
        learners.sort_unstable();
        learners.dedup();
        leaves.sort_unstable_by(|a, b| b.cmp(a));
        leaves.dedup();
        let mut out = Vec::new();
        for &n in &learners {
            for &m in &leaves {
                out.push(EbtConfig {
                    n_learners: n,
                    min_leaf: m,
                    ..*base
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    pub profile: Profile,
    pub stw: StwConfig,
    pub ebt: EbtConfig,
    pub gpr: GprOptions,
    pub cv_folds: usize,
    pub split_seed: u64,
    pub fold_seed: u64,
    /// Run the cross-validated grid search; otherwise use `stw`/`ebt` as given.
    pub tune: bool,
    pub grid: TuneGrid,
    pub gpr_inputs: GprInputs,
    pub min_distance: f64,
    pub location_grid: LocationGrid,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Accuracy)
    }
}

fn list<T>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl StackConfig {
    pub fn for_profile(profile: Profile) -> Self {
        Self {
            profile,
            stw: StwConfig::default(),
            ebt: profile.ebt(),
            gpr: GprOptions::default(),
            cv_folds: 10,
            split_seed: 0x5917,
            fold_seed: 0xf01d,
            tune: true,
            grid: TuneGrid::default(),
            gpr_inputs: GprInputs::OutOfFold,
            min_distance: DEFAULT_MIN_DISTANCE_M,
            location_grid: LocationGrid::default(),
        }
    }

    /// Builds a config from layered `key = value` sources. The profile is
    /// resolved first (later sources win), then every other key is applied
    /// in source order.
    pub fn from_layers(default_profile: Profile, layers: &[Vec<(String, String)>]) -> Result<Self, ConfigError> {
        let mut profile = default_profile;
        for (k, v) in layers.iter().flatten() {
            if k == "profile" {
                profile = parse_value(k, v)?;
            }
        }
        let mut cfg = Self::for_profile(profile);
        for (k, v) in layers.iter().flatten() {
            if k != "profile" {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "profile" => {
                self.profile = parse_value(key, value)?;
                self.ebt = self.profile.ebt();
            }
            "cv_folds" => self.cv_folds = parse_value(key, value)?,
            "split_seed" => self.split_seed = parse_value(key, value)?,
            "fold_seed" => self.fold_seed = parse_value(key, value)?,
            "tune" => self.tune = parse_bool(key, value)?,
            "gpr_inputs" => self.gpr_inputs = parse_value(key, value)?,
            "min_distance" => self.min_distance = parse_value(key, value)?,
            "stw.p_enter" => self.stw.p_enter = parse_value(key, value)?,
            "stw.p_remove" => self.stw.p_remove = parse_value(key, value)?,
            "stw.max_iters" => self.stw.max_iters = parse_value(key, value)?,
            "stw.universe" => self.stw.universe = parse_value(key, value)?,
            "ebt.n_learners" => self.ebt.n_learners = parse_value(key, value)?,
            "ebt.min_leaf" => self.ebt.min_leaf = parse_value(key, value)?,
            "ebt.max_splits" => self.ebt.max_splits = parse_optional(key, value)?,
            "ebt.n_features_per_split" => self.ebt.n_features_per_split = parse_optional(key, value)?,
            "ebt.seed" => self.ebt.seed = parse_value(key, value)?,
            "gpr.family" => self.gpr.family = parse_value(key, value)?,
            "gpr.restarts" => self.gpr.restarts = parse_value(key, value)?,
            "gpr.max_evals" => self.gpr.max_evals = parse_value(key, value)?,
            "gpr.jitter_ceiling" => self.gpr.jitter_ceiling = parse_value(key, value)?,
            "gpr.subsample" => self.gpr.subsample = parse_optional(key, value)?,
            "gpr.opt_rows" => self.gpr.opt_rows = parse_optional(key, value)?,
            "gpr.seed" => self.gpr.seed = parse_value(key, value)?,
            "grid.stw.universe" => self.grid.stw_universe = list(key, value)?,
            "grid.stw.p_enter" => self.grid.stw_p_enter = list(key, value)?,
            "grid.ebt.n_learners" => self.grid.ebt_n_learners = list(key, value)?,
            "grid.ebt.min_leaf" => self.grid.ebt_min_leaf = list(key, value)?,
            "location.latlon_decimals" => self.location_grid.latlon_decimals = parse_value(key, value)?,
            "location.alt_step_m" => self.location_grid.alt_step_m = parse_value(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cv_folds < 2 {
            return Err(value_error("cv_folds", &self.cv_folds.to_string(), "must be at least 2"));
        }
        if !(self.stw.p_enter < self.stw.p_remove) {
            return Err(value_error("stw.p_enter", &self.stw.p_enter.to_string(), "must be below stw.p_remove"));
        }
        if let Some(p) = self.grid.stw_p_enter.iter().find(|p| !(**p > 0.0 && **p < self.stw.p_remove)) {
            return Err(value_error("grid.stw.p_enter", &p.to_string(), "must lie in (0, stw.p_remove)"));
        }
        self.ebt
            .validate(4)
            .map_err(|e| value_error("ebt", "", e.to_string()))?;
        if self.grid.ebt_n_learners.contains(&0) || self.grid.ebt_min_leaf.contains(&0) {
            return Err(value_error("grid.ebt", "0", "must be positive"));
        }
        if self.gpr.restarts == 0 || self.gpr.max_evals == 0 {
            return Err(value_error("gpr.restarts", &self.gpr.restarts.to_string(), "restarts and max_evals must be positive"));
        }
        if !(self.min_distance > 0.0) {
            return Err(value_error("min_distance", &self.min_distance.to_string(), "must be positive"));
        }
        if !(self.location_grid.alt_step_m > 0.0) {
            return Err(value_error("location.alt_step_m", &self.location_grid.alt_step_m.to_string(), "must be positive"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
