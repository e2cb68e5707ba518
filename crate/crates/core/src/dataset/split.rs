use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, GeoSample};
use crate::geo::GeoPoint;

/// Spatial quantization that turns a position into a location key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationGrid {
    pub latlon_decimals: u32,
    pub alt_step_m: f64,
}

impl Default for LocationGrid {
    fn default() -> Self {
        Self {
            latlon_decimals: 5,
            alt_step_m: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocationKey {
    pub lat: i64,
    pub lon: i64,
    pub alt: i64,
}

impl LocationGrid {
    pub fn key(&self, p: &GeoPoint) -> LocationKey {
        let scale = 10f64.powi(self.latlon_decimals as i32);
        LocationKey {
            lat: (p.latitude * scale).round() as i64,
            lon: (p.longitude * scale).round() as i64,
            alt: (p.altitude_asl / self.alt_step_m).round() as i64,
        }
    }

    pub fn keys(&self, samples: &[GeoSample]) -> Vec<LocationKey> {
        samples.iter().map(|s| self.key(&s.position)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train_keys: BTreeSet<LocationKey>,
    pub test_keys: BTreeSet<LocationKey>,
    pub ratio: f64,
    pub seed: u64,
    pub grid: LocationGrid,
}

impl DataSplit {
    /// Splits `ds` into (train, test) by location key. Samples whose key is
    /// in neither set are dropped.
    pub fn apply(&self, ds: &Dataset) -> (Dataset, Dataset) {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for s in &ds.samples {
            let k = self.grid.key(&s.position);
            if self.train_keys.contains(&k) {
                train.push(s.clone());
            } else if self.test_keys.contains(&k) {
                test.push(s.clone());
            }
        }
        let (nt, ns) = (train.len(), test.len());
        (
            ds.derive(train, format!("spatial_split seed={} ratio={}: train side, {nt} samples", self.seed, self.ratio)),
            ds.derive(test, format!("spatial_split seed={} ratio={}: test side, {ns} samples", self.seed, self.ratio)),
        )
    }
}

/// Partitions distinct location keys into train and test sides.
///
/// Keys are visited in a seeded shuffle of their sorted order; a key joins
/// the train side when that moves the train sample count strictly closer to
/// `ratio * n`. Both sides always receive at least one key.
pub fn spatial_split(
    ds: &Dataset,
    ratio: f64,
    seed: u64,
    grid: LocationGrid,
) -> Result<DataSplit, DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::Ratio(ratio));
    }
    let mut counts: BTreeMap<LocationKey, usize> = BTreeMap::new();
    for k in grid.keys(&ds.samples) {
        *counts.entry(k).or_insert(0) += 1;
    }
    if counts.len() < 2 {
        return Err(DatasetError::TooFewKeys(counts.len()));
    }
    let mut keys: Vec<(LocationKey, usize)> = counts.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    keys.shuffle(&mut rng);

    let target = ratio * ds.len() as f64;
    let mut train_count = 0usize;
    let (mut train, mut test): (Vec<LocationKey>, Vec<LocationKey>) = (Vec::new(), Vec::new());
    for (k, m) in keys {
        let now = (train_count as f64 - target).abs();
        let then = ((train_count + m) as f64 - target).abs();
        if then < now {
            train_count += m;
            train.push(k);
        } else {
            test.push(k);
        }
    }
    if test.is_empty() {
        test.push(train.pop().expect("at least two keys"));
    }
    if train.is_empty() {
        train.push(test.remove(0));
    }
    Ok(DataSplit {
        train_keys: train.into_iter().collect(),
        test_keys: test.into_iter().collect(),
        ratio,
        seed,
        grid,
    })
}

/// Fails when the two datasets share any location key.
pub fn check_disjoint(a: &Dataset, b: &Dataset, grid: &LocationGrid) -> Result<(), DatasetError> {
    let ka: BTreeSet<LocationKey> = grid.keys(&a.samples).into_iter().collect();
    let shared = grid
        .keys(&b.samples)
        .into_iter()
        .collect::<BTreeSet<_>>()
        .intersection(&ka)
        .count();
    if shared == 0 {
        Ok(())
    } else {
        Err(DatasetError::Leakage(shared))
    }
}
