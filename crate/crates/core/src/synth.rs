//! Seeded synthetic air-to-ground corpus.
//!
//! UAV points sit on arcs around one station at fixed horizontal radii and
//! heights above ground. Path loss follows a log-distance law plus a
//! sinusoidal azimuth gain and Gaussian noise; RSRP, RSSI and RSRQ are
//! derived from it so that `RSRQ = 10 log10(N) + RSRP - RSSI` holds exactly.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::fspl;
use crate::config::{parse_kv, parse_value, value_error, ConfigError};
use crate::dataset::{Dataset, GeoSample};
use crate::geo::{featurize, GeoError, GeoPoint, StationConfig, DEFAULT_MIN_DISTANCE_M, EARTH_RADIUS_M};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthScenario {
    pub station: StationConfig,
    /// Ground elevation above sea level under the flight area.
    pub ground_asl: f64,
    pub radius_start: f64,
    pub radius_stop: f64,
    pub radius_step: f64,
    pub altitude_start_agl: f64,
    pub altitude_stop_agl: f64,
    pub altitude_step: f64,
    pub points_per_arc: usize,
    pub arc_start_deg: f64,
    pub arc_span_deg: f64,
    /// Uniform azimuth jitter half-width in degrees.
    pub azimuth_jitter_deg: f64,
    pub exponent: f64,
    pub d0: f64,
    /// Path loss at `d0`; free-space at the carrier when `None`.
    pub pl0: Option<f64>,
    pub azimuth_gain_db: f64,
    pub noise_sigma_db: f64,
    /// Reference-signal power per resource element, dBm.
    pub rs_power_dbm: f64,
    pub n_rb: u32,
    pub load: f64,
    /// Extra interference at the top altitude, growing linearly from zero.
    pub interference_db: f64,
    pub rssi_noise_db: f64,
    pub cell_id: String,
    pub start: DateTime<Utc>,
    pub seed: u64,
}

impl Default for SynthScenario {
    fn default() -> Self {
        Self {
            station: StationConfig {
                position: GeoPoint {
                    latitude: 2.9935,
                    longitude: 101.7075,
                    altitude_asl: 85.0,
                },
                antenna_tilt: 4.0,
                carrier_frequency: 2.6e9,
                horizontal_beamwidth: 105.0,
                vertical_beamwidth: 6.0,
            },
            ground_asl: 75.0,
            radius_start: 100.0,
            radius_stop: 900.0,
            radius_step: 100.0,
            altitude_start_agl: 10.0,
            altitude_stop_agl: 130.0,
            altitude_step: 15.0,
            points_per_arc: 24,
            arc_start_deg: 0.0,
            arc_span_deg: 360.0,
            azimuth_jitter_deg: 2.0,
            exponent: 2.3,
            d0: 1.0,
            pl0: None,
            azimuth_gain_db: 5.0,
            noise_sigma_db: 2.0,
            rs_power_dbm: 15.0,
            n_rb: 50,
            load: 0.6,
            interference_db: 3.0,
            rssi_noise_db: 1.0,
            cell_id: "SYN-0001".to_string(),
            start: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            seed: 20240101,
        }
    }
}

fn steps(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| start + i as f64 * step).collect()
}

/// Point at `distance` meters along `bearing_deg` from `from`, on the sphere.
pub fn destination(from: &GeoPoint, bearing_deg: f64, distance: f64, altitude_asl: f64) -> GeoPoint {
    let d = distance / EARTH_RADIUS_M;
    let th = bearing_deg.to_radians();
    let p1 = from.latitude.to_radians();
    let l1 = from.longitude.to_radians();
    let p2 = (p1.sin() * d.cos() + p1.cos() * d.sin() * th.cos()).asin();
    let l2 = l1 + (th.sin() * d.sin() * p1.cos()).atan2(d.cos() - p1.sin() * p2.sin());
    GeoPoint {
        latitude: p2.to_degrees(),
        longitude: l2.to_degrees(),
        altitude_asl,
    }
}

impl SynthScenario {
    pub fn from_kv_text(text: &str) -> Result<Self, ConfigError> {
        let mut s = Self::default();
        for (k, v) in parse_kv(text)? {
            s.set(&k, &v)?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let f = || parse_value::<f64>(key, value);
        match key {
            "station.latitude" => self.station.position.latitude = f()?,
            "station.longitude" => self.station.position.longitude = f()?,
            "station.altitude_asl" => self.station.position.altitude_asl = f()?,
            "station.antenna_tilt" => self.station.antenna_tilt = f()?,
            "station.carrier_frequency" => self.station.carrier_frequency = f()?,
            "station.horizontal_beamwidth" => self.station.horizontal_beamwidth = f()?,
            "station.vertical_beamwidth" => self.station.vertical_beamwidth = f()?,
            "ground_asl" => self.ground_asl = f()?,
            "radius_start" => self.radius_start = f()?,
            "radius_stop" => self.radius_stop = f()?,
            "radius_step" => self.radius_step = f()?,
            "altitude_start_agl" => self.altitude_start_agl = f()?,
            "altitude_stop_agl" => self.altitude_stop_agl = f()?,
            "altitude_step" => self.altitude_step = f()?,
            "points_per_arc" => self.points_per_arc = parse_value(key, value)?,
            "arc_start_deg" => self.arc_start_deg = f()?,
            "arc_span_deg" => self.arc_span_deg = f()?,
            "azimuth_jitter_deg" => self.azimuth_jitter_deg = f()?,
            "exponent" => self.exponent = f()?,
            "d0" => self.d0 = f()?,
            "pl0" => self.pl0 = crate::config::parse_optional(key, value)?,
            "azimuth_gain_db" => self.azimuth_gain_db = f()?,
            "noise_sigma_db" => self.noise_sigma_db = f()?,
            "rs_power_dbm" => self.rs_power_dbm = f()?,
            "n_rb" => self.n_rb = parse_value(key, value)?,
            "load" => self.load = f()?,
            "interference_db" => self.interference_db = f()?,
            "rssi_noise_db" => self.rssi_noise_db = f()?,
            "cell_id" => self.cell_id = value.to_string(),
            "start" => {
                self.start = crate::dataset::parse_timestamp(value)
                    .ok_or_else(|| value_error(key, value, "not a timestamp"))?
            }
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |k: &str, v: f64, why: &str| Err(value_error(k, &v.to_string(), why));
        if !(self.radius_step > 0.0) || !(self.radius_start > 0.0) || self.radius_stop < self.radius_start {
            return bad("radius_step", self.radius_step, "radii must be positive and increasing");
        }
        if !(self.altitude_step > 0.0) || self.altitude_stop_agl < self.altitude_start_agl {
            return bad("altitude_step", self.altitude_step, "altitudes must be increasing");
        }
        if self.points_per_arc == 0 {
            return bad("points_per_arc", 0.0, "must be positive");
        }
        if !(self.d0 > 0.0) {
            return bad("d0", self.d0, "must be positive");
        }
        if self.noise_sigma_db < 0.0 || self.rssi_noise_db < 0.0 {
            return bad("noise_sigma_db", self.noise_sigma_db, "noise must be non-negative");
        }
        if !(self.load > 0.0) || self.n_rb == 0 {
            return bad("load", self.load, "load and n_rb must be positive");
        }
        self.station
            .validate()
            .map_err(|e| value_error("station", "", e.to_string()))
    }

    pub fn expected_len(&self) -> usize {
        steps(self.radius_start, self.radius_stop, self.radius_step).len()
            * steps(self.altitude_start_agl, self.altitude_stop_agl, self.altitude_step).len()
            * self.points_per_arc
    }

    /// Noise-free path loss for a geometry.
    pub fn mean_path_loss(&self, d3d: f64, azimuth_deg: f64) -> f64 {
        let pl0 = self
            .pl0
            .unwrap_or_else(|| fspl(self.d0, self.station.carrier_frequency).expect("validated frequency"));
        pl0 + 10.0 * self.exponent * (d3d / self.d0).log10() + self.azimuth_gain_db * azimuth_deg.to_radians().sin()
    }

    pub fn generate(&self) -> Result<Dataset, GeoError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let pl_noise = Normal::new(0.0, self.noise_sigma_db).expect("validated sigma");
        let rssi_noise = Normal::new(0.0, self.rssi_noise_db).expect("validated sigma");
        let rssi_offset = 10.0 * (12.0 * self.n_rb as f64 * self.load).log10();
        let rsrq_offset = 10.0 * (self.n_rb as f64).log10();
        let alts = steps(self.altitude_start_agl, self.altitude_stop_agl, self.altitude_step);
        let top = alts.last().copied().unwrap_or(1.0).max(1e-9);
        let mut samples = Vec::with_capacity(self.expected_len());
        for &agl in &alts {
            for r in steps(self.radius_start, self.radius_stop, self.radius_step) {
                for k in 0..self.points_per_arc {
                    let centre = self.arc_start_deg + self.arc_span_deg * (k as f64 + 0.5) / self.points_per_arc as f64;
                    let jitter = if self.azimuth_jitter_deg > 0.0 {
                        rng.random_range(-self.azimuth_jitter_deg..self.azimuth_jitter_deg)
                    } else {
                        0.0
                    };
                    let pos = destination(&self.station.position, centre + jitter, r, self.ground_asl + agl);
                    let f = featurize(&self.station, &pos, DEFAULT_MIN_DISTANCE_M)?;
                    let pl = self.mean_path_loss(10f64.powf(f.log10_d3d), f.azimuth) + pl_noise.sample(&mut rng);
                    let rsrp = self.rs_power_dbm - pl;
                    let rssi = rsrp + rssi_offset + self.interference_db * agl / top + rssi_noise.sample(&mut rng);
                    let rsrq = rsrq_offset + rsrp - rssi;
                    samples.push(GeoSample {
                        timestamp: self.start + Duration::seconds(samples.len() as i64),
                        position: pos,
                        cell_id: self.cell_id.clone(),
                        rsrp: Some(rsrp),
                        rsrq: Some(rsrq),
                        rssi: Some(rssi),
                        pl: Some(pl),
                        snr: None,
                    });
                }
            }
        }
        let mut ds = Dataset::new(samples, format!("synthetic seed={}", self.seed));
        ds.provenance
            .entries
            .push(format!("synth: {} points, noise {} dB", ds.len(), self.noise_sigma_db));
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{rsrq_consistency, ratio_to_db, Kpi};
    use crate::geo::haversine_2d;

    #[test]
    fn default_corpus_shape() {
        let s = SynthScenario::default();
        let ds = s.generate().unwrap();
        assert_eq!(ds.len(), 9 * 9 * 24);
        assert_eq!(ds.len(), s.expected_len());
        let again = s.generate().unwrap();
        assert_eq!(ds.samples, again.samples);
        for smp in ds.samples.iter().step_by(97) {
            let d2d = haversine_2d(&s.station.position, &smp.position);
            let nearest = (d2d / 100.0).round() * 100.0;
            assert!((d2d - nearest).abs() < 1e-6, "{d2d}");
            assert!(smp.rsrp.unwrap() <= smp.rssi.unwrap());
        }
    }

    #[test]
    fn rsrq_relation_holds() {
        let s = SynthScenario::default();
        let ds = s.generate().unwrap();
        let dbm_to_w = |v: f64| 10f64.powf((v - 30.0) / 10.0);
        for smp in ds.samples.iter().take(50) {
            let ratio = rsrq_consistency(dbm_to_w(smp.rsrp.unwrap()), dbm_to_w(smp.rssi.unwrap()), s.n_rb).unwrap();
            assert!((ratio_to_db(ratio) - smp.rsrq.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_free_matches_law() {
        let s = SynthScenario {
            noise_sigma_db: 0.0,
            azimuth_gain_db: 0.0,
            points_per_arc: 4,
            ..SynthScenario::default()
        };
        let ds = s.generate().unwrap();
        let x = ds.features(&s.station, 1.0).unwrap();
        let pl = ds.targets(Kpi::Pl).unwrap();
        for (f, y) in x.iter().zip(&pl) {
            let oracle = 20.0 * 2.6e9f64.log10() - 147.55 + 23.0 * f[0];
            assert!((y - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn kv_overrides() {
        let s = SynthScenario::from_kv_text("seed = 7\npoints_per_arc = 3\nnoise_sigma_db = 0.5\n").unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.expected_len(), 9 * 9 * 3);
        assert!(matches!(SynthScenario::from_kv_text("bogus = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(SynthScenario::from_kv_text("radius_step = 0").is_err());
    }
}
