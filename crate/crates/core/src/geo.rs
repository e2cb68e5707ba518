//! Geometric features of the UAV/base-station link.
//!
//! Everything here works on a spherical Earth of radius [`EARTH_RADIUS_M`].
//! Altitudes on both ends share the same datum (meters above sea level).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used by the haversine distance.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Horizontal separation below which the bearing is undefined.
pub const AZIMUTH_DEGENERACY_M: f64 = 1e-6;

/// Default floor applied to distances before the log transform.
pub const DEFAULT_MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("altitude {0} is not finite")]
    Altitude(f64),
    #[error("antenna tilt {0} outside [-90, 90]")]
    Tilt(f64),
    #[error("carrier frequency must be positive, got {0}")]
    Frequency(f64),
    #[error("min_distance must be positive, got {0}")]
    MinDistance(f64),
    #[error("elevation undefined: UAV coincides with the station")]
    DegenerateElevation,
    #[error("bearing undefined: UAV is horizontally coincident with the station")]
    DegenerateAzimuth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude_asl: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64, altitude_asl: f64) -> Result<Self, GeoError> {
        let p = Self {
            latitude,
            longitude,
            altitude_asl,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(GeoError::Latitude(self.latitude));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(GeoError::Longitude(self.longitude));
        }
        if !self.altitude_asl.is_finite() {
            return Err(GeoError::Altitude(self.altitude_asl));
        }
        Ok(())
    }
}

/// Serving base-station description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    pub position: GeoPoint,
    /// Antenna tilt in degrees, added to the geometric elevation.
    pub antenna_tilt: f64,
    /// Carrier frequency in Hz.
    pub carrier_frequency: f64,
    pub horizontal_beamwidth: f64,
    pub vertical_beamwidth: f64,
}

impl StationConfig {
    pub fn validate(&self) -> Result<(), GeoError> {
        self.position.validate()?;
        if !(-90.0..=90.0).contains(&self.antenna_tilt) {
            return Err(GeoError::Tilt(self.antenna_tilt));
        }
        if !(self.carrier_frequency > 0.0) || !self.carrier_frequency.is_finite() {
            return Err(GeoError::Frequency(self.carrier_frequency));
        }
        Ok(())
    }
}

/// The four model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub log10_d3d: f64,
    pub log10_d2d: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

impl FeatureVector {
    pub const NAMES: [&'static str; 4] = ["log10_d3d", "log10_d2d", "azimuth", "elevation"];

    pub fn to_array(&self) -> [f64; 4] {
        [self.log10_d3d, self.log10_d2d, self.azimuth, self.elevation]
    }
}

/// Great-circle distance in meters (haversine form).
pub fn haversine_2d(bs: &GeoPoint, uav: &GeoPoint) -> f64 {
    let lat_bs = bs.latitude.to_radians();
    let lat_uav = uav.latitude.to_radians();
    let dlat = (bs.latitude - uav.latitude).to_radians();
    let dlon = (bs.longitude - uav.longitude).to_radians();
    let a = (dlat / 2.0).sin().powi(2) + lat_bs.cos() * lat_uav.cos() * (dlon / 2.0).sin().powi(2);
    // rounding can push `a` a hair past 1 for antipodal points
    let a = a.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_M * a.sqrt().atan2((1.0 - a).sqrt())
}

pub fn distance_3d(d2d: f64, h_uav: f64, h_bs: f64) -> f64 {
    d2d.hypot(h_uav - h_bs)
}

/// Elevation toward the UAV in degrees, offset by the antenna tilt.
pub fn elevation_angle(h_uav: f64, h_bs: f64, d2d: f64, tilt: f64) -> Result<f64, GeoError> {
    let dh = h_uav - h_bs;
    if d2d == 0.0 && dh == 0.0 {
        return Err(GeoError::DegenerateElevation);
    }
    // atan2 matches atan(dh / d2d) for d2d > 0 and covers the overhead limit.
    Ok(dh.atan2(d2d).to_degrees() + tilt)
}

/// Bearing from the station to the UAV, clockwise from true north, in [0, 360).
pub fn azimuth_angle(bs: &GeoPoint, uav: &GeoPoint) -> Result<f64, GeoError> {
    if haversine_2d(bs, uav) < AZIMUTH_DEGENERACY_M {
        return Err(GeoError::DegenerateAzimuth);
    }
    let lat_bs = bs.latitude.to_radians();
    let lat_uav = uav.latitude.to_radians();
    let dlon = (uav.longitude - bs.longitude).to_radians();
    let x = dlon.sin() * lat_uav.cos();
    let y = lat_bs.cos() * lat_uav.sin() - lat_bs.sin() * lat_uav.cos() * dlon.cos();
    let theta = (x.atan2(y).to_degrees() + 360.0) % 360.0;
    // (-tiny + 360) rounds to 360 exactly, which the modulo maps to 0; anything
    // left at 360 can only come from that path.
    Ok(if theta >= 360.0 { 0.0 } else { theta })
}

/// Computes the model input for one UAV position.
///
/// Distances are floored at `min_distance` before the log transform, so the
/// log features are finite even for a UAV hovering right above the mast. The
/// elevation is computed from the unclamped geometry.
pub fn featurize(
    station: &StationConfig,
    uav: &GeoPoint,
    min_distance: f64,
) -> Result<FeatureVector, GeoError> {
    if !(min_distance > 0.0) || !min_distance.is_finite() {
        return Err(GeoError::MinDistance(min_distance));
    }
    let bs = &station.position;
    let d2d = haversine_2d(bs, uav);
    let d3d = distance_3d(d2d, uav.altitude_asl, bs.altitude_asl);
    let azimuth = azimuth_angle(bs, uav)?;
    let elevation = elevation_angle(uav.altitude_asl, bs.altitude_asl, d2d, station.antenna_tilt)?;
    Ok(FeatureVector {
        log10_d3d: d3d.max(min_distance).log10(),
        log10_d2d: d2d.max(min_distance).log10(),
        azimuth,
        elevation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon, 0.0).unwrap()
    }

    /// Spherical law of cosines, independent of the haversine route.
    fn cosine_law_distance(a: &GeoPoint, b: &GeoPoint) -> f64 {
        let (p1, p2) = (a.latitude.to_radians(), b.latitude.to_radians());
        let dl = (b.longitude - a.longitude).to_radians();
        let c = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).clamp(-1.0, 1.0);
        EARTH_RADIUS_M * c.acos()
    }

    #[test]
    fn haversine_cases() {
        assert_eq!(haversine_2d(&pt(0.0, 0.0), &pt(0.0, 0.0)), 0.0);
        let north = haversine_2d(&pt(0.0, 0.0), &pt(0.001, 0.0));
        let oracle = cosine_law_distance(&pt(0.0, 0.0), &pt(0.001, 0.0));
        assert!((north - oracle).abs() < 1e-3, "{north} vs {oracle}");
        assert!((north - 111.195).abs() < 1e-3);
        let east = haversine_2d(&pt(0.0, 0.0), &pt(0.0, 0.001));
        assert!((east - north).abs() < 1e-9);
    }

    #[test]
    fn distance_3d_cases() {
        assert_eq!(distance_3d(0.0, 0.0, 0.0), 0.0);
        assert_eq!(distance_3d(300.0, 485.0, 85.0), 500.0);
        assert_eq!(distance_3d(100.0, 10.0, 10.0), 100.0);
    }

    #[test]
    fn elevation_cases() {
        assert_eq!(elevation_angle(85.0, 85.0, 500.0, 4.0).unwrap(), 4.0);
        assert_eq!(elevation_angle(285.0, 85.0, 200.0, 4.0).unwrap(), 49.0);
        assert_eq!(elevation_angle(205.0, 85.0, 0.0, 4.0).unwrap(), 94.0);
        assert_eq!(
            elevation_angle(85.0, 85.0, 0.0, 4.0),
            Err(GeoError::DegenerateElevation)
        );
    }

    #[test]
    fn azimuth_cardinals() {
        let bs = pt(10.0, 20.0);
        assert_eq!(azimuth_angle(&bs, &pt(10.01, 20.0)).unwrap(), 0.0);
        assert_eq!(azimuth_angle(&pt(0.0, 0.0), &pt(0.0, 0.01)).unwrap(), 90.0);
        assert_eq!(azimuth_angle(&bs, &pt(9.99, 20.0)).unwrap(), 180.0);
        assert_eq!(azimuth_angle(&bs, &bs), Err(GeoError::DegenerateAzimuth));
    }

    #[test]
    fn featurize_clamp_and_distance() {
        let station = StationConfig {
            position: GeoPoint::new(0.0, 0.0, 85.0).unwrap(),
            antenna_tilt: 4.0,
            carrier_frequency: 2.6e9,
            horizontal_beamwidth: 65.0,
            vertical_beamwidth: 10.0,
        };
        // ~0.5 m east: below the 1 m floor
        let near = GeoPoint::new(0.0, 0.5 / 111_194.93, 485.0).unwrap();
        let f = featurize(&station, &near, 1.0).unwrap();
        assert_eq!(f.log10_d2d, 0.0);
        assert!((f.log10_d3d - 400f64.log10()).abs() < 1e-6);

        // 300 m north, 400 m up
        let dlat = (300.0 / EARTH_RADIUS_M).to_degrees();
        let far = GeoPoint::new(dlat, 0.0, 485.0).unwrap();
        let f = featurize(&station, &far, 1.0).unwrap();
        assert!((f.log10_d3d - 2.698_970_004_336_019).abs() < 1e-9);
        assert!(f.log10_d3d >= f.log10_d2d);

        assert_eq!(
            featurize(&station, &far, 0.0),
            Err(GeoError::MinDistance(0.0))
        );
    }

    #[test]
    fn point_validation() {
        assert!(GeoPoint::new(91.0, 0.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -181.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, 0.0, f64::NAN).is_err());
    }

    fn arb_point() -> impl Strategy<Value = GeoPoint> {
        (-89.0..89.0f64, -179.0..179.0f64, 0.0..500.0f64).prop_map(|(a, b, h)| GeoPoint {
            latitude: a,
            longitude: b,
            altitude_asl: h,
        })
    }

    proptest! {
        #[test]
        fn haversine_symmetric_and_bounded(a in arb_point(), b in arb_point()) {
            let ab = haversine_2d(&a, &b);
            let ba = haversine_2d(&b, &a);
            prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
            prop_assert!(ab >= 0.0);
            prop_assert!(ab <= std::f64::consts::PI * EARTH_RADIUS_M + 1e-6);
        }

        #[test]
        fn distance_3d_monotone(d in 0.0..1e4f64, dh in 0.0..1e3f64, extra in 0.0..1e3f64) {
            let base = distance_3d(d, dh, 0.0);
            prop_assert!(base >= d.max(dh));
            prop_assert!(distance_3d(d + extra, dh, 0.0) >= base);
            prop_assert!(distance_3d(d, dh + extra, 0.0) >= base);
        }

        #[test]
        fn azimuth_range_and_wrap(lat in -60.0..60.0f64, dlat in -0.05..0.05f64, dlon in -0.05..0.05f64) {
            prop_assume!(dlat.abs() > 1e-4 || dlon.abs() > 1e-4);
            let bs = GeoPoint { latitude: lat, longitude: 0.0, altitude_asl: 0.0 };
            let uav = GeoPoint { latitude: lat + dlat, longitude: dlon, altitude_asl: 0.0 };
            let wrapped = GeoPoint { longitude: dlon + 360.0, ..uav };
            let a = azimuth_angle(&bs, &uav).unwrap();
            let b = azimuth_angle(&bs, &wrapped).unwrap();
            prop_assert!((0.0..360.0).contains(&a));
            let diff = (a - b).abs();
            prop_assert!(diff.min(360.0 - diff) < 1e-6);
        }

        #[test]
        fn elevation_flat_is_tilt(d in 1e-3..1e5f64, h in -100.0..1000.0f64, tilt in -10.0..10.0f64) {
            prop_assert_eq!(elevation_angle(h, h, d, tilt).unwrap(), tilt);
        }

        #[test]
        fn featurize_finite(uav in arb_point()) {
            let station = StationConfig {
                position: GeoPoint { latitude: 3.0, longitude: 101.0, altitude_asl: 85.0 },
                antenna_tilt: 4.0,
                carrier_frequency: 2.6e9,
                horizontal_beamwidth: 65.0,
                vertical_beamwidth: 10.0,
            };
            if let Ok(f) = featurize(&station, &uav, DEFAULT_MIN_DISTANCE_M) {
                prop_assert!(f.to_array().iter().all(|v| v.is_finite()));
                prop_assert!(f.log10_d3d >= f.log10_d2d);
                prop_assert!((0.0..360.0).contains(&f.azimuth));
            }
        }
    }
}
