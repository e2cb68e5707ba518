//! Station description files: flat `key = value` text.

use aerolink::config::{parse_kv, parse_value, value_error, ConfigError};
use aerolink::geo::{GeoPoint, StationConfig};

const KEYS: [&str; 7] = [
    "latitude",
    "longitude",
    "altitude_asl",
    "antenna_tilt",
    "carrier_frequency",
    "horizontal_beamwidth",
    "vertical_beamwidth",
];

/// Every key is required; a `station.` prefix is accepted so the station
/// block of a synth scenario can be reused verbatim.
pub fn parse_station(text: &str) -> Result<StationConfig, ConfigError> {
    let mut vals: [Option<f64>; 7] = [None; 7];
    for (k, v) in parse_kv(text)? {
        let bare = k.strip_prefix("station.").unwrap_or(&k);
        let i = KEYS
            .iter()
            .position(|&n| n == bare)
            .ok_or_else(|| ConfigError::UnknownKey(k.clone()))?;
        vals[i] = Some(parse_value(&k, &v)?);
    }
    let mut got = [0.0; 7];
    for (i, v) in vals.iter().enumerate() {
        got[i] = v.ok_or_else(|| value_error(KEYS[i], "", "missing from station file"))?;
    }
    let s = StationConfig {
        position: GeoPoint {
            latitude: got[0],
            longitude: got[1],
            altitude_asl: got[2],
        },
        antenna_tilt: got[3],
        carrier_frequency: got[4],
        horizontal_beamwidth: got[5],
        vertical_beamwidth: got[6],
    };
    s.validate().map_err(|e| value_error("station", "", e.to_string()))?;
    Ok(s)
}

pub fn format_station(s: &StationConfig) -> String {
    let v = [
        s.position.latitude,
        s.position.longitude,
        s.position.altitude_asl,
        s.antenna_tilt,
        s.carrier_frequency,
        s.horizontal_beamwidth,
        s.vertical_beamwidth,
    ];
    let mut out = String::from("# serving base station\n");
    for (k, v) in KEYS.iter().zip(v) {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use aerolink::synth::SynthScenario;

    #[test]
    fn round_trip() {
        let s = SynthScenario::default().station;
        assert_eq!(parse_station(&format_station(&s)).unwrap(), s);
    }

    #[test]
    fn prefix_and_missing_key() {
        let s = SynthScenario::default().station;
        let text = format_station(&s).replace("latitude", "station.latitude");
        assert_eq!(parse_station(&text).unwrap(), s);
        let short: String = format_station(&s).lines().filter(|l| !l.starts_with("antenna_tilt")).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_station(&short), Err(ConfigError::Value { .. })));
        assert!(matches!(parse_station("colour = red\n"), Err(ConfigError::UnknownKey(_))));
    }
}
