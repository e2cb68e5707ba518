use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalQuality {
    Excellent,
    Good,
    Medium,
    Weak,
}

// (excellent above, good from, medium from); below the last is weak.
const RSRP_BANDS: [f64; 3] = [-70.0, -80.0, -90.0];
const RSRQ_BANDS: [f64; 3] = [-6.0, -10.0, -15.0];
const RSSI_BANDS: [f64; 3] = [-65.0, -75.0, -85.0];

fn grade(v: f64, bands: &[f64; 3]) -> SignalQuality {
    if v > bands[0] {
        SignalQuality::Excellent
    } else if v >= bands[1] {
        SignalQuality::Good
    } else if v >= bands[2] {
        SignalQuality::Medium
    } else {
        SignalQuality::Weak
    }
}

/// Grades RSRP (dBm), RSRQ (dB) and RSSI (dBm) independently.
///
/// Shared band edges belong to the better grade except at the excellent
/// edge, which is strict (`-70 dBm` RSRP is Good).
pub fn classify_signal_quality(
    rsrp: f64,
    rsrq: f64,
    rssi: f64,
) -> (SignalQuality, SignalQuality, SignalQuality) {
    (
        grade(rsrp, &RSRP_BANDS),
        grade(rsrq, &RSRQ_BANDS),
        grade(rssi, &RSSI_BANDS),
    )
}

/// `n_rb * rsrp / rssi` on linear powers.
pub fn rsrq_consistency(rsrp_watts: f64, rssi_watts: f64, n_rb: u32) -> Result<f64, DatasetError> {
    if !(rssi_watts > 0.0) {
        return Err(DatasetError::NonPositiveRssi(rssi_watts));
    }
    if n_rb < 1 {
        return Err(DatasetError::ResourceBlocks);
    }
    Ok(n_rb as f64 * rsrp_watts / rssi_watts)
}

pub fn ratio_to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}
