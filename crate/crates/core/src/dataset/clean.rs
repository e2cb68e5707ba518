use std::collections::{BTreeMap, HashSet};
use std::fmt;

use super::{Dataset, GeoSample, Kpi};

#[derive(Debug, Clone, PartialEq)]
pub struct CleaningRules {
    /// Drop rows lacking any of the four targets.
    pub drop_missing: bool,
    /// Drop rows where RSRP exceeds RSSI.
    pub enforce_rsrp_le_rssi: bool,
    /// Drop rows whose |z| exceeds this many sample standard deviations in any KPI.
    pub outlier_sigma: Option<f64>,
    /// Drop repeated (timestamp, position) rows, keeping the first.
    pub drop_duplicates: bool,
}

impl Default for CleaningRules {
    fn default() -> Self {
        Self {
            drop_missing: true,
            enforce_rsrp_le_rssi: true,
            outlier_sigma: Some(4.0),
            drop_duplicates: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleanReport {
    pub input: usize,
    pub missing: usize,
    pub inconsistent: usize,
    pub duplicate: usize,
    pub outliers: BTreeMap<Kpi, usize>,
    pub output: usize,
}

impl fmt::Display for CleanReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input_rows={}", self.input)?;
        writeln!(f, "rule.missing_value={}", self.missing)?;
        writeln!(f, "rule.rsrp_gt_rssi={}", self.inconsistent)?;
        writeln!(f, "rule.duplicate={}", self.duplicate)?;
        for kpi in Kpi::ALL {
            writeln!(
                f,
                "rule.outlier.{}={}",
                kpi.name().to_ascii_lowercase(),
                self.outliers.get(&kpi).copied().unwrap_or(0)
            )?;
        }
        writeln!(f, "output_rows={}", self.output)
    }
}

fn dup_key(s: &GeoSample) -> (i64, u32, u64, u64, u64) {
    (
        s.timestamp.timestamp(),
        s.timestamp.timestamp_subsec_nanos(),
        s.position.latitude.to_bits(),
        s.position.longitude.to_bits(),
        s.position.altitude_asl.to_bits(),
    )
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> Option<(f64, f64)> {
    let n = values.clone().count();
    if n < 2 {
        return None;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (var > 0.0).then(|| (mean, var.sqrt()))
}

/// Applies the rules in order: missing values, RSRP/RSSI consistency,
/// duplicates, then outliers.
///
/// Outlier removal is repeated until no row exceeds the threshold, so
/// `clean(clean(ds)) == clean(ds)`.
pub fn clean(ds: &Dataset, rules: &CleaningRules) -> (Dataset, CleanReport) {
    let mut report = CleanReport {
        input: ds.len(),
        ..Default::default()
    };
    let mut kept: Vec<GeoSample> = Vec::with_capacity(ds.len());
    let mut seen = HashSet::new();
    for s in &ds.samples {
        if rules.drop_missing && Kpi::ALL.iter().any(|&k| s.kpi(k).is_none()) {
            report.missing += 1;
            continue;
        }
        if rules.enforce_rsrp_le_rssi {
            if let (Some(rsrp), Some(rssi)) = (s.rsrp, s.rssi) {
                if rsrp > rssi {
                    report.inconsistent += 1;
                    continue;
                }
            }
        }
        if rules.drop_duplicates && !seen.insert(dup_key(s)) {
            report.duplicate += 1;
            continue;
        }
        kept.push(s.clone());
    }

    if let Some(limit) = rules.outlier_sigma {
        loop {
            let stats: Vec<(Kpi, Option<(f64, f64)>)> = Kpi::ALL
                .iter()
                .map(|&k| (k, mean_std(kept.iter().filter_map(move |s| s.kpi(k)))))
                .collect();
            let mut removed = false;
            kept.retain(|s| {
                for (k, st) in &stats {
                    if let (Some((m, sd)), Some(v)) = (st, s.kpi(*k)) {
                        if ((v - m) / sd).abs() > limit {
                            *report.outliers.entry(*k).or_insert(0) += 1;
                            removed = true;
                            return false;
                        }
                    }
                }
                true
            });
            if !removed {
                break;
            }
        }
    }

    report.output = kept.len();
    let entry = format!(
        "clean: {} -> {} (missing {}, inconsistent {}, duplicate {}, outliers {})",
        report.input,
        report.output,
        report.missing,
        report.inconsistent,
        report.duplicate,
        report.outliers.values().sum::<usize>()
    );
    (ds.derive(kept, entry), report)
}
