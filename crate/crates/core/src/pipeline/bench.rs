use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{PipelineError, TripleLayerModel};

pub const MIN_BENCH_ROWS: usize = 1000;

/// Median wall-clock seconds per layer for one pass over all rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerTimes {
    pub normalize: f64,
    pub stw: f64,
    pub ebt: f64,
    pub gpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub rows: usize,
    pub warmup_reps: usize,
    pub timed_reps: usize,
    /// Median over timed repetitions of rows / elapsed seconds.
    pub obs_per_sec: f64,
    pub rep_obs_per_sec: Vec<f64>,
    pub layers: LayerTimes,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times full-stack mean prediction over `rows` (raw feature rows).
pub fn benchmark_throughput(
    m: &TripleLayerModel,
    rows: &[[f64; 4]],
    warmup_reps: usize,
    timed_reps: usize,
) -> Result<ThroughputReport, PipelineError> {
    if rows.len() < MIN_BENCH_ROWS {
        return Err(PipelineError::TooFewBenchRows(rows.len()));
    }
    let timed_reps = timed_reps.max(1);
    for _ in 0..warmup_reps {
        std::hint::black_box(m.predict_mean(rows)?);
    }
    let mut rates = Vec::with_capacity(timed_reps);
    for _ in 0..timed_reps {
        let t0 = Instant::now();
        std::hint::black_box(m.predict_mean(rows)?);
        rates.push(rows.len() as f64 / t0.elapsed().as_secs_f64());
    }

    let mut times: [Vec<f64>; 4] = Default::default();
    for _ in 0..timed_reps {
        let t0 = Instant::now();
        let xn: Vec<[f64; 4]> = rows.iter().map(|r| m.norm.normalize_features(r)).collect();
        let t1 = Instant::now();
        let s: Vec<f64> = xn.iter().map(|r| m.stw.predict_row(r)).collect();
        let t2 = Instant::now();
        let e = m.ebt.predict_batch(&xn);
        let t3 = Instant::now();
        let z = crate::gpr::build_aggregate_input(&xn, &s, &e)?;
        std::hint::black_box(m.gpr.predict_mean(&z)?);
        let t4 = Instant::now();
        times[0].push((t1 - t0).as_secs_f64());
        times[1].push((t2 - t1).as_secs_f64());
        times[2].push((t3 - t2).as_secs_f64());
        times[3].push((t4 - t3).as_secs_f64());
    }
    let mut sorted = rates.clone();
    let [a, b, c, d] = &mut times;
    Ok(ThroughputReport {
        rows: rows.len(),
        warmup_reps,
        timed_reps,
        obs_per_sec: median(&mut sorted),
        rep_obs_per_sec: rates,
        layers: LayerTimes {
            normalize: median(a),
            stw: median(b),
            ebt: median(c),
            gpr: median(d),
        },
    })
}
