//! Plot-ready CSV tables built from evaluation residuals.

/// `(lower edge, upper edge, count)` for `bins` equal-width bins spanning the
/// data range. The last bin is closed on the right.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let a = lo + i as f64 * width;
            let b = if i + 1 == bins { lo + bins as f64 * width } else { lo + (i + 1) as f64 * width };
            (a, b, c)
        })
        .collect()
}

/// Empirical CDF points `(value, i / n)` in ascending value order.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

pub fn histogram_csv(values: &[f64], bins: usize) -> String {
    let mut s = String::from("bin_lower,bin_upper,count\n");
    for (a, b, c) in histogram(values, bins) {
        s.push_str(&format!("{a},{b},{c}\n"));
    }
    s
}

pub fn ecdf_csv(values: &[f64]) -> String {
    let mut s = String::from("residual,cdf\n");
    for (x, f) in ecdf(values) {
        s.push_str(&format!("{x},{f}\n"));
    }
    s
}
