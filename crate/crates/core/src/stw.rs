//! Stepwise linear regression, the first layer of the stack.
//!
//! Terms are drawn from a fixed universe (constant, linear, pairwise
//! interactions, squares) and enter or leave the model one at a time based
//! on partial F-tests. Every candidate at a given step adds or removes one
//! degree of freedom, so the smallest p-value is the largest F statistic;
//! selection compares F directly, which stays exact where p underflows.

use std::collections::HashSet;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::linalg::least_squares;

/// Candidates whose design matrix exceeds this condition number are skipped.
pub const CONDITION_LIMIT: f64 = 1e8;

/// Residual sums below this fraction of the total sum of squares count as
/// an exact fit.
const EXACT_FIT_REL: f64 = 1e-20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StwError {
    #[error("non-finite value in stepwise inputs")]
    NonFinite,
    #[error("{rows} rows is not more than the {needed} candidate terms")]
    TooFewRows { rows: usize, needed: usize },
    #[error("p_enter ({p_enter}) must be below p_remove ({p_remove})")]
    Thresholds { p_enter: f64, p_remove: f64 },
    #[error("expected {expected} feature columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("design matrix of the base model is rank deficient")]
    RankDeficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermSpec {
    Constant,
    Linear { i: usize },
    Interaction { i: usize, j: usize },
    Square { i: usize },
}

impl TermSpec {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            TermSpec::Constant => 1.0,
            TermSpec::Linear { i } => x[i],
            TermSpec::Interaction { i, j } => x[i] * x[j],
            TermSpec::Square { i } => x[i] * x[i],
        }
    }
}

impl fmt::Display for TermSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermSpec::Constant => write!(f, "1"),
            TermSpec::Linear { i } => write!(f, "x{i}"),
            TermSpec::Interaction { i, j } => write!(f, "x{i}:x{j}"),
            TermSpec::Square { i } => write!(f, "x{i}^2"),
        }
    }
}

/// How deep the candidate term universe goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermUniverse {
    Linear,
    Interactions,
    Quadratic,
}

impl TermUniverse {
    /// Terms in their fixed ordinal order: constant, linear, interactions
    /// (lexicographic pairs), squares.
    pub fn terms(self, n_features: usize) -> Vec<TermSpec> {
        let mut t = vec![TermSpec::Constant];
        t.extend((0..n_features).map(|i| TermSpec::Linear { i }));
        if self >= TermUniverse::Interactions {
            for i in 0..n_features {
                for j in i + 1..n_features {
                    t.push(TermSpec::Interaction { i, j });
                }
            }
        }
        if self >= TermUniverse::Quadratic {
            t.extend((0..n_features).map(|i| TermSpec::Square { i }));
        }
        t
    }
}

impl std::str::FromStr for TermUniverse {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(TermUniverse::Linear),
            "interactions" => Ok(TermUniverse::Interactions),
            "quadratic" => Ok(TermUniverse::Quadratic),
            _ => Err(format!("unknown term universe `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StwConfig {
    pub p_enter: f64,
    pub p_remove: f64,
    pub max_iters: usize,
    pub universe: TermUniverse,
}

impl Default for StwConfig {
    fn default() -> Self {
        Self {
            p_enter: 0.05,
            p_remove: 0.10,
            max_iters: 100,
            universe: TermUniverse::Quadratic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    Add,
    Remove,
    /// Candidate skipped because its design was ill-conditioned.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: StepAction,
    pub term: TermSpec,
    pub f_stat: f64,
    pub p_value: f64,
    /// Training SSE after the step (for skips, the SSE of the current model).
    pub sse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StwModel {
    pub n_features: usize,
    pub config: StwConfig,
    pub terms: Vec<TermSpec>,
    pub coefficients: Vec<f64>,
    pub trace: Vec<StepRecord>,
}

/// Survival function of F(1, df) at `f`.
fn f_sf_one(f: f64, df: f64) -> f64 {
    if f.is_nan() || f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + f))
}

struct Fitter<'a> {
    columns: Vec<Vec<f64>>,
    universe: Vec<TermSpec>,
    y: &'a [f64],
    sse_floor: f64,
}

struct Fit {
    coef: Vec<f64>,
    sse: f64,
}

impl<'a> Fitter<'a> {
    fn fit(&self, set: &[usize]) -> Option<(Fit, f64)> {
        let n = self.y.len();
        let design = DMatrix::from_fn(n, set.len(), |r, c| self.columns[set[c]][r]);
        let ls = least_squares(&design, self.y)?;
        Some((
            Fit {
                coef: ls.coefficients,
                sse: ls.sse.max(self.sse_floor),
            },
            ls.condition,
        ))
    }
}

fn mask(set: &[usize]) -> u64 {
    set.iter().fold(0u64, |m, &i| m | (1 << i))
}

/// Forward/backward stepwise selection starting from the constant model.
///
/// Each iteration tries one forward step (best F among candidates, enters
/// when p < `p_enter`), then one backward step (worst F among included
/// non-constant terms, leaves when p > `p_remove`). Stops when neither
/// applies, a term set repeats, or `max_iters` is reached.
pub fn fit_stw<R: AsRef<[f64]>>(x: &[R], y: &[f64], cfg: &StwConfig) -> Result<StwModel, StwError> {
    if !(cfg.p_enter < cfg.p_remove) {
        return Err(StwError::Thresholds {
            p_enter: cfg.p_enter,
            p_remove: cfg.p_remove,
        });
    }
    if x.len() != y.len() {
        return Err(StwError::LengthMismatch(x.len(), y.len()));
    }
    let n = y.len();
    let n_features = x.first().map(|r| r.as_ref().len()).unwrap_or(0);
    let universe = cfg.universe.terms(n_features);
    if n <= universe.len() {
        return Err(StwError::TooFewRows {
            rows: n,
            needed: universe.len(),
        });
    }
    for r in x {
        let r = r.as_ref();
        if r.len() != n_features {
            return Err(StwError::DimensionMismatch {
                expected: n_features,
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(StwError::NonFinite);
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StwError::NonFinite);
    }

    let columns: Vec<Vec<f64>> = universe
        .iter()
        .map(|t| x.iter().map(|r| t.eval(r.as_ref())).collect())
        .collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let fitter = Fitter {
        columns,
        universe: universe.clone(),
        y,
        sse_floor: EXACT_FIT_REL * ss_tot,
    };

    let mut current: Vec<usize> = vec![0];
    let (mut fit, _) = fitter.fit(&current).ok_or(StwError::RankDeficient)?;
    let mut trace = Vec::new();
    let mut visited: HashSet<u64> = HashSet::from([mask(&current)]);

    if ss_tot > 0.0 {
        let mut steps = 0;
        'outer: while steps < cfg.max_iters {
            let mut changed = false;

            // forward
            let df = (n - current.len() - 1) as f64;
            let mut best: Option<(usize, f64, Fit)> = None;
            for cand in 0..universe.len() {
                if current.contains(&cand) {
                    continue;
                }
                let mut set = current.clone();
                set.push(cand);
                set.sort_unstable();
                match fitter.fit(&set) {
                    Some((f, cond)) if cond <= CONDITION_LIMIT => {
                        let stat = (fit.sse - f.sse) / (f.sse / df);
                        if best.as_ref().map_or(true, |(_, b, _)| stat > *b) {
                            best = Some((cand, stat, f));
                        }
                    }
                    _ => trace.push(StepRecord {
                        action: StepAction::Skip,
                        term: universe[cand],
                        f_stat: f64::NAN,
                        p_value: f64::NAN,
                        sse: fit.sse,
                    }),
                }
            }
            if let Some((cand, stat, f)) = best {
                let p = f_sf_one(stat, df);
                if p < cfg.p_enter {
                    current.push(cand);
                    current.sort_unstable();
                    trace.push(StepRecord {
                        action: StepAction::Add,
                        term: universe[cand],
                        f_stat: stat,
                        p_value: p,
                        sse: f.sse,
                    });
                    fit = f;
                    steps += 1;
                    changed = true;
                    if !visited.insert(mask(&current)) {
                        break 'outer;
                    }
                }
            }

            // backward
            if current.len() > 1 && steps < cfg.max_iters {
                let df = (n - current.len()) as f64;
                let mut worst: Option<(usize, f64, Fit)> = None;
                for &term in current.iter().filter(|&&t| t != 0) {
                    let set: Vec<usize> = current.iter().copied().filter(|&t| t != term).collect();
                    if let Some((f, _)) = fitter.fit(&set) {
                        let stat = (f.sse - fit.sse) / (fit.sse / df);
                        if worst.as_ref().map_or(true, |(_, w, _)| stat < *w) {
                            worst = Some((term, stat, f));
                        }
                    }
                }
                if let Some((term, stat, f)) = worst {
                    let p = f_sf_one(stat, df);
                    if p > cfg.p_remove {
                        current.retain(|&t| t != term);
                        trace.push(StepRecord {
                            action: StepAction::Remove,
                            term: universe[term],
                            f_stat: stat,
                            p_value: p,
                            sse: f.sse,
                        });
                        fit = f;
                        steps += 1;
                        changed = true;
                        if !visited.insert(mask(&current)) {
                            break 'outer;
                        }
                    }
                }
            }

            if !changed {
                break;
            }
        }
    }

    Ok(StwModel {
        n_features,
        config: *cfg,
        terms: current.iter().map(|&i| fitter.universe[i]).collect(),
        coefficients: fit.coef,
        trace,
    })
}

impl StwModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .zip(&self.coefficients)
            .map(|(t, c)| c * t.eval(x))
            .sum()
    }

    pub fn predict<R: AsRef<[f64]>>(&self, x: &[R]) -> Result<Vec<f64>, StwError> {
        x.iter()
            .map(|r| {
                let r = r.as_ref();
                if r.len() != self.n_features {
                    Err(StwError::DimensionMismatch {
                        expected: self.n_features,
                        got: r.len(),
                    })
                } else {
                    Ok(self.predict_row(r))
                }
            })
            .collect()
    }

    /// Term set obtained by replaying the add/remove trace from the constant model.
    pub fn replay(&self) -> Vec<TermSpec> {
        let mut set = vec![TermSpec::Constant];
        for step in &self.trace {
            match step.action {
                StepAction::Add => set.push(step.term),
                StepAction::Remove => set.retain(|t| *t != step.term),
                StepAction::Skip => {}
            }
        }
        let order = self.config.universe.terms(self.n_features);
        set.sort_by_key(|t| order.iter().position(|o| o == t));
        set
    }
}

pub fn residuals(y: &[f64], fitted: &[f64]) -> Result<Vec<f64>, StwError> {
    if y.len() != fitted.len() {
        return Err(StwError::LengthMismatch(y.len(), fitted.len()));
    }
    Ok(y.iter().zip(fitted).map(|(a, b)| a - b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_x(n: usize, seed: u64) -> Vec<[f64; 4]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
            .collect()
    }

    /// Normal-equation solve on a fixed term set, independent of the QR route.
    fn normal_equations(x: &[[f64; 4]], y: &[f64], terms: &[TermSpec]) -> (Vec<f64>, f64) {
        let p = terms.len();
        let mut ata = DMatrix::<f64>::zeros(p, p);
        let mut aty = nalgebra::DVector::<f64>::zeros(p);
        for (r, &yv) in x.iter().zip(y) {
            let a: Vec<f64> = terms.iter().map(|t| t.eval(r)).collect();
            for i in 0..p {
                aty[i] += a[i] * yv;
                for j in 0..p {
                    ata[(i, j)] += a[i] * a[j];
                }
            }
        }
        let beta = ata.lu().solve(&aty).unwrap();
        let sse = x
            .iter()
            .zip(y)
            .map(|(r, &yv)| {
                let p: f64 = terms.iter().zip(beta.iter()).map(|(t, b)| b * t.eval(r)).sum();
                (yv - p).powi(2)
            })
            .sum();
        (beta.iter().copied().collect(), sse)
    }

    #[test]
    fn universe_layout() {
        let t = TermUniverse::Quadratic.terms(4);
        assert_eq!(t.len(), 15);
        assert_eq!(t[0], TermSpec::Constant);
        assert_eq!(t[5], TermSpec::Interaction { i: 0, j: 1 });
        assert_eq!(t[14], TermSpec::Square { i: 3 });
        assert_eq!(TermUniverse::Linear.terms(4).len(), 5);
        assert_eq!(TermUniverse::Interactions.terms(4).len(), 11);
    }

    #[test]
    fn constant_target_gives_constant_model() {
        let x = random_x(40, 1);
        let y = vec![2.5; 40];
        let m = fit_stw(&x, &y, &StwConfig::default()).unwrap();
        assert_eq!(m.terms, vec![TermSpec::Constant]);
        assert!(m.predict(&x).unwrap().iter().all(|&p| (p - 2.5).abs() < 1e-12));
    }

    #[test]
    fn exact_linear_target() {
        let x = random_x(50, 2);
        let y: Vec<f64> = x.iter().map(|r| 3.0 + 2.0 * r[0]).collect();
        let m = fit_stw(&x, &y, &StwConfig::default()).unwrap();
        assert_eq!(m.terms, vec![TermSpec::Constant, TermSpec::Linear { i: 0 }]);
        let (oracle, _) = normal_equations(&x, &y, &m.terms);
        assert!((m.coefficients[0] - 3.0).abs() < 1e-9);
        assert!((m.coefficients[1] - 2.0).abs() < 1e-9);
        assert!((oracle[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn interaction_target_enters() {
        let x = random_x(60, 3);
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[1]).collect();
        let m = fit_stw(&x, &y, &StwConfig::default()).unwrap();
        assert!(m.terms.contains(&TermSpec::Interaction { i: 0, j: 1 }));
        let pred = m.predict(&x).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let sse: f64 = y.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(sse < 1e-16 * ss_tot, "sse {sse}");
    }

    #[test]
    fn predict_and_residuals() {
        let m = StwModel {
            n_features: 4,
            config: StwConfig::default(),
            terms: vec![TermSpec::Constant, TermSpec::Linear { i: 0 }],
            coefficients: vec![3.0, 2.0],
            trace: vec![],
        };
        assert_eq!(m.predict(&[[5.0, 0.0, 0.0, 0.0]]).unwrap(), vec![13.0]);
        assert!(matches!(
            m.predict(&[[1.0, 2.0]]),
            Err(StwError::DimensionMismatch { expected: 4, got: 2 })
        ));
        assert_eq!(residuals(&[1.0, 2.0], &[0.5, 2.5]).unwrap(), vec![0.5, -0.5]);
        assert_eq!(residuals(&[1.0], &[1.0]).unwrap(), vec![0.0]);
        assert!(residuals(&[1.0], &[]).is_err());
    }

    #[test]
    fn config_and_size_errors() {
        let x = random_x(10, 4);
        let y = vec![0.0; 10];
        assert!(matches!(
            fit_stw(&x, &y, &StwConfig::default()),
            Err(StwError::TooFewRows { rows: 10, needed: 15 })
        ));
        let bad = StwConfig {
            p_enter: 0.2,
            p_remove: 0.1,
            ..Default::default()
        };
        let x = random_x(30, 4);
        assert!(matches!(fit_stw(&x, &vec![0.0; 30], &bad), Err(StwError::Thresholds { .. })));
        let mut y = vec![0.0; 30];
        y[3] = f64::NAN;
        assert_eq!(fit_stw(&x, &y, &StwConfig::default()), Err(StwError::NonFinite));
    }

    fn noisy_problem(seed: u64, n: usize) -> (Vec<[f64; 4]>, Vec<f64>) {
        let x = random_x(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let y = x
            .iter()
            .map(|r| 1.0 + 0.8 * r[1] - 0.5 * r[2] * r[3] + 0.3 * r[0] * r[0] + rng.random_range(-0.5..0.5))
            .collect();
        (x, y)
    }

    #[test]
    fn fit_properties() {
        for seed in 0..5 {
            let (x, y) = noisy_problem(seed, 120);
            let m = fit_stw(&x, &y, &StwConfig::default()).unwrap();

            // replay reproduces the final term set
            assert_eq!(m.replay(), m.terms);

            // SSE never increases across forward steps
            let mut last = f64::INFINITY;
            for s in m.trace.iter().filter(|s| s.action == StepAction::Add) {
                assert!(s.sse <= last);
                last = s.sse;
            }

            // residuals are orthogonal to every included column, and centered
            let pred = m.predict(&x).unwrap();
            let res = residuals(&y, &pred).unwrap();
            for t in &m.terms {
                let dot: f64 = x.iter().zip(&res).map(|(r, e)| t.eval(r) * e).sum();
                assert!(dot.abs() < 1e-6, "{t}: {dot}");
            }
            assert!((res.iter().sum::<f64>() / res.len() as f64).abs() < 1e-8);

            // in-sample R2 at least that of the constant model (zero)
            let r2 = crate::metrics::r_squared(&y, &pred).unwrap();
            assert!(r2 >= 0.0);

            // deterministic, and predict matches in-sample evaluation bitwise
            let again = fit_stw(&x, &y, &StwConfig::default()).unwrap();
            assert_eq!(again, m);
            assert_eq!(again.predict(&x).unwrap(), pred);

            // coefficients agree with the normal-equation oracle
            let (oracle, _) = normal_equations(&x, &y, &m.terms);
            for (a, b) in m.coefficients.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn first_step_matches_exhaustive_scan() {
        for seed in 10..15 {
            let (x, y) = noisy_problem(seed, 80);
            let m = fit_stw(&x, &y, &StwConfig::default()).unwrap();
            let universe = TermUniverse::Quadratic.terms(4);
            let (_, sse0) = normal_equations(&x, &y, &[TermSpec::Constant]);
            let df = (x.len() - 2) as f64;
            let mut best = (f64::INFINITY, TermSpec::Constant);
            for t in &universe[1..] {
                let (_, sse) = normal_equations(&x, &y, &[TermSpec::Constant, *t]);
                let f = (sse0 - sse) / (sse / df);
                let p = f_sf_one(f, df);
                if p < best.0 {
                    best = (p, *t);
                }
            }
            let first = m.trace.iter().find(|s| s.action == StepAction::Add).unwrap();
            assert_eq!(first.term, best.1);
        }
    }

    #[test]
    fn f_survival_reference_values() {
        // F(1, df) = t^2: P(|t_10| > 2.228138851986) = 0.05
        assert!((f_sf_one(2.228_138_851_986_f64.powi(2), 10.0) - 0.05).abs() < 1e-9);
        assert_eq!(f_sf_one(0.0, 10.0), 1.0);
        assert_eq!(f_sf_one(f64::INFINITY, 10.0), 0.0);
    }
}
