//! Exact Gaussian-process regression, the aggregation layer.
//!
//! Hyperparameters live in log space as
//! `[ln sf2, ln l_1 .. ln l_d, (ln shape), ln sn2]`, where the shape entry
//! only exists for the rational-quadratic family. The prior mean is zero.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const JITTER_FLOOR_REL: f64 = 1e-10;
pub const JITTER_CEILING_REL: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GprError {
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("non-finite training value")]
    NonFinite,
    #[error("length mismatch: {0} rows vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("expected {expected} input columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid kernel: {0}")]
    Kernel(String),
    #[error("covariance not positive definite even with jitter {0:e}")]
    Factorization(f64),
    #[error("unknown kernel family `{0}`")]
    UnknownFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    #[serde(rename = "squared-exponential")]
    SquaredExponential,
    #[serde(rename = "matern-5/2")]
    Matern52,
    #[serde(rename = "rational-quadratic")]
    RationalQuadratic,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::SquaredExponential => "squared-exponential",
            Self::Matern52 => "matern-5/2",
            Self::RationalQuadratic => "rational-quadratic",
        }
    }

    fn has_shape(self) -> bool {
        self == Self::RationalQuadratic
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = GprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "squared-exponential" | "se" | "rbf" => Ok(Self::SquaredExponential),
            "matern-5/2" | "matern52" => Ok(Self::Matern52),
            "rational-quadratic" | "rq" => Ok(Self::RationalQuadratic),
            _ => Err(GprError::UnknownFamily(s.to_string())),
        }
    }
}

/// Stationary ARD kernel over scaled distance `r^2 = sum ((a_m - b_m) / l_m)^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub signal_variance: f64,
    pub length_scales: Vec<f64>,
    /// Rational-quadratic mixture parameter; ignored by the other families.
    pub shape: f64,
}

const SQRT5: f64 = 2.236_067_977_499_79;

impl KernelSpec {
    pub fn new(family: KernelFamily, signal_variance: f64, length_scales: Vec<f64>) -> Self {
        Self {
            family,
            signal_variance,
            length_scales,
            shape: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), GprError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.signal_variance) || !ok(self.shape) || !self.length_scales.iter().all(|&l| ok(l)) {
            return Err(GprError::Kernel("scale parameters must be finite and positive".into()));
        }
        if self.length_scales.is_empty() {
            return Err(GprError::Kernel("no length scales".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    fn inv_scales(&self) -> Vec<f64> {
        self.length_scales.iter().map(|l| 1.0 / l).collect()
    }

    #[inline]
    fn from_r2(&self, r2: f64) -> f64 {
        let sf2 = self.signal_variance;
        match self.family {
            KernelFamily::SquaredExponential => sf2 * (-0.5 * r2).exp(),
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                sf2 * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
            }
            KernelFamily::RationalQuadratic => sf2 * (1.0 + r2 / (2.0 * self.shape)).powf(-self.shape),
        }
    }

    /// `dk/d(r^2) * (-2)`, the factor multiplying `d_m^2` in `dk/d ln l_m`.
    #[inline]
    fn length_factor(&self, r2: f64, k: f64) -> f64 {
        let sf2 = self.signal_variance;
        match self.family {
            KernelFamily::SquaredExponential => k,
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                sf2 * 5.0 / 3.0 * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp()
            }
            KernelFamily::RationalQuadratic => {
                sf2 * (1.0 + r2 / (2.0 * self.shape)).powf(-self.shape - 1.0)
            }
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let inv = self.inv_scales();
        self.from_r2(scaled_r2(a, b, &inv))
    }

    fn n_params(&self) -> usize {
        self.dim() + 2 + usize::from(self.family.has_shape())
    }
}

#[inline]
fn scaled_r2(a: &[f64], b: &[f64], inv: &[f64]) -> f64 {
    let mut s = 0.0;
    for m in 0..inv.len() {
        let d = (a[m] - b[m]) * inv[m];
        s += d * d;
    }
    s
}

fn check_rows<R: AsRef<[f64]>>(rows: &[R], dim: usize) -> Result<(), GprError> {
    for r in rows {
        let r = r.as_ref();
        if r.len() != dim {
            return Err(GprError::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(GprError::NonFinite);
        }
    }
    Ok(())
}

/// `K[i][j] = k(a_i, b_j)`.
pub fn kernel_matrix<R: AsRef<[f64]>, S: AsRef<[f64]>>(
    k: &KernelSpec,
    a: &[R],
    b: &[S],
) -> Result<DMatrix<f64>, GprError> {
    k.validate()?;
    check_rows(a, k.dim())?;
    check_rows(b, k.dim())?;
    let inv = k.inv_scales();
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        k.from_r2(scaled_r2(a[i].as_ref(), b[j].as_ref(), &inv))
    }))
}

fn gram(k: &KernelSpec, z: &[&[f64]]) -> DMatrix<f64> {
    let n = z.len();
    let inv = k.inv_scales();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = k.from_r2(scaled_r2(z[i], z[j], &inv));
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Factors `K + (noise + jitter) I`, escalating the jitter from
/// `JITTER_FLOOR_REL * trace/n` by decades up to `ceiling_rel * trace/n`.
fn factor_with_ladder(
    mut kmat: DMatrix<f64>,
    noise: f64,
    ceiling_rel: f64,
) -> Result<(Cholesky<f64, Dyn>, f64), GprError> {
    let n = kmat.nrows();
    for i in 0..n {
        kmat[(i, i)] += noise;
    }
    if let Some(c) = Cholesky::new(kmat.clone()) {
        return Ok((c, 0.0));
    }
    let base = kmat.trace() / n as f64;
    let mut rel = JITTER_FLOOR_REL;
    let mut last = 0.0;
    while rel <= ceiling_rel * (1.0 + 1e-9) {
        let jitter = rel * base;
        let mut m = kmat.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok((c, jitter));
        }
        last = jitter;
        rel *= 10.0;
    }
    Err(GprError::Factorization(last))
}

fn factor_exact(kmat: DMatrix<f64>, noise: f64, jitter: f64) -> Result<Cholesky<f64, Dyn>, GprError> {
    let mut m = kmat;
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] += noise;
    }
    if jitter > 0.0 {
        for i in 0..n {
            m[(i, i)] += jitter;
        }
    }
    Cholesky::new(m).ok_or(GprError::Factorization(jitter))
}

fn unpack(family: KernelFamily, theta: &[f64]) -> (KernelSpec, f64) {
    let d = theta.len() - 2 - usize::from(family.has_shape());
    let mut k = KernelSpec::new(family, theta[0].exp(), theta[1..=d].iter().map(|v| v.exp()).collect());
    if family.has_shape() {
        k.shape = theta[d + 1].exp();
    }
    (k, theta[theta.len() - 1].exp())
}

fn pack(k: &KernelSpec, noise: f64) -> Vec<f64> {
    let mut t = vec![k.signal_variance.ln()];
    t.extend(k.length_scales.iter().map(|l| l.ln()));
    if k.family.has_shape() {
        t.push(k.shape.ln());
    }
    t.push(noise.ln());
    t
}

/// Inverse of the factored matrix from `L^-1` and one product.
fn chol_inverse(c: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    let n = c.l_dirty().nrows();
    let l = c.l();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("Cholesky factor has a positive diagonal");
    linv.tr_mul(&linv)
}

fn lml_value(c: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> (f64, DVector<f64>) {
    let alpha = c.solve(y);
    let n = y.len() as f64;
    let logdet_half: f64 = c.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let v = -0.5 * y.dot(&alpha) - logdet_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    (v, alpha)
}

fn lml_and_grad(
    z: &[&[f64]],
    y: &DVector<f64>,
    k: &KernelSpec,
    noise: f64,
    ceiling_rel: f64,
) -> Result<(f64, Vec<f64>), GprError> {
    let n = z.len();
    let (chol, _) = factor_with_ladder(gram(k, z), noise, ceiling_rel)?;
    let (value, alpha) = lml_value(&chol, y);
    let kinv = chol_inverse(&chol);

    let d = k.dim();
    let inv = k.inv_scales();
    let mut grad = vec![0.0; k.n_params()];
    let mut trace_w = 0.0;
    let mut diff2 = vec![0.0; d];
    for j in 0..n {
        for i in j..n {
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            let mult = if i == j { 1.0 } else { 2.0 };
            if i == j {
                trace_w += w;
            }
            let mut r2 = 0.0;
            for m in 0..d {
                let dm = (z[i][m] - z[j][m]) * inv[m];
                diff2[m] = dm * dm;
                r2 += diff2[m];
            }
            let kv = k.from_r2(r2);
            let wm = mult * w;
            grad[0] += wm * kv;
            let lf = k.length_factor(r2, kv);
            for m in 0..d {
                grad[1 + m] += wm * lf * diff2[m];
            }
            if k.family.has_shape() {
                let u = r2 / (2.0 * k.shape);
                grad[1 + d] += wm * kv * k.shape * (u / (1.0 + u) - u.ln_1p());
            }
        }
    }
    let last = grad.len() - 1;
    grad[last] = noise * trace_w;
    for g in &mut grad {
        *g *= 0.5;
    }
    Ok((value, grad))
}

/// Log marginal likelihood and its gradient with respect to the log
/// hyperparameters, in the packed order documented at module level.
pub fn log_marginal_likelihood<R: AsRef<[f64]>>(
    z: &[R],
    y: &[f64],
    kernel: &KernelSpec,
    noise_variance: f64,
) -> Result<(f64, Vec<f64>), GprError> {
    kernel.validate()?;
    check_rows(z, kernel.dim())?;
    if z.len() != y.len() {
        return Err(GprError::LengthMismatch(z.len(), y.len()));
    }
    let rows: Vec<&[f64]> = z.iter().map(|r| r.as_ref()).collect();
    lml_and_grad(&rows, &DVector::from_column_slice(y), kernel, noise_variance, JITTER_CEILING_REL)
}

/// `[x | y_stw | eps]`, one row per sample.
pub fn build_aggregate_input(
    x: &[[f64; 4]],
    y_stw: &[f64],
    eps: &[f64],
) -> Result<Vec<[f64; 6]>, GprError> {
    if x.len() != y_stw.len() || x.len() != eps.len() {
        return Err(GprError::LengthMismatch(x.len(), y_stw.len().min(eps.len())));
    }
    Ok(x.iter()
        .zip(y_stw.iter().zip(eps))
        .map(|(r, (&s, &e))| [r[0], r[1], r[2], r[3], s, e])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GprOptions {
    pub family: KernelFamily,
    pub restarts: usize,
    /// Likelihood evaluations allowed per restart.
    pub max_evals: usize,
    /// Largest jitter tried, relative to `trace(K)/n`.
    pub jitter_ceiling: f64,
    /// Uniform seeded subset of rows the final model conditions on.
    pub subsample: Option<usize>,
    /// Uniform seeded subset used only for the hyperparameter search.
    pub opt_rows: Option<usize>,
    pub seed: u64,
}

impl Default for GprOptions {
    fn default() -> Self {
        Self {
            family: KernelFamily::SquaredExponential,
            restarts: 5,
            max_evals: 80,
            jitter_ceiling: JITTER_CEILING_REL,
            subsample: None,
            opt_rows: Some(500),
            seed: 0x6e72,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub initial_lml: f64,
    pub final_lml: f64,
    pub evals: usize,
}

/// Serializable state of a [`GprModel`]; the factor is recomputed from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprParts {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    pub jitter: f64,
    pub n_cols: usize,
    pub training_inputs: Vec<f64>,
    pub alpha: Vec<f64>,
    pub log_marginal_likelihood: f64,
    pub degenerate: bool,
    pub restarts: Vec<RestartRecord>,
}

/// A conditioned GP. The Cholesky factor is rebuilt from the stored
/// inputs and hyperparameters when a model is deserialized.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GprParts", into = "GprParts")]
pub struct GprModel {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    /// Diagonal jitter that made the factorization succeed.
    pub jitter: f64,
    pub n_cols: usize,
    /// Row-major training inputs.
    pub training_inputs: Vec<f64>,
    pub alpha: Vec<f64>,
    pub log_marginal_likelihood: f64,
    /// Set when the targets had (near) zero variance.
    pub degenerate: bool,
    pub restarts: Vec<RestartRecord>,
    chol: DMatrix<f64>,
    inv_scales: Vec<f64>,
}

impl PartialEq for GprModel {
    fn eq(&self, other: &Self) -> bool {
        GprParts::from(self.clone()) == GprParts::from(other.clone())
    }
}

impl From<GprModel> for GprParts {
    fn from(m: GprModel) -> Self {
        Self {
            kernel: m.kernel,
            noise_variance: m.noise_variance,
            jitter: m.jitter,
            n_cols: m.n_cols,
            training_inputs: m.training_inputs,
            alpha: m.alpha,
            log_marginal_likelihood: m.log_marginal_likelihood,
            degenerate: m.degenerate,
            restarts: m.restarts,
        }
    }
}

impl TryFrom<GprParts> for GprModel {
    type Error = GprError;

    fn try_from(p: GprParts) -> Result<Self, Self::Error> {
        p.kernel.validate()?;
        if p.n_cols != p.kernel.dim() {
            return Err(GprError::DimensionMismatch {
                expected: p.kernel.dim(),
                got: p.n_cols,
            });
        }
        let n = p.alpha.len();
        if p.training_inputs.len() != n * p.n_cols {
            return Err(GprError::LengthMismatch(p.training_inputs.len() / p.n_cols.max(1), n));
        }
        let rows: Vec<&[f64]> = p.training_inputs.chunks(p.n_cols).collect();
        let chol = factor_exact(gram(&p.kernel, &rows), p.noise_variance, p.jitter)?;
        Ok(Self {
            inv_scales: p.kernel.inv_scales(),
            chol: chol.unpack(),
            kernel: p.kernel,
            noise_variance: p.noise_variance,
            jitter: p.jitter,
            n_cols: p.n_cols,
            training_inputs: p.training_inputs,
            alpha: p.alpha,
            log_marginal_likelihood: p.log_marginal_likelihood,
            degenerate: p.degenerate,
            restarts: p.restarts,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GprPrediction {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Largest negative variance clamped to zero.
    pub max_clamp: f64,
}

impl GprModel {
    /// Conditions a GP with fixed hyperparameters on `(z, y)`.
    pub fn condition<R: AsRef<[f64]>>(
        z: &[R],
        y: &[f64],
        kernel: KernelSpec,
        noise_variance: f64,
        jitter_ceiling: f64,
    ) -> Result<Self, GprError> {
        kernel.validate()?;
        check_rows(z, kernel.dim())?;
        if z.len() != y.len() {
            return Err(GprError::LengthMismatch(z.len(), y.len()));
        }
        if z.is_empty() {
            return Err(GprError::TooFewRows(0));
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(GprError::Kernel("noise variance must be finite and non-negative".into()));
        }
        let rows: Vec<&[f64]> = z.iter().map(|r| r.as_ref()).collect();
        let (chol, jitter) = factor_with_ladder(gram(&kernel, &rows), noise_variance, jitter_ceiling)?;
        let yv = DVector::from_column_slice(y);
        let (lml, alpha) = lml_value(&chol, &yv);
        Ok(Self {
            inv_scales: kernel.inv_scales(),
            n_cols: kernel.dim(),
            kernel,
            noise_variance,
            jitter,
            training_inputs: rows.iter().flat_map(|r| r.iter().copied()).collect(),
            alpha: alpha.iter().copied().collect(),
            log_marginal_likelihood: lml,
            degenerate: false,
            restarts: Vec::new(),
            chol: chol.unpack(),
        })
    }

    pub fn n_train(&self) -> usize {
        self.alpha.len()
    }

    /// Lower Cholesky factor of `K + (noise + jitter) I`.
    pub fn chol_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    fn check_dim(&self, z: &[f64]) -> Result<(), GprError> {
        if z.len() != self.n_cols {
            return Err(GprError::DimensionMismatch {
                expected: self.n_cols,
                got: z.len(),
            });
        }
        Ok(())
    }

    #[inline]
    fn cross_cov(&self, z: &[f64], i: usize) -> f64 {
        let row = &self.training_inputs[i * self.n_cols..(i + 1) * self.n_cols];
        self.kernel.from_r2(scaled_r2(z, row, &self.inv_scales))
    }

    /// Posterior mean at one point, without the variance solve.
    pub fn predict_mean_row(&self, z: &[f64]) -> Result<f64, GprError> {
        self.check_dim(z)?;
        let mut s = 0.0;
        for (i, a) in self.alpha.iter().enumerate() {
            s += self.cross_cov(z, i) * a;
        }
        Ok(s)
    }

    pub fn predict_mean<R: AsRef<[f64]>>(&self, z: &[R]) -> Result<Vec<f64>, GprError> {
        z.iter().map(|r| self.predict_mean_row(r.as_ref())).collect()
    }

    /// Posterior mean and latent standard deviation per row.
    pub fn predict<R: AsRef<[f64]>>(&self, z: &[R]) -> Result<GprPrediction, GprError> {
        let n = self.n_train();
        let mut out = GprPrediction {
            mean: Vec::with_capacity(z.len()),
            std: Vec::with_capacity(z.len()),
            max_clamp: 0.0,
        };
        for r in z {
            let r = r.as_ref();
            out.mean.push(self.predict_mean_row(r)?);
            let kstar = DVector::from_fn(n, |i, _| self.cross_cov(r, i));
            let v = self
                .chol
                .solve_lower_triangular(&kstar)
                .expect("Cholesky factor has a positive diagonal");
            let var = self.kernel.signal_variance - v.norm_squared();
            if var < 0.0 {
                out.max_clamp = out.max_clamp.max(-var);
            }
            out.std.push(var.max(0.0).sqrt());
        }
        Ok(out)
    }
}

struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    fn clamp(&self, t: &mut [f64]) {
        for (i, v) in t.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }
}

fn column_spread(rows: &[&[f64]], m: usize) -> f64 {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r[m]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[m] - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 { var.sqrt() } else { 1.0 }
}

/// Projected BFGS ascent with Armijo backtracking. Returns the best point,
/// its value, and the number of evaluations used.
fn ascend<F>(mut f: F, x0: Vec<f64>, bounds: &Bounds, max_evals: usize) -> Option<(Vec<f64>, f64, f64, usize)>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let p = x0.len();
    let mut x = x0;
    bounds.clamp(&mut x);
    let (mut fx, mut g) = f(&x)?;
    let initial = fx;
    let mut evals = 1;
    let identity = DMatrix::<f64>::identity(p, p);
    let mut h = identity.clone();
    while evals < max_evals {
        let gv = DVector::from_column_slice(&g);
        let mut dir = &h * &gv;
        if dir.dot(&gv) <= 0.0 {
            h = identity.clone();
            dir = gv.clone();
        }
        let longest = dir.amax();
        if longest > 2.0 {
            dir *= 2.0 / longest;
        }
        let mut t = 1.0;
        let mut accepted = None;
        while evals < max_evals && t > 1e-8 {
            let mut xn: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
            bounds.clamp(&mut xn);
            let step: f64 = xn.iter().zip(&x).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
            if step <= 0.0 {
                break;
            }
            evals += 1;
            if let Some((fnew, gnew)) = f(&xn) {
                if fnew >= fx + 1e-4 * step {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            break;
        };
        let s = DVector::from_iterator(p, xn.iter().zip(&x).map(|(a, b)| a - b));
        // curvature pair for the minimization of -f
        let yv = DVector::from_iterator(p, g.iter().zip(&gnew).map(|(a, b)| a - b));
        let sy = s.dot(&yv);
        let gain = fnew - fx;
        x = xn;
        fx = fnew;
        g = gnew;
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let a = &identity - rho * &s * yv.transpose();
            h = &a * &h * a.transpose() + rho * &s * s.transpose();
        }
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gain < 1e-9 * (1.0 + fx.abs()) || gmax < 1e-6 {
            break;
        }
    }
    Some((x, initial, fx, evals))
}

fn seeded_subset(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx = sample_indices(rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Fits hyperparameters by multi-start likelihood ascent, then conditions
/// on all (or the `subsample` of) rows.
pub fn fit_gpr<R: AsRef<[f64]>>(z: &[R], y: &[f64], opts: &GprOptions) -> Result<GprModel, GprError> {
    if z.len() != y.len() {
        return Err(GprError::LengthMismatch(z.len(), y.len()));
    }
    if z.len() < 2 {
        return Err(GprError::TooFewRows(z.len()));
    }
    let dim = z[0].as_ref().len();
    if dim == 0 {
        return Err(GprError::DimensionMismatch { expected: 1, got: 0 });
    }
    check_rows(z, dim)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GprError::NonFinite);
    }
    if opts.restarts == 0 || opts.max_evals == 0 {
        return Err(GprError::Kernel("restarts and max_evals must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let all: Vec<&[f64]> = z.iter().map(|r| r.as_ref()).collect();
    let (rows, targets): (Vec<&[f64]>, Vec<f64>) = match opts.subsample {
        Some(k) if k < all.len() => {
            let idx = seeded_subset(all.len(), k.max(2), &mut rng);
            (idx.iter().map(|&i| all[i]).collect(), idx.iter().map(|&i| y[i]).collect())
        }
        _ => (all, y.to_vec()),
    };
    let (opt_z, opt_y): (Vec<&[f64]>, Vec<f64>) = match opts.opt_rows {
        Some(k) if k < rows.len() => {
            let idx = seeded_subset(rows.len(), k.max(2), &mut rng);
            (idx.iter().map(|&i| rows[i]).collect(), idx.iter().map(|&i| targets[i]).collect())
        }
        _ => (rows.clone(), targets.clone()),
    };

    let n = opt_y.len() as f64;
    let ymean = opt_y.iter().sum::<f64>() / n;
    let yvar = opt_y.iter().map(|v| (v - ymean).powi(2)).sum::<f64>() / n;
    let degenerate = yvar <= 1e-12 * ymean.powi(2).max(1.0);
    let yscale = {
        let ms = opt_y.iter().map(|v| v * v).sum::<f64>() / n;
        if yvar > 0.0 { yvar } else if ms > 0.0 { ms } else { 1.0 }
    };
    let spreads: Vec<f64> = (0..dim).map(|m| column_spread(&opt_z, m)).collect();

    let family = opts.family;
    let mut centre = KernelSpec::new(family, yscale, spreads.clone());
    centre.shape = 1.0;
    let centre_theta = pack(&centre, 0.1 * yscale);
    let ln10 = 10f64.ln();
    let mut lo = vec![(1e-6 * yscale).ln()];
    let mut hi = vec![(1e4 * yscale).ln()];
    for s in &spreads {
        lo.push((1e-3 * s).ln());
        hi.push((1e3 * s).ln());
    }
    if family.has_shape() {
        lo.push(1e-2f64.ln());
        hi.push(1e3f64.ln());
    }
    lo.push((1e-10 * yscale).ln());
    hi.push((10.0 * yscale).ln());
    let bounds = Bounds { lo, hi };

    let yv = DVector::from_column_slice(&opt_y);
    let objective = |theta: &[f64]| {
        let (k, noise) = unpack(family, theta);
        lml_and_grad(&opt_z, &yv, &k, noise, opts.jitter_ceiling)
            .ok()
            .filter(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()))
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut records = Vec::with_capacity(opts.restarts);
    for r in 0..opts.restarts {
        let start: Vec<f64> = if r == 0 {
            centre_theta.clone()
        } else {
            centre_theta
                .iter()
                .map(|c| c + rng.random_range(-1.0..1.0) * ln10)
                .collect()
        };
        if let Some((theta, initial, fval, evals)) = ascend(objective, start, &bounds, opts.max_evals) {
            records.push(RestartRecord {
                initial_lml: initial,
                final_lml: fval,
                evals,
            });
            if best.as_ref().map_or(true, |(b, _)| fval > *b) {
                best = Some((fval, theta));
            }
        }
    }
    let Some((_, theta)) = best else {
        return Err(GprError::Factorization(opts.jitter_ceiling));
    };
    let (kernel, noise) = unpack(family, &theta);
    let mut model = GprModel::condition(&rows, &targets, kernel, noise, opts.jitter_ceiling)?;
    model.degenerate = degenerate;
    model.restarts = records;
    Ok(model)
}
