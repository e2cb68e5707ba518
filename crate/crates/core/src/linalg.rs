//! Dense least squares shared by the stepwise layer and the baselines.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub sse: f64,
    /// 2-norm condition number of the design matrix.
    pub condition: f64,
}

/// Solves `min ||A b - y||` through a Householder QR of `A`.
///
/// Returns `None` when `A` has fewer rows than columns or is exactly
/// singular; callers decide what condition number they tolerate.
pub fn least_squares(design: &DMatrix<f64>, y: &[f64]) -> Option<LeastSquares> {
    let (n, p) = design.shape();
    if n < p || p == 0 || y.len() != n {
        return None;
    }
    let yv = DVector::from_column_slice(y);
    let qr = design.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > 0.0) {
        return None;
    }
    let qty = qr.q().transpose() * &yv;
    let beta = r.solve_upper_triangular(&qty)?;
    let resid = design * &beta - &yv;
    Some(LeastSquares {
        coefficients: beta.iter().copied().collect(),
        sse: resid.norm_squared(),
        condition: smax / smin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let fit = least_squares(&a, &[3.0, 5.0, 7.0, 9.0]).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.sse < 1e-20);
        assert!(fit.condition >= 1.0);
    }

    #[test]
    fn singular_design() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let fit = least_squares(&a, &[1.0, 2.0, 3.0]);
        assert!(fit.map_or(true, |f| f.condition > 1e12));
        assert!(least_squares(&DMatrix::zeros(1, 2), &[1.0]).is_none());
    }
}
