//! Ordinary least squares with collinearity diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative residual norm below which a design column counts as collinear.
const COLLINEAR_TOL: f64 = 1e-8;

/// Names of the first design column that is (numerically) a linear
/// combination of the earlier ones, followed by the columns it depends on.
/// Empty when the design has full column rank.
pub(crate) fn collinear_terms(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            return vec![names[j].clone()];
        }
        if !kept.is_empty() {
            let prev = DMatrix::from_fn(x.nrows(), kept.len(), |i, c| x[(i, kept[c])]);
            let coef = prev
                .clone()
                .svd(true, true)
                .solve(&col, 1e-14)
                .expect("svd solve");
            let resid = (&col - &prev * &coef).norm();
            if resid < COLLINEAR_TOL * norm {
                let scale = coef.amax();
                let mut out = vec![names[j].clone()];
                out.extend(
                    kept.iter()
                        .zip(coef.iter())
                        .filter(|(_, c)| c.abs() > 1e-6 * scale)
                        .map(|(&k, _)| names[k].clone()),
                );
                return out;
            }
        }
        kept.push(j);
    }
    Vec::new()
}

/// Coefficients and residual sum of squares.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let beta = x
        .clone()
        .svd(true, true)
        .solve(y, 1e-14)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let sse = (y - x * &beta).norm_squared();
    Ok((beta, sse))
}
