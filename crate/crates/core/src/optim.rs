//! Quasi-Newton minimization (BFGS with backtracking line search) on
//! unconstrained parameter vectors. Gradients come from central differences.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BfgsOptions {
    /// Converged when the gradient infinity norm drops below this.
    pub gtol: f64,
    /// Converged when an accepted step changes the objective by less than
    /// `ftol * (1 + |f|)`.
    pub ftol: f64,
    pub max_iter: usize,
    /// Relative finite-difference step.
    pub fd_step: f64,
    /// A stalled line search counts as convergence when the gradient norm
    /// is below this (finite-difference noise floor).
    pub stall_gtol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            gtol: 1e-6,
            ftol: 1e-12,
            max_iter: 500,
            fd_step: 1e-5,
            stall_gtol: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Objective value after every accepted step, starting with the initial point.
    pub trace: Vec<f64>,
}

fn eval<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], fx: f64, step: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = step * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = eval(f, &xp);
        xp[i] = x[i] - h;
        let fm = eval(f, &xp);
        xp[i] = x[i];
        g[i] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            (false, false) => 0.0,
        };
    }
    g
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Minimize `f` from `x0`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &BfgsOptions,
) -> Result<OptimResult> {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = eval(&mut f, x.as_slice());
    if !fx.is_finite() {
        return Err(Error::Numerical(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut g = gradient(&mut f, x.as_slice(), fx, opts.fd_step);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut trace = vec![fx];

    for iter in 0..opts.max_iter {
        let gnorm = inf_norm(&g);
        if gnorm < opts.gtol {
            return Ok(OptimResult {
                x: x.as_slice().to_vec(),
                f: fx,
                gradient_norm: gnorm,
                iterations: iter,
                trace,
            });
        }
        let mut dir = -(&h_inv * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            h_inv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        // Keep the first trial step bounded in parameter space.
        let dmax = inf_norm(&dir);
        let mut step = if dmax > 5.0 { 5.0 / dmax } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * step;
            let ft = eval(&mut f, trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if gnorm < opts.stall_gtol {
                return Ok(OptimResult {
                    x: x.as_slice().to_vec(),
                    f: fx,
                    gradient_norm: gnorm,
                    iterations: iter,
                    trace,
                });
            }
            return Err(Error::NoConvergence {
                iterations: iter,
                objective: fx,
                gradient_norm: gnorm,
                best: x.as_slice().to_vec(),
            });
        };
        let g_new = gradient(&mut f, x_new.as_slice(), f_new, opts.fd_step);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        let small_change = (fx - f_new).abs() <= opts.ftol * (1.0 + f_new.abs());
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);
        if small_change {
            return Ok(OptimResult {
                x: x.as_slice().to_vec(),
                f: fx,
                gradient_norm: inf_norm(&g),
                iterations: iter + 1,
                trace,
            });
        }
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - (&s * y.transpose()) * rho;
            let right = &eye - (&y * s.transpose()) * rho;
            h_inv = &left * &h_inv * &right + (&s * s.transpose()) * rho;
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        objective: fx,
        gradient_norm: inf_norm(&g),
        best: x.as_slice().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(f, &[-1.2, 1.0], &BfgsOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!((r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn trace_is_non_increasing() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(4) + x[0] * x[1];
        let r = minimize(f, &[0.0, 0.0], &BfgsOptions::default()).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
