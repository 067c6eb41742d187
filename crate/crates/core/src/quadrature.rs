//! Equidistant grids and composite trapezoid quadrature.
//!
//! Every functional integral in the crate (curve norms, Gram matrices,
//! inner products of basis functions) goes through these helpers so that
//! orthonormality checks and score systems share one inner product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of trapezoid nodes for integrals of fitted curves.
pub const DEFAULT_QUAD_POINTS: usize = 201;

/// An equidistant grid `lo = x_0 < x_1 < ... < x_{n-1} = hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lo: f64,
    hi: f64,
    n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 points, got {n}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "invalid grid interval [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Trapezoid weights: `h/2` at both ends, `h` inside.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n];
        w[0] = 0.5 * h;
        w[self.n - 1] = 0.5 * h;
        w
    }

    /// Relative slack accepted when testing membership at the endpoints.
    fn slack(&self) -> f64 {
        1e-9 * (self.hi - self.lo)
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.lo - self.slack() && u <= self.hi + self.slack()
    }

    /// Linear interpolation of grid-sampled `values` at `u`.
    pub fn interpolate(&self, values: &[f64], u: f64) -> Result<f64> {
        debug_assert_eq!(values.len(), self.n);
        if !self.contains(u) {
            return Err(Error::OutsideDomain {
                value: u,
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(self.interpolate_clamped(values, u))
    }

    /// Linear interpolation with `u` clamped into the grid span.
    pub fn interpolate_clamped(&self, values: &[f64], u: f64) -> f64 {
        let u = u.clamp(self.lo, self.hi);
        let pos = (u - self.lo) / self.spacing();
        let i = (pos.floor() as usize).min(self.n - 2);
        let frac = pos - i as f64;
        values[i] * (1.0 - frac) + values[i + 1] * frac
    }

    /// Trapezoid nodes and weights for the subinterval `[a, b]` of the grid:
    /// the endpoints `a`, `b` plus every grid node strictly between them.
    /// On `[lo, hi]` this reproduces [`Grid::trapezoid_weights`] exactly.
    pub fn restricted_nodes(&self, a: f64, b: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !(self.contains(a) && self.contains(b) && a < b) {
            return Err(Error::OutsideDomain {
                value: if self.contains(a) { b } else { a },
                lo: self.lo,
                hi: self.hi,
            });
        }
        let a = a.max(self.lo);
        let b = b.min(self.hi);
        let tol = self.slack();
        let mut nodes = vec![a];
        for i in 0..self.n {
            let x = self.point(i);
            if x > a + tol && x < b - tol {
                nodes.push(x);
            }
        }
        nodes.push(b);
        let weights = trapezoid_weights_for(&nodes);
        Ok((nodes, weights))
    }
}

/// Trapezoid weights for arbitrary sorted nodes.
pub fn trapezoid_weights_for(nodes: &[f64]) -> Vec<f64> {
    let m = nodes.len();
    let mut w = vec![0.0; m];
    for i in 0..m.saturating_sub(1) {
        let h = nodes[i + 1] - nodes[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// Composite trapezoid rule of `f` on `m` equidistant nodes over `[a, b]`.
pub fn trapezoid<F: FnMut(f64) -> f64>(a: f64, b: f64, m: usize, mut f: F) -> f64 {
    assert!(m >= 2, "trapezoid needs at least two nodes");
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / (m - 1) as f64;
    let mut sum = 0.5 * (f(a) + f(b));
    for i in 1..m - 1 {
        sum += f(a + i as f64 * h);
    }
    sum * h
}

/// `m` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && m >= 1);
    if m == 1 {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..m)
        .map(|i| (llo + (lhi - llo) * i as f64 / (m - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_exact_for_linear() {
        let v = trapezoid(1.0, 3.0, 7, |x| 2.0 * x + 1.0);
        assert!((v - 10.0).abs() < 1e-12);
    }

    #[test]
    fn restricted_nodes_full_domain_match_grid_weights() {
        let g = Grid::new(0.0, 2.0, 11).unwrap();
        let (nodes, w) = g.restricted_nodes(0.0, 2.0).unwrap();
        assert_eq!(nodes.len(), 11);
        for (a, b) in w.iter().zip(g.trapezoid_weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn restricted_nodes_partial_interval() {
        let g = Grid::new(0.0, 1.0, 11).unwrap();
        let (nodes, w) = g.restricted_nodes(0.25, 0.62).unwrap();
        assert_eq!(nodes.first().copied(), Some(0.25));
        assert_eq!(nodes.last().copied(), Some(0.62));
        assert!((w.iter().sum::<f64>() - 0.37).abs() < 1e-12);
    }

    #[test]
    fn interpolation_outside_is_error() {
        let g = Grid::new(0.0, 1.0, 5).unwrap();
        let vals = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert!((g.interpolate(&vals, 0.375).unwrap() - 1.5).abs() < 1e-12);
        assert!(g.interpolate(&vals, 1.1).is_err());
    }
}
