//! Natural cubic smoothing splines.
//!
//! The fit minimizes `sum_i (y_i - g(u_i))^2 + b * int g''(u)^2 du` over
//! twice differentiable `g`. The minimizer is a natural cubic spline with
//! knots at the distinct demands; it is computed in value/second-derivative
//! form from the penalized normal equations
//! `(R + b Q' W^-1 Q) gamma = Q' y`, `g = y - b W^-1 Q gamma`.
//!
//! Demands are mapped to `[0, 1]` before solving; the penalty scales as
//! `L^-3` under that change of variable, which is applied to `b`.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Domain;
use crate::quadrature::{trapezoid, DEFAULT_QUAD_POINTS};

/// Minimum number of distinct demand values for a nontrivial fit.
pub const MIN_DISTINCT_KNOTS: usize = 4;

/// A fitted price-demand curve for one day.
///
/// Stored as knot values and second derivatives (zero at both boundary
/// knots); evaluation is restricted to `[domain.lo, domain.hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceDemandCurve {
    pub day_index: u32,
    knots: Vec<f64>,
    values: Vec<f64>,
    second_derivs: Vec<f64>,
    smoothing_param: f64,
    domain: Domain,
    l2_norm: f64,
}

/// Wire form: `coefficients` holds the knot values followed by the knot
/// second derivatives.
#[derive(Serialize, Deserialize)]
struct CurveRecord {
    day_index: u32,
    knots: Vec<f64>,
    coefficients: Vec<f64>,
    b: f64,
    domain: [f64; 2],
    l2_norm: f64,
}

impl Serialize for PriceDemandCurve {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut coefficients = self.values.clone();
        coefficients.extend_from_slice(&self.second_derivs);
        CurveRecord {
            day_index: self.day_index,
            knots: self.knots.clone(),
            coefficients,
            b: self.smoothing_param,
            domain: [self.domain.lo, self.domain.hi],
            l2_norm: self.l2_norm,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PriceDemandCurve {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = CurveRecord::deserialize(d)?;
        let n = r.knots.len();
        if n < 2 || r.coefficients.len() != 2 * n {
            return Err(D::Error::custom("curve needs 2 coefficients per knot"));
        }
        if r.knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(D::Error::custom("curve knots must be strictly increasing"));
        }
        Ok(Self {
            day_index: r.day_index,
            values: r.coefficients[..n].to_vec(),
            second_derivs: r.coefficients[n..].to_vec(),
            knots: r.knots,
            smoothing_param: r.b,
            domain: Domain {
                lo: r.domain[0],
                hi: r.domain[1],
            },
            l2_norm: r.l2_norm,
        })
    }
}

impl PriceDemandCurve {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Fitted values at the knots.
    pub fn knot_values(&self) -> &[f64] {
        &self.values
    }

    pub fn second_derivatives(&self) -> &[f64] {
        &self.second_derivs
    }

    pub fn smoothing_param(&self) -> f64 {
        self.smoothing_param
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm
    }

    /// Curve value at `u`; errors outside the domain.
    pub fn evaluate(&self, u: f64) -> Result<f64> {
        let slack = 1e-9 * self.domain.width();
        if !(u >= self.domain.lo - slack && u <= self.domain.hi + slack) {
            return Err(Error::OutsideDomain {
                value: u,
                lo: self.domain.lo,
                hi: self.domain.hi,
            });
        }
        Ok(self.eval_unchecked(u.clamp(self.domain.lo, self.domain.hi)))
    }

    fn eval_unchecked(&self, u: f64) -> f64 {
        let n = self.knots.len();
        let i = self.knots.partition_point(|&k| k <= u).clamp(1, n - 1) - 1;
        let (xl, xr) = (self.knots[i], self.knots[i + 1]);
        let h = xr - xl;
        let (dl, dr) = (u - xl, xr - u);
        (dl * self.values[i + 1] + dr * self.values[i]) / h
            - dl * dr / 6.0
                * ((1.0 + dl / h) * self.second_derivs[i + 1]
                    + (1.0 + dr / h) * self.second_derivs[i])
    }

    /// Copy with every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            second_derivs: self.second_derivs.iter().map(|v| v * c).collect(),
            l2_norm: self.l2_norm * c.abs(),
            ..self.clone()
        }
    }

    /// Copy with the cached norm recomputed using `m` quadrature nodes.
    pub fn with_quad_points(mut self, m: usize) -> Self {
        self.l2_norm = self.l2_norm_with(m);
        self
    }

    /// `sqrt(int X(u)^2 du)` over the domain with `m` trapezoid nodes.
    pub fn l2_norm_with(&self, m: usize) -> f64 {
        let sq = trapezoid(self.domain.lo, self.domain.hi, m, |u| {
            let v = self.eval_unchecked(u);
            v * v
        });
        sq.max(0.0).sqrt()
    }
}

/// L2 norm of a curve over its domain (default quadrature).
pub fn curve_l2_norm(curve: &PriceDemandCurve) -> f64 {
    curve.l2_norm_with(DEFAULT_QUAD_POINTS)
}

/// Result of a single penalized fit.
#[derive(Debug, Clone)]
pub struct SplineFit {
    pub curve: PriceDemandCurve,
    /// Fitted values at the input pairs, in input order.
    pub fitted: Vec<f64>,
    /// Sum of squared residuals over the raw input pairs.
    pub sse: f64,
    /// Trace of the smoother matrix.
    pub trace: f64,
    pub n_obs: usize,
}

impl SplineFit {
    /// `n * SSE / (n - trace)^2`; not finite at `trace == n`.
    pub fn gcv(&self) -> f64 {
        let n = self.n_obs as f64;
        let denom = n - self.trace;
        if denom <= 1e-10 * n {
            return f64::INFINITY;
        }
        n * self.sse / (denom * denom)
    }
}

/// Tied-demand merged data on the unit interval.
struct Prepared {
    lo: f64,
    scale: f64,
    /// Distinct demands (original units).
    x: Vec<f64>,
    /// Distinct demands mapped to [0, 1].
    s: Vec<f64>,
    ybar: Vec<f64>,
    w: Vec<f64>,
    n_obs: usize,
    /// For each input pair, the index of its merged knot.
    index_of: Vec<usize>,
}

fn prepare(pairs: &[(f64, f64)]) -> Result<Prepared> {
    if pairs.iter().any(|(u, y)| !u.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidArgument("non-finite demand or price".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0));
    let (lo, hi) = match (order.first(), order.last()) {
        (Some(&a), Some(&b)) => (pairs[a].0, pairs[b].0),
        _ => {
            return Err(Error::InsufficientData {
                what: "distinct demand values",
                needed: MIN_DISTINCT_KNOTS,
                got: 0,
            })
        }
    };
    let range = hi - lo;
    let tie_tol = 1e-10 * range.max(f64::MIN_POSITIVE);
    let mut x: Vec<f64> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    let mut index_of = vec![0; pairs.len()];
    for &i in &order {
        let (u, y) = pairs[i];
        match x.last() {
            Some(&last) if u - last <= tie_tol => {
                let e = sums.last_mut().unwrap();
                e.0 += y;
                e.1 += 1;
            }
            _ => {
                x.push(u);
                sums.push((y, 1));
            }
        }
        index_of[i] = x.len() - 1;
    }
    if x.len() < MIN_DISTINCT_KNOTS {
        return Err(Error::InsufficientData {
            what: "distinct demand values",
            needed: MIN_DISTINCT_KNOTS,
            got: x.len(),
        });
    }
    let mut ybar = Vec::with_capacity(x.len());
    let mut w = Vec::with_capacity(x.len());
    for &(sy, c) in &sums {
        ybar.push(sy / c as f64);
        w.push(c as f64);
    }
    let s = x.iter().map(|&u| (u - lo) / range).collect();
    Ok(Prepared {
        lo,
        scale: range,
        x,
        s,
        ybar,
        w,
        n_obs: pairs.len(),
        index_of,
    })
}

/// Banded pieces of the natural-spline penalty on the unit interval.
struct Penalty {
    /// Q as dense n x (n-2).
    q: DMatrix<f64>,
    /// R as dense (n-2) x (n-2).
    r: DMatrix<f64>,
}

fn penalty(s: &[f64]) -> Penalty {
    let n = s.len();
    let m = n - 2;
    let h: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
    let mut q = DMatrix::zeros(n, m);
    let mut r = DMatrix::zeros(m, m);
    for c in 0..m {
        let j = c + 1;
        q[(j - 1, c)] = 1.0 / h[j - 1];
        q[(j, c)] = -1.0 / h[j - 1] - 1.0 / h[j];
        q[(j + 1, c)] = 1.0 / h[j];
        r[(c, c)] = (h[j - 1] + h[j]) / 3.0;
        if c + 1 < m {
            r[(c, c + 1)] = h[j] / 6.0;
            r[(c + 1, c)] = h[j] / 6.0;
        }
    }
    Penalty { q, r }
}

/// Fits a natural cubic smoothing spline to `(demand, price)` pairs with
/// smoothing parameter `b >= 0` (in price^2 / MW^3 units of the roughness
/// penalty). `b = 0` interpolates.
pub fn fit_spline(pairs: &[(f64, f64)], b: f64) -> Result<SplineFit> {
    if !(b >= 0.0) || !b.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "smoothing parameter must be finite and >= 0, got {b}"
        )));
    }
    let p = prepare(pairs)?;
    let n = p.x.len();
    let pen = penalty(&p.s);
    let alpha = b / p.scale.powi(3);

    // M = R + alpha * Q' W^-1 Q
    let winv = DVector::from_iterator(n, p.w.iter().map(|w| 1.0 / w));
    let winv_q = DMatrix::from_fn(n, n - 2, |i, j| winv[i] * pen.q[(i, j)]);
    let qtwq = pen.q.transpose() * &winv_q;
    let m = &pen.r + &qtwq * alpha;
    let chol = Cholesky::new(m)
        .ok_or_else(|| Error::Numerical("spline normal equations not positive definite".into()))?;
    let y = DVector::from_column_slice(&p.ybar);
    let gamma = chol.solve(&(pen.q.transpose() * &y));
    let g = &y - (&winv_q * &gamma) * alpha;

    // trace(A) = n - alpha * trace(M^-1 Q' W^-1 Q)
    let minv_qtwq = chol.solve(&qtwq);
    let trace = n as f64 - alpha * minv_qtwq.trace();

    let mut second = vec![0.0; n];
    let inv_l2 = 1.0 / (p.scale * p.scale);
    for c in 0..n - 2 {
        second[c + 1] = gamma[c] * inv_l2;
    }
    let values: Vec<f64> = g.iter().copied().collect();
    let fitted: Vec<f64> = p.index_of.iter().map(|&k| values[k]).collect();
    let sse = pairs
        .iter()
        .zip(&fitted)
        .map(|((_, y), f)| (y - f).powi(2))
        .sum::<f64>();

    let domain = Domain {
        lo: p.lo,
        hi: p.lo + p.scale,
    };
    let mut curve = PriceDemandCurve {
        day_index: 0,
        knots: p.x,
        values,
        second_derivs: second,
        smoothing_param: b,
        domain,
        l2_norm: 0.0,
    };
    curve.l2_norm = curve_l2_norm(&curve);
    Ok(SplineFit {
        curve,
        fitted,
        sse,
        trace,
        n_obs: p.n_obs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_pairs() -> Vec<(f64, f64)> {
        (0..24)
            .map(|i| {
                let u = 30000.0 + 1500.0 * i as f64 + (i * i) as f64;
                (u, 10.0 + 0.001 * u)
            })
            .collect()
    }

    #[test]
    fn reproduces_lines_for_any_b() {
        let pairs = line_pairs();
        for b in [0.0, 1e6, 1e12, 1e15, 1e18] {
            let fit = fit_spline(&pairs, b).unwrap();
            let max_res = pairs
                .iter()
                .zip(&fit.fitted)
                .map(|((_, y), f)| (y - f).abs())
                .fold(0.0, f64::max);
            assert!(max_res < 1e-8, "b={b}: {max_res}");
        }
    }

    #[test]
    fn interpolates_at_zero_b() {
        let pairs: Vec<_> = (0..10).map(|i| (i as f64, ((i * 7) % 5) as f64)).collect();
        let fit = fit_spline(&pairs, 0.0).unwrap();
        for (u, y) in &pairs {
            assert!((fit.curve.evaluate(*u).unwrap() - y).abs() < 1e-10);
        }
        assert!((fit.trace - 10.0).abs() < 1e-8);
    }

    #[test]
    fn constant_prices_everywhere() {
        let pairs: Vec<_> = (0..12).map(|i| (100.0 + 3.0 * i as f64, 40.0)).collect();
        let fit = fit_spline(&pairs, 5.0).unwrap();
        for u in [100.0, 101.3, 120.0, 133.0] {
            assert!((fit.curve.evaluate(u).unwrap() - 40.0).abs() < 1e-10);
        }
    }

    #[test]
    fn outside_domain_is_error() {
        let pairs: Vec<_> = (0..6).map(|i| (i as f64, i as f64)).collect();
        let fit = fit_spline(&pairs, 1.0).unwrap();
        assert!(matches!(
            fit.curve.evaluate(6.0),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn rejects_few_points_and_negative_b() {
        let pairs = [(1.0, 1.0), (2.0, 2.0), (3.0, 1.0), (3.0, 5.0)];
        assert!(matches!(
            fit_spline(&pairs, 1.0),
            Err(Error::InsufficientData { got: 3, .. })
        ));
        let pairs = [(1.0, 1.0), (2.0, 2.0), (3.0, 1.0), (4.0, 5.0)];
        assert!(fit_spline(&pairs, -1.0).is_err());
    }

    #[test]
    fn ties_are_merged_with_weights() {
        // Tied pair (2, 1) and (2, 3) behaves like a single weighted point at 2.
        let tied = [
            (0.0, 0.0),
            (1.0, 1.0),
            (2.0, 1.0),
            (2.0, 3.0),
            (3.0, 0.5),
            (4.0, 2.0),
        ];
        let fit = fit_spline(&tied, 0.0).unwrap();
        assert!((fit.curve.evaluate(2.0).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fit.curve.knots().len(), 5);
        assert!((fit.sse - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_curve_norm_closed_form() {
        let pairs: Vec<_> = (0..8).map(|i| (2.0 + i as f64, -3.0)).collect();
        let fit = fit_spline(&pairs, 1.0).unwrap();
        assert!((fit.curve.l2_norm() - 3.0 * 7.0_f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn json_roundtrip() {
        let fit = fit_spline(&line_pairs(), 1e12).unwrap();
        let s = serde_json::to_string(&fit.curve).unwrap();
        assert!(s.contains("\"coefficients\""));
        let back: PriceDemandCurve = serde_json::from_str(&s).unwrap();
        assert_eq!(back, fit.curve);
    }
}
