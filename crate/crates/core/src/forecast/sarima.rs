//! `(0,1,q) x (0,1,Q)_s` models on series with gaps: exact Gaussian
//! likelihood by a Kalman filter on the levels, conditional on the first
//! `s + 1` observations, with missing values skipped in the update.

use log::{debug, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{minimize, BfgsOptions};
use crate::simulate::SarimaParams;

/// Minimum number of observations after the conditioning block.
pub const MIN_SARIMA_OBS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SarimaOrders {
    pub q: usize,
    pub seasonal_q: usize,
    pub season: usize,
}

impl Default for SarimaOrders {
    fn default() -> Self {
        Self {
            q: 6,
            seasonal_q: 1,
            season: 5,
        }
    }
}

impl SarimaOrders {
    pub fn validate(&self) -> Result<()> {
        if self.seasonal_q > 1 {
            return Err(Error::InvalidArgument(format!(
                "seasonal MA order must be 0 or 1, got {}",
                self.seasonal_q
            )));
        }
        if self.season < 2 || self.q > 12 {
            return Err(Error::InvalidArgument(format!(
                "unsupported orders (0,1,{}) x (0,1,{})_{}",
                self.q, self.seasonal_q, self.season
            )));
        }
        Ok(())
    }

    fn n_params(&self) -> usize {
        self.q + self.seasonal_q
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarimaModel {
    pub orders: SarimaOrders,
    pub ma_coeffs: Vec<f64>,
    pub seasonal_ma: f64,
    pub innovation_var: f64,
    pub loglik: f64,
    pub aic: f64,
    pub n_obs: usize,
}

impl SarimaModel {
    /// A model with given coefficients and no fit statistics.
    pub fn with_params(
        orders: SarimaOrders,
        ma_coeffs: Vec<f64>,
        seasonal_ma: f64,
        innovation_var: f64,
    ) -> Result<Self> {
        orders.validate()?;
        if ma_coeffs.len() != orders.q
            || (orders.seasonal_q == 0 && seasonal_ma != 0.0)
            || !(innovation_var >= 0.0)
        {
            return Err(Error::InvalidArgument(
                "coefficients do not match the orders".into(),
            ));
        }
        Ok(Self {
            orders,
            ma_coeffs,
            seasonal_ma,
            innovation_var,
            loglik: f64::NAN,
            aic: f64::NAN,
            n_obs: 0,
        })
    }

    pub fn params(&self) -> SarimaParams {
        SarimaParams {
            ma: self.ma_coeffs.clone(),
            seasonal_ma: self.seasonal_ma,
            sigma2: self.innovation_var,
            season: self.orders.season,
        }
    }

    /// All roots of both MA polynomials lie outside the unit circle.
    pub fn is_invertible(&self) -> bool {
        self.seasonal_ma.abs() < 1.0 && max_root_modulus(&self.ma_coeffs) < 1.0
    }

    /// Some MA root or the seasonal coefficient within 0.001 of the unit circle.
    pub fn near_boundary(&self) -> bool {
        self.seasonal_ma.abs() > 0.999 || max_root_modulus(&self.ma_coeffs) > 0.999
    }

    /// Conditional means and variances for horizons `1..=max_h` after
    /// filtering `series`.
    pub fn forecast(&self, series: &[Option<f64>], max_h: usize) -> Result<Vec<(f64, f64)>> {
        let psi = self.params().ma_polynomial();
        let mut kf = Filter::new(&psi, self.orders.season);
        kf.run(series)?;
        kf.steady = None;
        let mut out = Vec::with_capacity(max_h);
        for _ in 0..max_h {
            kf.predict();
            out.push((kf.a[0], self.innovation_var * kf.p[0]));
        }
        Ok(out)
    }
}

/// Largest modulus among the inverse roots of `1 + sum_j c_j z^j`.
fn max_root_modulus(c: &[f64]) -> f64 {
    let q = c.len();
    if q == 0 {
        return 0.0;
    }
    let comp = DMatrix::from_fn(q, q, |i, j| {
        if i == 0 {
            -c[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    comp.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Kalman filter with unit innovation variance. State at `t`:
/// `(y_t, ..., y_{t-s}, e_t, ..., e_{t-m+1})` with `m = len(psi) - 1`.
/// Once the predicted covariance stops changing along a run of
/// observations, the steady-state covariances are reused.
struct Filter<'a> {
    psi: &'a [f64],
    s: usize,
    ny: usize,
    dim: usize,
    a: Vec<f64>,
    /// Row-major covariance.
    p: Vec<f64>,
    scratch: Vec<f64>,
    steady: Option<(Vec<f64>, Vec<f64>)>,
    n: usize,
    sum_sq: f64,
    sum_log_f: f64,
}

impl<'a> Filter<'a> {
    fn new(psi: &'a [f64], s: usize) -> Self {
        let ny = s + 1;
        let dim = ny + psi.len() - 1;
        Self {
            psi,
            s,
            ny,
            dim,
            a: vec![0.0; dim],
            p: vec![0.0; dim * dim],
            scratch: vec![0.0; dim * dim],
            steady: None,
            n: 0,
            sum_sq: 0.0,
            sum_log_f: 0.0,
        }
    }

    /// `T v` for one state vector read with stride `stride`.
    fn transition(&self, src: &[f64], stride: usize, out: &mut [f64], out_stride: usize) {
        let (ny, s) = (self.ny, self.s);
        let mut lead = src[0] + src[(s - 1) * stride] - src[s * stride];
        for j in 1..self.psi.len() {
            lead += self.psi[j] * src[(ny + j - 1) * stride];
        }
        out[0] = lead;
        for i in 1..ny {
            out[i * out_stride] = src[(i - 1) * stride];
        }
        if self.dim > ny {
            out[ny * out_stride] = 0.0;
            for i in ny + 1..self.dim {
                out[i * out_stride] = src[(i - 1) * stride];
            }
        }
    }

    fn predict(&mut self) {
        let d = self.dim;
        let mut a = vec![0.0; d];
        self.transition(&self.a, 1, &mut a, 1);
        self.a = a;
        if let Some((pred, _)) = &self.steady {
            self.p.copy_from_slice(pred);
            return;
        }
        let p = std::mem::take(&mut self.p);
        let mut tp = std::mem::take(&mut self.scratch);
        for c in 0..d {
            self.transition(&p[c..], d, &mut tp[c..], d);
        }
        let mut out = p;
        let mut row = vec![0.0; d];
        for r in 0..d {
            row.copy_from_slice(&tp[r * d..(r + 1) * d]);
            self.transition(&row, 1, &mut out[r * d..(r + 1) * d], 1);
        }
        out[0] += 1.0;
        if d > self.ny {
            let e = self.ny;
            out[e] += 1.0;
            out[e * d] += 1.0;
            out[e * d + e] += 1.0;
        }
        self.p = out;
        self.scratch = tp;
    }

    fn update(&mut self, y: f64) {
        let d = self.dim;
        let f = self.p[0];
        let v = y - self.a[0];
        self.n += 1;
        self.sum_sq += v * v / f;
        self.sum_log_f += f.ln();
        let k: Vec<f64> = (0..d).map(|i| self.p[i * d] / f).collect();
        for i in 0..d {
            self.a[i] += k[i] * v;
        }
        if let Some((_, filt)) = &self.steady {
            self.p.copy_from_slice(filt);
            return;
        }
        for i in 0..d {
            for j in 0..d {
                self.p[i * d + j] -= k[i] * k[j] * f;
            }
        }
    }

    /// Filters `series`, conditioning on the first `s + 1` consecutive
    /// observations.
    fn run(&mut self, series: &[Option<f64>]) -> Result<()> {
        let start = (self.s..series.len())
            .find(|&t| (t - self.s..=t).all(|i| series[i].is_some()))
            .ok_or(Error::InsufficientData {
                what: "consecutive observations to start the filter",
                needed: self.s + 1,
                got: 0,
            })?;
        for i in 0..self.ny {
            self.a[i] = series[start - i].unwrap();
        }
        let d = self.dim;
        for i in self.ny..d {
            self.p[i * d + i] = 1.0;
        }
        let mut last_pred: Option<Vec<f64>> = None;
        for y in &series[start + 1..] {
            match y {
                Some(y) => {
                    self.predict();
                    if self.steady.is_none() {
                        let pred = self.p.clone();
                        self.update(*y);
                        let converged = last_pred.as_ref().is_some_and(|prev| {
                            prev.iter().zip(&pred).all(|(a, b)| (a - b).abs() < 1e-13)
                        });
                        if converged {
                            self.steady = Some((pred, self.p.clone()));
                        } else {
                            last_pred = Some(pred);
                        }
                    } else {
                        self.update(*y);
                    }
                }
                None => {
                    self.steady = None;
                    last_pred = None;
                    self.predict();
                }
            }
        }
        Ok(())
    }

    /// Concentrated log-likelihood and the innovation variance estimate.
    fn concentrated(&self) -> (f64, f64) {
        let n = self.n as f64;
        let sigma2 = self.sum_sq / n;
        let ll =
            -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0) - 0.5 * self.sum_log_f;
        (ll, sigma2)
    }
}

/// MA coefficients from unconstrained values through partial
/// autocorrelations in `(-1, 1)`; the result is always invertible.
fn ma_from_unconstrained(x: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(x.len());
    for (k, &xk) in x.iter().enumerate() {
        let r = xk.tanh();
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - r * prev[k - 1 - j];
        }
        phi.push(r);
    }
    phi.iter().map(|p| -p).collect()
}

fn unconstrained_from_ma(theta: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = theta.iter().map(|t| -t).collect();
    let mut x = vec![0.0; phi.len()];
    for k in (0..phi.len()).rev() {
        let r = phi[k].clamp(-0.999, 0.999);
        x[k] = r.atanh();
        let denom = 1.0 - r * r;
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = (prev[j] + r * prev[k - 1 - j]) / denom;
        }
        phi.truncate(k);
    }
    x
}

fn split_params(orders: &SarimaOrders, x: &[f64]) -> (Vec<f64>, f64) {
    let ma = ma_from_unconstrained(&x[..orders.q]);
    let seasonal = if orders.seasonal_q == 1 {
        x[orders.q].tanh()
    } else {
        0.0
    };
    (ma, seasonal)
}

fn filter_with(
    orders: &SarimaOrders,
    ma: &[f64],
    seasonal: f64,
    series: &[Option<f64>],
) -> Result<(f64, f64, usize)> {
    let params = SarimaParams {
        ma: ma.to_vec(),
        seasonal_ma: seasonal,
        sigma2: 1.0,
        season: orders.season,
    };
    let psi = if orders.seasonal_q == 1 {
        params.ma_polynomial()
    } else {
        let mut p = vec![1.0];
        p.extend_from_slice(ma);
        p
    };
    let mut kf = Filter::new(&psi, orders.season);
    kf.run(series)?;
    let (ll, s2) = kf.concentrated();
    Ok((ll, s2, kf.n))
}

/// Maximum-likelihood fit for fixed orders. Missing values (`None`) are
/// skipped by the filter.
pub fn fit_sarima(series: &[Option<f64>], orders: &SarimaOrders) -> Result<SarimaModel> {
    fit_sarima_from(series, orders, None)
}

/// Like [`fit_sarima`], starting the optimizer at `start`'s coefficients.
pub fn fit_sarima_from(
    series: &[Option<f64>],
    orders: &SarimaOrders,
    start: Option<&SarimaModel>,
) -> Result<SarimaModel> {
    orders.validate()?;
    let (_, s2, n) = filter_with(orders, &vec![0.0; orders.q], 0.0, series)?;
    if n < MIN_SARIMA_OBS {
        return Err(Error::InsufficientData {
            what: "observations after differencing",
            needed: MIN_SARIMA_OBS,
            got: n,
        });
    }
    if !(s2 > 1e-20) {
        return Err(Error::Numerical(
            "series has no variation after differencing".into(),
        ));
    }
    let objective = |x: &[f64]| {
        let (ma, seasonal) = split_params(orders, x);
        match filter_with(orders, &ma, seasonal, series) {
            Ok((ll, s2, _)) if s2 > 0.0 => -ll / n as f64,
            _ => f64::INFINITY,
        }
    };
    let x0 = match start {
        Some(m) if m.orders == *orders => {
            let mut x = unconstrained_from_ma(&m.ma_coeffs);
            if orders.seasonal_q == 1 {
                x.push(m.seasonal_ma.clamp(-0.999, 0.999).atanh());
            }
            x
        }
        _ => vec![0.0; orders.n_params()],
    };
    let opt = if x0.is_empty() {
        None
    } else {
        let opts = BfgsOptions::default();
        Some(minimize(objective, &x0, &opts)?)
    };
    let x = opt.as_ref().map_or(x0.clone(), |o| o.x.clone());
    let (ma, seasonal) = split_params(orders, &x);
    let (ll, s2, n) = filter_with(orders, &ma, seasonal, series)?;
    let model = SarimaModel {
        orders: *orders,
        ma_coeffs: ma,
        seasonal_ma: seasonal,
        innovation_var: s2,
        loglik: ll,
        aic: -2.0 * ll + 2.0 * (orders.n_params() + 1) as f64,
        n_obs: n,
    };
    if model.near_boundary() {
        debug!("fitted MA polynomial is at or near the invertibility boundary");
    }
    Ok(model)
}

/// AIC totals of `(0,1,q) x (0,1,Q)_s` candidates over sub-samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub orders: SarimaOrders,
    /// `(q, summed AIC)`; candidates that failed on any sub-sample are absent.
    pub table: Vec<(usize, f64)>,
}

/// Fits `q = 1..=max_q` with the seasonal part of `base` on every
/// sub-sample `[lo, hi)` of `series` and picks the smallest summed AIC.
pub fn select_ma_order(
    series: &[Option<f64>],
    subsamples: &[(usize, usize)],
    max_q: usize,
    base: &SarimaOrders,
) -> Result<OrderSelection> {
    if subsamples.is_empty() || max_q == 0 {
        return Err(Error::InvalidArgument(
            "order selection needs sub-samples and max_q >= 1".into(),
        ));
    }
    let mut table: Vec<(usize, f64)> = Vec::new();
    for q in 1..=max_q {
        let orders = SarimaOrders { q, ..*base };
        let fits: Result<Vec<SarimaModel>> = subsamples
            .iter()
            .map(|&(lo, hi)| {
                let hi = hi.min(series.len());
                if lo >= hi {
                    return Err(Error::InvalidArgument(format!(
                        "empty sub-sample [{lo}, {hi})"
                    )));
                }
                fit_sarima(&series[lo..hi], &orders)
            })
            .collect();
        match fits {
            Ok(f) => table.push((q, f.iter().map(|m| m.aic).sum())),
            Err(e) => warn!("candidate q = {q} skipped ({e})"),
        }
    }
    let best = table
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Numerical("no candidate order could be fitted".into()))?;
    Ok(OrderSelection {
        orders: SarimaOrders { q: best.0, ..*base },
        table,
    })
}
