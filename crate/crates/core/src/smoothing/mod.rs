//! Per-day price-demand curves: penalized spline fits, GCV selection of
//! the smoothing parameter, and the cross-validated undersmoothing ratio.

mod spline;
mod undersmooth;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::DayRecord;
use crate::quadrature::{log_space, DEFAULT_QUAD_POINTS};

pub use spline::{curve_l2_norm, fit_spline, PriceDemandCurve, SplineFit, MIN_DISTINCT_KNOTS};
pub use undersmooth::{undersmoothing_cv, undersmoothing_cv_exact, UndersmoothingReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    pub quad_points: usize,
    pub gcv_grid_size: usize,
    pub ratio_grid: Vec<f64>,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            quad_points: DEFAULT_QUAD_POINTS,
            gcv_grid_size: 50,
            ratio_grid: default_ratio_grid(),
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quad_points < 2 {
            return Err(Error::InvalidArgument("quad_points must be >= 2".into()));
        }
        if self.gcv_grid_size == 0 {
            return Err(Error::InvalidArgument("gcv_grid_size must be >= 1".into()));
        }
        if self.ratio_grid.is_empty() || self.ratio_grid.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::InvalidArgument(
                "ratio_grid values must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// `{0.1, 0.2, ..., 1.0}`.
pub fn default_ratio_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Outcome of GCV selection for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub day_index: u32,
    pub b_opt: f64,
    pub gcv_score: f64,
    pub residual_sse: f64,
}

/// Scale-aware GCV grid: `size` log-spaced values over
/// `[1e-4, 1e4] * range(u)^3 / n`.
pub fn default_gcv_grid(pairs: &[(f64, f64)], size: usize) -> Result<Vec<f64>> {
    let (lo, hi) = pairs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &(u, _)| {
            (l.min(u), h.max(u))
        });
    if pairs.is_empty() || !(hi > lo) {
        return Err(Error::InsufficientData {
            what: "demand range for GCV grid",
            needed: 2,
            got: pairs.len().min(1),
        });
    }
    let scale = (hi - lo).powi(3) / pairs.len() as f64;
    Ok(log_space(1e-4 * scale, 1e4 * scale, size.max(1)))
}

/// Fits every grid value and returns the GCV-minimizing fit. Ties (up to
/// rounding) go to the smaller `b`.
pub fn select_and_fit(
    pairs: &[(f64, f64)],
    b_grid: &[f64],
) -> Result<(SplineFit, SmoothingReport)> {
    if b_grid.is_empty() {
        return Err(Error::InvalidArgument(
            "empty smoothing-parameter grid".into(),
        ));
    }
    let mut grid = b_grid.to_vec();
    if grid.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
        return Err(Error::InvalidArgument(
            "smoothing-parameter grid values must be finite and >= 0".into(),
        ));
    }
    grid.sort_by(f64::total_cmp);
    let y_scale = pairs.iter().map(|(_, y)| y * y).sum::<f64>() / pairs.len().max(1) as f64;
    let abs_tol = 1e-14 * y_scale;
    let mut best: Option<(SplineFit, f64)> = None;
    for &b in &grid {
        let fit = fit_spline(pairs, b)?;
        let score = fit.gcv();
        if !score.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((_, s)) => score < *s - abs_tol - 1e-10 * s.abs(),
        };
        if better {
            best = Some((fit, score));
        }
    }
    let (fit, score) =
        best.ok_or_else(|| Error::Numerical("all GCV scores are non-finite".into()))?;
    let report = SmoothingReport {
        day_index: 0,
        b_opt: fit.curve.smoothing_param(),
        gcv_score: score,
        residual_sse: fit.sse,
    };
    Ok((fit, report))
}

/// GCV selection over `b_grid`.
pub fn gcv_select(pairs: &[(f64, f64)], b_grid: &[f64]) -> Result<SmoothingReport> {
    select_and_fit(pairs, b_grid).map(|(_, r)| r)
}

/// Spline fit of one day's valid pairs.
pub fn fit_day(day: &DayRecord, b: f64, quad_points: usize) -> Result<PriceDemandCurve> {
    let mut curve = fit_spline(&day.valid_pairs(), b)?
        .curve
        .with_quad_points(quad_points);
    curve.day_index = day.day_index;
    Ok(curve)
}

/// GCV fit of one day's valid pairs with the default grid.
pub fn fit_day_gcv(
    day: &DayRecord,
    cfg: &SmoothingConfig,
) -> Result<(PriceDemandCurve, SmoothingReport)> {
    let pairs = day.valid_pairs();
    let grid = default_gcv_grid(&pairs, cfg.gcv_grid_size)?;
    let (fit, mut report) = select_and_fit(&pairs, &grid)?;
    let mut curve = fit.curve.with_quad_points(cfg.quad_points);
    curve.day_index = day.day_index;
    report.day_index = day.day_index;
    Ok((curve, report))
}

/// GCV fits for all fit-eligible days, in input order. Days whose fit fails
/// are skipped with a warning.
pub fn fit_days_gcv(
    days: &[&DayRecord],
    cfg: &SmoothingConfig,
) -> Vec<(PriceDemandCurve, SmoothingReport)> {
    days.par_iter()
        .map(|d| (d.day_index, fit_day_gcv(d, cfg)))
        .collect::<Vec<_>>()
        .into_iter()
        .filter_map(|(idx, r)| match r {
            Ok(v) => Some(v),
            Err(e) => {
                warn!("day {idx}: spline fit skipped ({e})");
                None
            }
        })
        .collect()
}

/// Refits each day at `ratio * b_opt`. `days` and `reports` must align.
pub fn fit_days_scaled(
    days: &[&DayRecord],
    reports: &[SmoothingReport],
    ratio: f64,
    quad_points: usize,
) -> Result<Vec<PriceDemandCurve>> {
    if days.len() != reports.len() {
        return Err(Error::InvalidArgument(
            "days and smoothing reports differ in length".into(),
        ));
    }
    days.par_iter()
        .zip(reports.par_iter())
        .map(|(d, r)| fit_day(d, ratio * r.b_opt, quad_points))
        .collect()
}
