//! Common basis estimation on random domains: standardized curves, the
//! smoothed covariance surface, its eigenfunctions, rotation, scores, and
//! the full estimation pipeline with dimension selection.

mod basis;
mod covariance;
mod model;
mod scores;

use std::collections::HashMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::DayRecord;
use crate::smoothing::PriceDemandCurve;

pub(crate) use basis::{basis_from_eigenpairs, eigenpairs};
pub use basis::{eigendecompose, varimax_rotate, varimax_rotation, BasisSystem};
pub(crate) use covariance::MomentSums;
pub use covariance::{
    bandwidth_cv, default_bandwidth_grid, smooth_products, BandwidthCv, CovarianceSurface,
    DayProducts, MIN_KERNEL_MASS,
};
pub use model::{
    fit_fixed, fit_model, resolve_bandwidth, select_dimension, select_dimension_sample,
    undersmoothing_ratio, validate_subset_span, DimensionReport, DimensionRow, FittedModel,
    ModelConfig, ModelFit, SmoothedSample, SpanReport,
};
pub use scores::{
    compute_scores, compute_scores_skipping, day_scores, reconstruct_curve, BasisCurve, CurveView,
    ScoreMatrix, ScoreMode, MAX_GRAM_CONDITION,
};

/// Norm below which a curve cannot be standardized.
pub const MIN_CURVE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Epanechnikov,
}

/// Covariance smoothing bandwidth: cross-validated or fixed (MW).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    #[default]
    Cv,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BandwidthRepr {
    Name(String),
    Value(f64),
}

impl Serialize for Bandwidth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bandwidth::Cv => s.serialize_str("cv"),
            Bandwidth::Fixed(h) => s.serialize_f64(*h),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match BandwidthRepr::deserialize(d)? {
            BandwidthRepr::Name(s) if s == "cv" => Ok(Bandwidth::Cv),
            BandwidthRepr::Name(s) => Err(D::Error::custom(format!(
                "unknown bandwidth rule '{s}', expected \"cv\" or a number"
            ))),
            BandwidthRepr::Value(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
            BandwidthRepr::Value(h) => Err(D::Error::custom(format!(
                "bandwidth must be positive, got {h}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpcaConfig {
    pub grid_n: usize,
    pub kernel: Kernel,
    pub cov_bandwidth: Bandwidth,
    pub bandwidth_grid_size: usize,
    pub score_mode: ScoreMode,
    pub varimax: bool,
}

impl Default for FpcaConfig {
    fn default() -> Self {
        Self {
            grid_n: 50,
            kernel: Kernel::Epanechnikov,
            cov_bandwidth: Bandwidth::Cv,
            bandwidth_grid_size: 10,
            score_mode: ScoreMode::Integral,
            varimax: true,
        }
    }
}

impl FpcaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 10 {
            return Err(Error::InvalidArgument(format!(
                "grid_n must be >= 10, got {}",
                self.grid_n
            )));
        }
        if self.bandwidth_grid_size == 0 {
            return Err(Error::InvalidArgument(
                "bandwidth_grid_size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// An undersmoothed curve divided by the norm of the matching
/// GCV-smoothed curve.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedCurve {
    pub curve: PriceDemandCurve,
    pub scale: f64,
}

impl StandardizedCurve {
    pub fn day_index(&self) -> u32 {
        self.curve.day_index
    }

    pub fn evaluate(&self, u: f64) -> Result<f64> {
        Ok(self.curve.evaluate(u)? / self.scale)
    }

    pub fn l2_norm(&self) -> f64 {
        self.curve.l2_norm() / self.scale
    }
}

/// Pairs each `tilde` curve with the norm of the `hat` curve of the same
/// day. Days without a hat curve or with a vanishing norm are dropped.
pub fn standardize_curves(
    hat: &[PriceDemandCurve],
    tilde: &[PriceDemandCurve],
) -> Vec<StandardizedCurve> {
    let norms: HashMap<u32, f64> = hat.iter().map(|c| (c.day_index, c.l2_norm())).collect();
    tilde
        .iter()
        .filter_map(|c| match norms.get(&c.day_index) {
            Some(&n) if n >= MIN_CURVE_NORM => Some(StandardizedCurve {
                curve: c.clone(),
                scale: n,
            }),
            Some(&n) => {
                warn!("day {}: curve norm {n:e} too small, excluded", c.day_index);
                None
            }
            None => {
                warn!("day {}: no matching smoothed curve, excluded", c.day_index);
                None
            }
        })
        .collect()
}

/// Standardized values at each day's valid observed demands.
pub fn day_products(curves: &[StandardizedCurve], days: &[&DayRecord]) -> Result<Vec<DayProducts>> {
    let by_index: HashMap<u32, &DayRecord> = days.iter().map(|d| (d.day_index, *d)).collect();
    curves
        .iter()
        .map(|c| {
            let day = by_index.get(&c.day_index()).ok_or_else(|| {
                Error::InvalidArgument(format!("no day record for curve {}", c.day_index()))
            })?;
            let demands: Vec<f64> = day.valid_pairs().into_iter().map(|p| p.0).collect();
            let values = demands
                .iter()
                .map(|&u| c.evaluate(u))
                .collect::<Result<Vec<_>>>()?;
            Ok(DayProducts {
                day_index: c.day_index(),
                demands,
                values,
            })
        })
        .collect()
}

/// Covariance surface of standardized curves on an `n`-point grid over the
/// union of their domains.
pub fn estimate_covariance_surface(
    curves: &[StandardizedCurve],
    days: &[&DayRecord],
    n: usize,
    bandwidth: Bandwidth,
    bandwidth_grid_size: usize,
) -> Result<CovarianceSurface> {
    let span = curves
        .iter()
        .map(|c| c.curve.domain())
        .reduce(|a, b| a.union(b))
        .ok_or(Error::InsufficientData {
            what: "standardized curves",
            needed: 1,
            got: 0,
        })?;
    let grid = crate::quadrature::Grid::new(span.lo, span.hi, n)?;
    let products = day_products(curves, days)?;
    let h = match bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Cv => {
            bandwidth_cv(
                &products,
                &grid,
                &default_bandwidth_grid(span, bandwidth_grid_size),
            )?
            .bandwidth
        }
    };
    smooth_products(&products, &grid, h)
}
