//! The estimation pipeline from a dataset to a fitted factor model.

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::{
    bandwidth_cv, basis_from_eigenpairs, compute_scores_skipping, day_products,
    default_bandwidth_grid, eigenpairs, smooth_products, standardize_curves, varimax_rotate,
    Bandwidth, BandwidthCv, BasisSystem, CovarianceSurface, FpcaConfig, ScoreMatrix,
};
use crate::ingest::{Dataset, DayRecord, Domain};
use crate::quadrature::Grid;
use crate::smoothing::{
    fit_days_gcv, fit_days_scaled, undersmoothing_cv, PriceDemandCurve, SmoothingConfig,
    SmoothingReport, UndersmoothingReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub smoothing: SmoothingConfig,
    pub fpca: FpcaConfig,
    /// Fixed number of factors; selected by AIC up to `k_max` when absent.
    pub k: Option<usize>,
    pub k_max: usize,
    /// Fixed undersmoothing ratio; cross-validated when absent.
    pub undersmoothing_ratio: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            smoothing: SmoothingConfig::default(),
            fpca: FpcaConfig::default(),
            k: None,
            k_max: 3,
            undersmoothing_ratio: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.smoothing.validate()?;
        self.fpca.validate()?;
        if self.k == Some(0) || self.k_max == 0 {
            return Err(Error::InvalidArgument(
                "number of factors must be >= 1".into(),
            ));
        }
        if let Some(r) = self.undersmoothing_ratio {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "undersmoothing ratio must lie in (0, 1], got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// GCV-smoothed curves of the fit-eligible days of a sample.
#[derive(Debug, Clone)]
pub struct SmoothedSample {
    pub days: Vec<DayRecord>,
    pub hat: Vec<PriceDemandCurve>,
    pub reports: Vec<SmoothingReport>,
    pub span: Domain,
    pub quad_points: usize,
}

impl SmoothedSample {
    pub fn new(ds: &Dataset, cfg: &SmoothingConfig) -> Result<Self> {
        let eligible: Vec<&DayRecord> = ds.eligible_days().collect();
        let fits = fit_days_gcv(&eligible, cfg);
        let mut days = Vec::with_capacity(fits.len());
        let mut hat = Vec::with_capacity(fits.len());
        let mut reports = Vec::with_capacity(fits.len());
        for (curve, report) in fits {
            let day = ds.day(curve.day_index).expect("fitted day exists").clone();
            days.push(day);
            hat.push(curve);
            reports.push(report);
        }
        let span = hat
            .iter()
            .map(|c| c.domain())
            .reduce(|a, b| a.union(b))
            .ok_or(Error::InsufficientData {
                what: "fit-eligible days",
                needed: 2,
                got: 0,
            })?;
        Ok(Self {
            days,
            hat,
            reports,
            span,
            quad_points: cfg.quad_points,
        })
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn day_refs(&self) -> Vec<&DayRecord> {
        self.days.iter().collect()
    }

    pub fn grid(&self, n: usize) -> Result<Grid> {
        Grid::new(self.span.lo, self.span.hi, n)
    }

    /// Curves refit at `ratio * b_opt`.
    pub fn tilde_curves(&self, ratio: f64) -> Result<Vec<PriceDemandCurve>> {
        if ratio == 1.0 {
            return Ok(self.hat.clone());
        }
        fit_days_scaled(&self.day_refs(), &self.reports, ratio, self.quad_points)
    }
}

/// Bandwidth from the configuration, cross-validated on the GCV-smoothed
/// standardized curves when not fixed.
pub fn resolve_bandwidth(
    sample: &SmoothedSample,
    cfg: &FpcaConfig,
) -> Result<(f64, Option<BandwidthCv>)> {
    match cfg.cov_bandwidth {
        Bandwidth::Fixed(h) => Ok((h, None)),
        Bandwidth::Cv => {
            let std = standardize_curves(&sample.hat, &sample.hat);
            let products = day_products(&std, &sample.day_refs())?;
            let grid = sample.grid(cfg.grid_n)?;
            let cv = bandwidth_cv(
                &products,
                &grid,
                &default_bandwidth_grid(sample.span, cfg.bandwidth_grid_size),
            )?;
            info!(
                "covariance bandwidth {:.4} selected by cross-validation",
                cv.bandwidth
            );
            Ok((cv.bandwidth, Some(cv)))
        }
    }
}

/// A fitted factor model for one choice of `K` and undersmoothing ratio.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub k: usize,
    pub ratio: f64,
    pub bandwidth: f64,
    pub surface: CovarianceSurface,
    /// Unrotated eigenfunctions.
    pub eigen_basis: BasisSystem,
    /// The basis used for scores and forecasts (rotated when configured).
    pub basis: BasisSystem,
    pub scores: ScoreMatrix,
    pub skipped_days: Vec<u32>,
    /// Squared residuals of observed prices against the rebuilt curves.
    pub sse: f64,
    pub n_obs: usize,
    pub aic: f64,
}

/// Pipeline at fixed `K`, ratio and bandwidth.
pub fn fit_fixed(
    sample: &SmoothedSample,
    k: usize,
    ratio: f64,
    bandwidth: f64,
    cfg: &FpcaConfig,
) -> Result<FittedModel> {
    let tilde = sample.tilde_curves(ratio)?;
    let std = standardize_curves(&sample.hat, &tilde);
    let products = day_products(&std, &sample.day_refs())?;
    let grid = sample.grid(cfg.grid_n)?;
    let surface = smooth_products(&products, &grid, bandwidth)?;
    let (values, functions) = eigenpairs(&surface);
    let eigen_basis = basis_from_eigenpairs(&grid, &values, &functions, k)?;
    let basis = if cfg.varimax {
        varimax_rotate(&eigen_basis)
    } else {
        eigen_basis.clone()
    };
    let (scores, skipped_days) =
        compute_scores_skipping(&basis, &sample.hat, &sample.day_refs(), cfg.score_mode)?;
    let (sse, n_obs) = residual_sse(&basis, &scores, sample);
    let aic = aic(sse, n_obs, k, scores.len());
    Ok(FittedModel {
        k,
        ratio,
        bandwidth,
        surface,
        eigen_basis,
        basis,
        scores,
        skipped_days,
        sse,
        n_obs,
        aic,
    })
}

fn residual_sse(
    basis: &BasisSystem,
    scores: &ScoreMatrix,
    sample: &SmoothedSample,
) -> (f64, usize) {
    let mut sse = 0.0;
    let mut n = 0;
    for (d, beta) in scores.day_index.iter().zip(&scores.scores) {
        let Ok(pos) = sample.days.binary_search_by_key(d, |r| r.day_index) else {
            continue;
        };
        for (u, y) in sample.days[pos].valid_pairs() {
            let f = basis.evaluate_clamped(u);
            let fit: f64 = f.iter().zip(beta).map(|(a, b)| a * b).sum();
            sse += (y - fit).powi(2);
            n += 1;
        }
    }
    (sse, n)
}

/// `N log(SSE / N) + 2 K T`.
fn aic(sse: f64, n_obs: usize, k: usize, n_days: usize) -> f64 {
    let n = n_obs as f64;
    n * (sse / n).ln() + 2.0 * (k * n_days) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionRow {
    pub k: usize,
    pub ratio: f64,
    pub aic: f64,
    pub delta_aic: f64,
    pub cum_var: f64,
    pub sse: f64,
    pub n_obs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub bandwidth: f64,
    pub selected_k: usize,
    pub rows: Vec<DimensionRow>,
    pub undersmoothing: Vec<UndersmoothingReport>,
}

impl DimensionReport {
    /// `K,ratio,delta_aic,cum_var,aic` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,ratio,delta_aic,cum_var,aic\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.k, r.ratio, r.delta_aic, r.cum_var, r.aic
            ));
        }
        s
    }
}

fn ratios_for(
    sample: &SmoothedSample,
    ks: &[usize],
    bandwidth: f64,
    cfg: &ModelConfig,
) -> Result<(Vec<f64>, Vec<UndersmoothingReport>)> {
    match cfg.undersmoothing_ratio {
        Some(r) => Ok((vec![r; ks.len()], Vec::new())),
        None => {
            let reports = undersmoothing_cv(
                sample,
                ks,
                &cfg.smoothing.ratio_grid,
                bandwidth,
                cfg.fpca.grid_n,
            )?;
            Ok((reports.iter().map(|r| r.ratio).collect(), reports))
        }
    }
}

/// Fits `K = 1..=k_max` on a smoothed sample and picks the AIC minimizer.
/// The fitted models are returned in order of `K`.
pub fn select_dimension_sample(
    sample: &SmoothedSample,
    k_max: usize,
    bandwidth: f64,
    cfg: &ModelConfig,
) -> Result<(DimensionReport, Vec<FittedModel>)> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be >= 1".into()));
    }
    let ks: Vec<usize> = (1..=k_max).collect();
    let (ratios, undersmoothing) = ratios_for(sample, &ks, bandwidth, cfg)?;
    let mut models = Vec::new();
    for (&k, &r) in ks.iter().zip(&ratios) {
        match fit_fixed(sample, k, r, bandwidth, &cfg.fpca) {
            Ok(m) => models.push(m),
            Err(Error::RankDeficient { rank, .. }) if k > 1 => {
                warn!("K = {k} exceeds the usable rank {rank}; stopping dimension search");
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let best = models.iter().map(|m| m.aic).fold(f64::INFINITY, f64::min);
    let rows: Vec<DimensionRow> = models
        .iter()
        .map(|m| DimensionRow {
            k: m.k,
            ratio: m.ratio,
            aic: m.aic,
            delta_aic: m.aic - best,
            cum_var: m.eigen_basis.cumulative_share(),
            sse: m.sse,
            n_obs: m.n_obs,
        })
        .collect();
    let selected_k = rows
        .iter()
        .min_by(|a, b| a.aic.total_cmp(&b.aic))
        .map(|r| r.k)
        .unwrap_or(1);
    Ok((
        DimensionReport {
            bandwidth,
            selected_k,
            rows,
            undersmoothing,
        },
        models,
    ))
}

/// AIC-based choice of `K <= k_max` with the full table.
pub fn select_dimension(
    ds: &Dataset,
    k_max: usize,
    cfg: &ModelConfig,
) -> Result<(usize, DimensionReport)> {
    let sample = SmoothedSample::new(ds, &cfg.smoothing)?;
    let (h, _) = resolve_bandwidth(&sample, &cfg.fpca)?;
    let (report, _) = select_dimension_sample(&sample, k_max, h, cfg)?;
    Ok((report.selected_k, report))
}

/// Cross-validated undersmoothing ratio for `k` factors.
pub fn undersmoothing_ratio(
    ds: &Dataset,
    k: usize,
    cfg: &ModelConfig,
) -> Result<UndersmoothingReport> {
    let sample = SmoothedSample::new(ds, &cfg.smoothing)?;
    let (h, _) = resolve_bandwidth(&sample, &cfg.fpca)?;
    let mut reports =
        undersmoothing_cv(&sample, &[k], &cfg.smoothing.ratio_grid, h, cfg.fpca.grid_n)?;
    Ok(reports.remove(0))
}

/// Everything produced by [`fit_model`].
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub sample: SmoothedSample,
    pub model: FittedModel,
    pub bandwidth_cv: Option<BandwidthCv>,
    pub dimension: Option<DimensionReport>,
}

/// Full pipeline; `K` fixed by the configuration or selected by AIC.
pub fn fit_model(ds: &Dataset, cfg: &ModelConfig) -> Result<ModelFit> {
    cfg.validate()?;
    let sample = SmoothedSample::new(ds, &cfg.smoothing)?;
    let (h, bandwidth_cv) = resolve_bandwidth(&sample, &cfg.fpca)?;
    match cfg.k {
        Some(k) => {
            let (ratios, _) = ratios_for(&sample, &[k], h, cfg)?;
            let model = fit_fixed(&sample, k, ratios[0], h, &cfg.fpca)?;
            Ok(ModelFit {
                sample,
                model,
                bandwidth_cv,
                dimension: None,
            })
        }
        None => {
            let (report, models) = select_dimension_sample(&sample, cfg.k_max, h, cfg)?;
            let model = models
                .into_iter()
                .find(|m| m.k == report.selected_k)
                .expect("selected model exists");
            Ok(ModelFit {
                sample,
                model,
                bandwidth_cv,
                dimension: Some(report),
            })
        }
    }
}

/// `r2[p][q][k]`: R^2 of eigenfunction `k` of subset `p` regressed on the
/// span of subset `q`'s eigenfunctions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanReport {
    pub subsets: Vec<(u32, u32)>,
    pub r2: Vec<Vec<Vec<f64>>>,
}

/// Uncentered R^2 of `target` on the span of `regressors`, all sampled at
/// `points`.
pub(crate) fn span_r2(
    target: &BasisSystem,
    k: usize,
    regressors: &BasisSystem,
    points: &[f64],
) -> Result<f64> {
    let m = points.len();
    let kq = regressors.k();
    let x = DMatrix::from_fn(m, kq, |i, j| {
        regressors
            .grid
            .interpolate_clamped(&regressors.functions[j], points[i])
    });
    let y = DVector::from_iterator(
        m,
        points
            .iter()
            .map(|&u| target.grid.interpolate_clamped(&target.functions[k], u)),
    );
    let svd = x.clone().svd(true, true);
    let beta = svd
        .solve(&y, 1e-12)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let resid = &y - &x * beta;
    let sst = y.norm_squared();
    Ok(if sst > 0.0 {
        1.0 - resid.norm_squared() / sst
    } else {
        1.0
    })
}

/// Fits a basis on each index range and cross-regresses the unrotated
/// eigenfunctions on each other over the common part of the grids.
pub fn validate_subset_span(
    ds: &Dataset,
    subsets: &[(u32, u32)],
    k: usize,
    cfg: &ModelConfig,
) -> Result<SpanReport> {
    let mut cfg = cfg.clone();
    cfg.k = Some(k);
    let bases: Vec<BasisSystem> = subsets
        .iter()
        .map(|&(lo, hi)| fit_model(&ds.index_range(lo, hi), &cfg).map(|f| f.model.eigen_basis))
        .collect::<Result<_>>()?;
    let mut r2 = Vec::with_capacity(bases.len());
    for p in &bases {
        let mut row = Vec::with_capacity(bases.len());
        for q in &bases {
            let lo = p.grid.lo().max(q.grid.lo());
            let hi = p.grid.hi().min(q.grid.hi());
            if !(hi > lo) {
                return Err(Error::InvalidArgument(
                    "subset demand spans do not overlap".into(),
                ));
            }
            let points = Grid::new(lo, hi, 201)?.points();
            row.push(
                (0..k)
                    .map(|j| span_r2(p, j, q, &points))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        r2.push(row);
    }
    Ok(SpanReport {
        subsets: subsets.to_vec(),
        r2,
    })
}
