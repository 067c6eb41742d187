//! Rolling-origin forecast study: the learning sample grows by one day
//! after each round of forecasts for every configured horizon.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    fit_ar, fit_mr, forecast_ar, forecast_mr, Aggregate, AggregateSeries, ArConfig, MrConfig,
};
use crate::error::{Error, Result};
use crate::evaluate::{interval_score, rmse, trimmed_mean};
use crate::forecast::{
    fit_sarima_from, forecast_demand, forecast_prices, forecast_scores, DemandStrategy,
    SarimaModel, SarimaOrders,
};
use crate::fpca::{
    compute_scores_skipping, fit_model, BasisSystem, CurveView, ModelConfig, ScoreMatrix,
};
use crate::ingest::{Dataset, DayRecord, Domain};
use crate::smoothing::{fit_days_gcv, PriceDemandCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ffm,
    Ar,
    Mr,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ffm => "ffm",
            ModelKind::Ar => "ar",
            ModelKind::Mr => "mr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub horizons: Vec<usize>,
    pub strategies: Vec<DemandStrategy>,
    pub level: f64,
    pub trim: f64,
    pub models: Vec<ModelKind>,
    /// Refit the basis every this many origins; 0 keeps the initial basis.
    pub basis_refit_every: usize,
    pub sarima_orders: SarimaOrders,
    pub ar: ArConfig,
    pub mr: MrConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            horizons: (1..=20).collect(),
            strategies: vec![DemandStrategy::Persistence, DemandStrategy::Ideal],
            level: 0.95,
            trim: 0.05,
            models: vec![ModelKind::Ffm, ModelKind::Ar, ModelKind::Mr],
            basis_refit_every: 1,
            sarima_orders: SarimaOrders::default(),
            ar: ArConfig::default(),
            mr: MrConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.iter().any(|&h| !(1..=365).contains(&h)) {
            return Err(Error::InvalidArgument(
                "horizons must be a non-empty subset of 1..=365".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.trim) {
            return Err(Error::InvalidArgument(format!(
                "trim must lie in [0, 0.5), got {}",
                self.trim
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidArgument("no models configured".into()));
        }
        if self.models.contains(&ModelKind::Ffm) && self.strategies.is_empty() {
            return Err(Error::InvalidArgument(
                "the factor model needs at least one demand strategy".into(),
            ));
        }
        self.sarima_orders.validate()
    }

    fn max_horizon(&self) -> usize {
        *self.horizons.iter().max().unwrap()
    }
}

/// One forecast of one model from one origin for one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginRecord {
    pub model: ModelKind,
    /// `None` for the demand-free baselines.
    pub strategy: Option<DemandStrategy>,
    pub origin: u32,
    pub horizon: usize,
    pub peak_forecast: Option<f64>,
    pub base_forecast: Option<f64>,
    pub peak_actual: Option<f64>,
    pub base_actual: Option<f64>,
    /// `(hour, forecast, lo, hi, actual)` for the observed hours.
    pub hourly: Vec<(u8, f64, f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: ModelKind,
    /// `peak`, `base` or `hourly`.
    pub aggregate: String,
    /// Demand strategy, `none` for the baselines.
    pub strategy: String,
    pub horizon: usize,
    pub metric: String,
    pub value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub rows: Vec<ReportRow>,
    /// Origins whose target day exists, per horizon.
    pub n_origins: BTreeMap<usize, usize>,
    pub records: Vec<OriginRecord>,
}

impl EvaluationReport {
    /// `model,aggregate,strategy,horizon,metric,value,n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,aggregate,strategy,horizon,metric,value,n\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.model.as_str(),
                r.aggregate,
                r.strategy,
                r.horizon,
                r.metric,
                r.value,
                r.n
            ));
        }
        out
    }

    pub fn value(
        &self,
        model: ModelKind,
        aggregate: &str,
        strategy: &str,
        horizon: usize,
        metric: &str,
    ) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| {
                r.model == model
                    && r.aggregate == aggregate
                    && r.strategy == strategy
                    && r.horizon == horizon
                    && r.metric == metric
            })
            .map(|r| r.value)
    }
}

/// A fitted curve restricted to the part of its domain inside the basis grid.
struct ClippedCurve<'a> {
    curve: &'a PriceDemandCurve,
    domain: Domain,
}

impl CurveView for ClippedCurve<'_> {
    fn day_index(&self) -> u32 {
        self.curve.day_index
    }

    fn domain(&self) -> Domain {
        self.domain
    }

    fn value(&self, u: f64) -> Result<f64> {
        self.curve.evaluate(u)
    }

    fn norm(&self) -> f64 {
        self.curve.l2_norm()
    }
}

/// Scores of `days` in `basis` from their GCV curves, clipped to the grid.
fn out_of_sample_scores(
    basis: &BasisSystem,
    days: &[&DayRecord],
    model_cfg: &ModelConfig,
) -> Result<ScoreMatrix> {
    let fits = fit_days_gcv(days, &model_cfg.smoothing);
    let (lo, hi) = (basis.grid.lo(), basis.grid.hi());
    let mut views = Vec::with_capacity(fits.len());
    for (curve, _) in &fits {
        let d = curve.domain();
        let clipped = Domain {
            lo: d.lo.max(lo),
            hi: d.hi.min(hi),
        };
        if clipped.lo >= clipped.hi {
            warn!(
                "day {}: domain outside the basis span, no score",
                curve.day_index
            );
            continue;
        }
        if clipped != d {
            warn!(
                "day {}: domain clipped to the basis span for scoring",
                curve.day_index
            );
        }
        views.push(ClippedCurve {
            curve,
            domain: clipped,
        });
    }
    let refs: Vec<&DayRecord> = views
        .iter()
        .map(|v| *days.iter().find(|d| d.day_index == v.day_index()).unwrap())
        .collect();
    Ok(compute_scores_skipping(basis, &views, &refs, model_cfg.fpca.score_mode)?.0)
}

fn merge_scores(a: &ScoreMatrix, b: &ScoreMatrix) -> ScoreMatrix {
    let mut rows: BTreeMap<u32, (Vec<f64>, f64)> = BTreeMap::new();
    for m in [a, b] {
        for ((d, s), n) in m.day_index.iter().zip(&m.scores).zip(&m.curve_norms) {
            rows.insert(*d, (s.clone(), *n));
        }
    }
    let mut out = ScoreMatrix {
        day_index: Vec::with_capacity(rows.len()),
        scores: Vec::with_capacity(rows.len()),
        curve_norms: Vec::with_capacity(rows.len()),
    };
    for (d, (s, n)) in rows {
        out.day_index.push(d);
        out.scores.push(s);
        out.curve_norms.push(n);
    }
    out
}

fn day_has_outlier(day: &DayRecord) -> bool {
    day.observations.iter().any(|o| o.is_outlier)
}

struct Context<'a> {
    full: &'a Dataset,
    origins: Vec<u32>,
    actual: AggregateSeries,
    cfg: &'a StudyConfig,
}

impl Context<'_> {
    fn target_exists(&self, origin: u32, h: usize) -> bool {
        self.full.day(origin + h as u32).is_some()
    }

    fn actuals(&self, target: u32) -> (Option<f64>, Option<f64>) {
        (
            self.actual.value_at(target, Aggregate::Peak),
            self.actual.value_at(target, Aggregate::Base),
        )
    }
}

fn ffm_records(ctx: &Context, model_cfg: &ModelConfig) -> Result<Vec<OriginRecord>> {
    let cfg = ctx.cfg;
    let block = if cfg.basis_refit_every == 0 {
        ctx.origins.len()
    } else {
        cfg.basis_refit_every
    };
    let first_day = ctx.full.first_index().expect("non-empty dataset");
    let max_h = cfg.max_horizon();
    let mut fit_cfg = model_cfg.clone();
    let mut previous: Option<Vec<SarimaModel>> = None;
    let mut records = Vec::new();
    let (mut n_fits, mut n_boundary) = (0usize, 0usize);
    for chunk in ctx.origins.chunks(block) {
        let start = chunk[0];
        let end = *chunk.last().unwrap();
        let learning = ctx.full.filter_days(|d| d.day_index <= start);
        let fit = fit_model(&learning, &fit_cfg)?;
        info!("basis fitted at origin {start}: K = {}", fit.model.k);
        fit_cfg.k = Some(fit.model.k);
        let basis = &fit.model.basis;
        let later: Vec<&DayRecord> = ctx
            .full
            .days
            .iter()
            .filter(|d| d.day_index > start && d.day_index <= end && d.is_fit_eligible())
            .collect();
        let scores = merge_scores(
            &fit.model.scores,
            &out_of_sample_scores(basis, &later, model_cfg)?,
        );
        for &origin in chunk {
            let history: Vec<Vec<Option<f64>>> = (0..scores.k())
                .map(|k| scores.series(k, first_day, origin))
                .collect();
            let models: Vec<SarimaModel> = history
                .par_iter()
                .enumerate()
                .map(|(k, h)| {
                    let warm = previous.as_ref().and_then(|p| p.get(k));
                    fit_sarima_from(h, &cfg.sarima_orders, warm)
                })
                .collect::<Result<_>>()?;
            n_fits += models.len();
            n_boundary += models.iter().filter(|m| m.near_boundary()).count();
            let score_fc = forecast_scores(&models, &history, max_h, cfg.level)?;
            previous = Some(models);
            for &strategy in &cfg.strategies {
                for &h in &cfg.horizons {
                    if !ctx.target_exists(origin, h) {
                        continue;
                    }
                    let demand = match forecast_demand(ctx.full, origin, h, strategy) {
                        Ok(d) => d,
                        Err(e) => {
                            warn!("origin {origin}, horizon {h}, {strategy}: no demand forecast ({e})");
                            continue;
                        }
                    };
                    let r = forecast_prices(basis, &score_fc[h - 1], &demand, strategy, origin)?;
                    let target = origin + h as u32;
                    let day = ctx.full.day(target).unwrap();
                    let hourly = r
                        .hourly
                        .iter()
                        .filter_map(|f| {
                            day.price(f.hour)
                                .map(|a| (f.hour, f.price_forecast, f.lo, f.hi, a))
                        })
                        .collect();
                    let (peak_actual, base_actual) = ctx.actuals(target);
                    records.push(OriginRecord {
                        model: ModelKind::Ffm,
                        strategy: Some(strategy),
                        origin,
                        horizon: h,
                        peak_forecast: r.peakload_log,
                        base_forecast: r.baseload_log,
                        peak_actual,
                        base_actual,
                        hourly,
                    });
                }
            }
        }
    }
    if n_boundary > 0 {
        warn!("{n_boundary} of {n_fits} score model fits are at or near the MA invertibility boundary");
    }
    Ok(records)
}

fn baseline_records(
    ctx: &Context,
    learn: &AggregateSeries,
    kind: ModelKind,
) -> Result<Vec<OriginRecord>> {
    let cfg = ctx.cfg;
    let max_h = cfg.max_horizon();
    let unoccupied = AtomicUsize::new(0);
    let per_origin: Vec<Result<Vec<OriginRecord>>> = ctx
        .origins
        .par_iter()
        .map(|&origin| {
            let sample = learn.up_to(origin);
            let last_day = *sample.day_index.last().ok_or(Error::InsufficientData {
                what: "aggregate observations before the origin",
                needed: 1,
                got: 0,
            })?;
            let steps_to = |h: usize| (origin + h as u32 - last_day) as usize;
            let mut paths: BTreeMap<Aggregate, Vec<f64>> = BTreeMap::new();
            for agg in [Aggregate::Peak, Aggregate::Base] {
                let y = sample.values(agg);
                let steps = steps_to(max_h);
                let path = match kind {
                    ModelKind::Ar => {
                        let m = fit_ar(y, &sample.dates, &cfg.ar)?;
                        let dates: Vec<_> = (1..=steps as u32)
                            .map(|s| {
                                ctx.full
                                    .date_of(last_day + s)
                                    .expect("date after a recorded day")
                            })
                            .collect();
                        forecast_ar(&m, *y.last().unwrap(), &dates)
                    }
                    ModelKind::Mr => {
                        let fit = fit_mr(y, &cfg.mr)?;
                        if fit.spike_unoccupied {
                            unoccupied.fetch_add(1, Ordering::Relaxed);
                        }
                        forecast_mr(&fit.model, y, steps)?
                    }
                    ModelKind::Ffm => unreachable!("factor model handled separately"),
                };
                paths.insert(agg, path);
            }
            Ok(cfg
                .horizons
                .iter()
                .filter(|&&h| ctx.target_exists(origin, h))
                .map(|&h| {
                    let (peak_actual, base_actual) = ctx.actuals(origin + h as u32);
                    let s = steps_to(h) - 1;
                    OriginRecord {
                        model: kind,
                        strategy: None,
                        origin,
                        horizon: h,
                        peak_forecast: Some(paths[&Aggregate::Peak][s]),
                        base_forecast: Some(paths[&Aggregate::Base][s]),
                        peak_actual,
                        base_actual,
                        hourly: Vec::new(),
                    }
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in per_origin {
        out.extend(r?);
    }
    let n = unoccupied.into_inner();
    if n > 0 {
        warn!("{n} regime-switching fits left the spike regime essentially unoccupied");
    }
    Ok(out)
}

/// Pooled interval-score mean, trimmed mean and empirical coverage.
pub fn pooled_interval_metrics(
    hourly: &[(f64, f64, f64)],
    alpha: f64,
    trim: f64,
) -> Result<(f64, f64, f64)> {
    let scores: Vec<f64> = hourly
        .iter()
        .map(|&(lo, hi, a)| interval_score(lo, hi, a, alpha))
        .collect::<Result<_>>()?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let covered = hourly
        .iter()
        .filter(|&&(lo, hi, a)| a >= lo && a <= hi)
        .count();
    Ok((
        mean,
        trimmed_mean(&scores, trim)?,
        covered as f64 / hourly.len() as f64,
    ))
}

fn summarize(records: &[OriginRecord], cfg: &StudyConfig) -> Result<Vec<ReportRow>> {
    let mut groups: BTreeMap<(ModelKind, String, usize), Vec<&OriginRecord>> = BTreeMap::new();
    for r in records {
        let strategy = r.strategy.map_or("none".to_string(), |s| s.to_string());
        groups
            .entry((r.model, strategy, r.horizon))
            .or_default()
            .push(r);
    }
    let mut rows = Vec::new();
    for ((model, strategy, horizon), recs) in groups {
        for (agg, pick) in [
            (
                Aggregate::Peak,
                (|r: &OriginRecord| r.peak_forecast.zip(r.peak_actual))
                    as fn(&OriginRecord) -> Option<(f64, f64)>,
            ),
            (Aggregate::Base, |r: &OriginRecord| {
                r.base_forecast.zip(r.base_actual)
            }),
        ] {
            let pairs: Vec<(f64, f64)> = recs.iter().filter_map(|r| pick(r)).collect();
            if pairs.is_empty() {
                continue;
            }
            let (f, a): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            rows.push(ReportRow {
                model,
                aggregate: agg.to_string(),
                strategy: strategy.clone(),
                horizon,
                metric: "rmse".into(),
                value: rmse(&f, &a)?,
                n: f.len(),
            });
        }
        let hourly: Vec<(f64, f64, f64)> = recs
            .iter()
            .flat_map(|r| r.hourly.iter().map(|&(_, _, lo, hi, a)| (lo, hi, a)))
            .collect();
        if !hourly.is_empty() {
            let (mean, trimmed, coverage) =
                pooled_interval_metrics(&hourly, 1.0 - cfg.level, cfg.trim)?;
            let point: (Vec<f64>, Vec<f64>) = recs
                .iter()
                .flat_map(|r| r.hourly.iter().map(|&(_, f, _, _, a)| (f, a)))
                .unzip();
            for (metric, value) in [
                ("interval_score_mean", mean),
                ("interval_score_trimmed", trimmed),
                ("coverage", coverage),
                ("rmse", rmse(&point.0, &point.1)?),
            ] {
                rows.push(ReportRow {
                    model,
                    aggregate: "hourly".into(),
                    strategy: strategy.clone(),
                    horizon,
                    metric: metric.into(),
                    value,
                    n: hourly.len(),
                });
            }
        }
    }
    Ok(rows)
}

/// Forecasts from every recorded origin `learning_end..` of `full`; the
/// learning sample at origin `o` is every day up to `o`.
pub fn rolling_forecast_study(
    full: &Dataset,
    learning_end: u32,
    model_cfg: &ModelConfig,
    cfg: &StudyConfig,
) -> Result<EvaluationReport> {
    cfg.validate()?;
    model_cfg.validate()?;
    let last = full
        .last_index()
        .ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
    let min_h = *cfg.horizons.iter().min().unwrap() as u32;
    let origins: Vec<u32> = full
        .days
        .iter()
        .map(|d| d.day_index)
        .filter(|&d| d >= learning_end && d + min_h <= last)
        .collect();
    if origins.is_empty() {
        return Err(Error::InsufficientData {
            what: "forecast origins",
            needed: 1,
            got: 0,
        });
    }
    let ctx = Context {
        full,
        origins,
        actual: AggregateSeries::from_dataset(full),
        cfg,
    };
    let mut n_origins = BTreeMap::new();
    for &h in &cfg.horizons {
        n_origins.insert(
            h,
            ctx.origins
                .iter()
                .filter(|&&o| ctx.target_exists(o, h))
                .count(),
        );
    }
    let mut records = Vec::new();
    let mut models = cfg.models.clone();
    models.sort();
    models.dedup();
    let learn = AggregateSeries::from_dataset(&full.filter_days(|d| !day_has_outlier(d)));
    for kind in models {
        let r = match kind {
            ModelKind::Ffm => ffm_records(&ctx, model_cfg)?,
            _ => baseline_records(&ctx, &learn, kind)?,
        };
        records.extend(r);
    }
    let rows = summarize(&records, cfg)?;
    Ok(EvaluationReport {
        schema_version: crate::SCHEMA_VERSION,
        rows,
        n_origins,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_metrics_match_direct_computation() {
        let hourly = vec![(0.0, 2.0, 1.0), (0.0, 2.0, 3.0), (1.0, 1.5, 0.0)];
        let (mean, trimmed, cov) = pooled_interval_metrics(&hourly, 0.05, 0.0).unwrap();
        assert!((mean - (2.0 + 42.0 + 40.5) / 3.0).abs() < 1e-12);
        assert_eq!(mean, trimmed);
        assert!((cov - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(StudyConfig::default().validate().is_ok());
        assert!(StudyConfig {
            horizons: vec![0],
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(StudyConfig {
            trim: 0.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(StudyConfig {
            models: vec![],
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
