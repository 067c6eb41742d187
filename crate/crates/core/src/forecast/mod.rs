//! Score forecasts, demand forecasts and the plug-in hourly price forecast
//! `y_h = sum_k beta_k(l) f_k(u_h)` with conditional intervals.

mod sarima;

pub use sarima::{
    fit_sarima, fit_sarima_from, select_ma_order, OrderSelection, SarimaModel, SarimaOrders,
    MIN_SARIMA_OBS,
};

use chrono::NaiveDate;
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fpca::{reconstruct_curve, BasisCurve, BasisSystem, ScoreMatrix};
use crate::ingest::{Dataset, DayRecord, Domain};
use crate::SCHEMA_VERSION;

/// Hours entering the peakload aggregate.
pub const PEAK_HOURS: std::ops::RangeInclusive<usize> = 9..=20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub sarima_orders: SarimaOrders,
    pub level: f64,
    pub max_horizon: usize,
    /// Second-order correction of the plug-in predictor; not available.
    pub log_correction: bool,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            sarima_orders: SarimaOrders::default(),
            level: 0.95,
            max_horizon: 20,
            log_correction: false,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        self.sarima_orders.validate()?;
        check_level(self.level)?;
        if self.max_horizon == 0 {
            return Err(Error::InvalidArgument(
                "max_horizon must be at least 1".into(),
            ));
        }
        if self.log_correction {
            return Err(Error::InvalidArgument(
                "log_correction is not implemented; only the plug-in predictor is available".into(),
            ));
        }
        Ok(())
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "interval level must lie in (0, 1), got {level}"
        )))
    }
}

/// `z_{1 - alpha/2}` for a central interval of coverage `level`.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreForecast {
    pub horizon: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub level: f64,
}

impl ScoreForecast {
    pub fn k(&self) -> usize {
        self.mean.len()
    }

    /// Central interval of factor `k`.
    pub fn interval(&self, k: usize) -> (f64, f64) {
        let half = normal_quantile(self.level) * self.var[k].max(0.0).sqrt();
        (self.mean[k] - half, self.mean[k] + half)
    }
}

/// Fits one model per factor on the workday axis `first..=last`.
pub fn fit_score_models(
    scores: &ScoreMatrix,
    first: u32,
    last: u32,
    orders: &SarimaOrders,
) -> Result<Vec<SarimaModel>> {
    (0..scores.k())
        .into_par_iter()
        .map(|k| {
            let m = fit_sarima(&scores.series(k, first, last), orders)?;
            if m.near_boundary() {
                warn!(
                    "factor {}: fitted MA polynomial is at or near the invertibility boundary",
                    k + 1
                );
            }
            Ok(m)
        })
        .collect()
}

/// Forecasts for horizons `1..=max_h`; `history[k]` is factor `k`'s series.
pub fn forecast_scores(
    models: &[SarimaModel],
    history: &[Vec<Option<f64>>],
    max_h: usize,
    level: f64,
) -> Result<Vec<ScoreForecast>> {
    check_level(level)?;
    if models.len() != history.len() {
        return Err(Error::InvalidArgument(format!(
            "{} models for {} score series",
            models.len(),
            history.len()
        )));
    }
    let per_factor: Vec<Vec<(f64, f64)>> = models
        .iter()
        .zip(history)
        .map(|(m, h)| m.forecast(h, max_h))
        .collect::<Result<_>>()?;
    Ok((0..max_h)
        .map(|l| ScoreForecast {
            horizon: l + 1,
            mean: per_factor.iter().map(|f| f[l].0).collect(),
            var: per_factor.iter().map(|f| f[l].1).collect(),
            level,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandStrategy {
    /// Last learning day's demands for every horizon.
    Persistence,
    /// Realized demands of the target day.
    Ideal,
}

impl DemandStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            DemandStrategy::Persistence => "persistence",
            DemandStrategy::Ideal => "ideal",
        }
    }
}

impl std::fmt::Display for DemandStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DemandStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "persistence" => Ok(DemandStrategy::Persistence),
            "ideal" => Ok(DemandStrategy::Ideal),
            _ => Err(Error::InvalidArgument(format!(
                "unknown demand strategy {s:?}"
            ))),
        }
    }
}

/// The day's 24 demands; a missing hour takes the nearest available hour
/// (earlier hour on ties).
pub fn day_demands(day: &DayRecord) -> Result<[f64; 24]> {
    let known: Vec<(usize, f64)> = (1..=24u8)
        .filter_map(|h| day.demand(h).map(|d| (h as usize, d)))
        .collect();
    if known.is_empty() {
        return Err(Error::InsufficientData {
            what: "hourly demands on the forecast origin day",
            needed: 1,
            got: 0,
        });
    }
    let mut out = [0.0; 24];
    for h in 1..=24usize {
        let &(src, d) = known.iter().min_by_key(|(k, _)| k.abs_diff(h)).unwrap();
        if src != h {
            warn!(
                "day {}: demand for hour {h} missing, using hour {src}",
                day.day_index
            );
        }
        out[h - 1] = d;
    }
    Ok(out)
}

/// Demand forecast for day `t_l + horizon` made at origin `t_l`.
pub fn forecast_demand(
    ds: &Dataset,
    t_l: u32,
    horizon: usize,
    strategy: DemandStrategy,
) -> Result<[f64; 24]> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    match strategy {
        DemandStrategy::Persistence => {
            let day = ds.last_day_at_or_before(t_l).ok_or_else(|| {
                Error::InvalidArgument(format!("no day at or before origin {t_l}"))
            })?;
            if day.day_index != t_l {
                warn!(
                    "origin {t_l} has no record; persistence uses day {}",
                    day.day_index
                );
            }
            day_demands(day)
        }
        DemandStrategy::Ideal => {
            let target = t_l + horizon as u32;
            let day = ds.day(target).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "ideal demand forecast needs day {target}, which is not in the dataset"
                ))
            })?;
            day_demands(day)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyForecast {
    pub hour: u8,
    pub demand_forecast: f64,
    pub price_forecast: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub schema_version: u32,
    pub origin_day: u32,
    pub origin_date: Option<NaiveDate>,
    pub horizon: usize,
    pub demand_strategy: DemandStrategy,
    pub scores: ScoreForecast,
    pub hourly: Vec<HourlyForecast>,
    /// Forecast price-demand function over the forecast demand range.
    pub curve: BasisCurve,
    /// `None` when the aggregate mean is not positive.
    pub peakload_log: Option<f64>,
    pub baseload_log: Option<f64>,
}

impl ForecastResult {
    pub fn hourly_prices(&self) -> [f64; 24] {
        let mut out = [0.0; 24];
        for (o, h) in out.iter_mut().zip(&self.hourly) {
            *o = h.price_forecast;
        }
        out
    }
}

/// CSV rows `origin_date,horizon,hour,strategy,demand_fc,price_fc,lo,hi`.
pub fn forecasts_to_csv(results: &[ForecastResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| Error::Serde(e.to_string());
    w.write_record([
        "origin_date",
        "horizon",
        "hour",
        "strategy",
        "demand_fc",
        "price_fc",
        "lo",
        "hi",
    ])
    .map_err(ser)?;
    for r in results {
        let date = r
            .origin_date
            .map_or_else(|| r.origin_day.to_string(), |d| d.to_string());
        for h in &r.hourly {
            w.write_record([
                date.clone(),
                r.horizon.to_string(),
                h.hour.to_string(),
                r.demand_strategy.to_string(),
                h.demand_forecast.to_string(),
                h.price_forecast.to_string(),
                h.lo.to_string(),
                h.hi.to_string(),
            ])
            .map_err(ser)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

/// Plug-in hourly forecast with rectangle-propagated intervals.
pub fn forecast_prices(
    basis: &BasisSystem,
    score_fc: &ScoreForecast,
    demand_fc: &[f64; 24],
    strategy: DemandStrategy,
    origin_day: u32,
) -> Result<ForecastResult> {
    if score_fc.k() != basis.k() || score_fc.var.len() != basis.k() {
        return Err(Error::InvalidArgument(format!(
            "score forecast has {} factors, basis has {}",
            score_fc.k(),
            basis.k()
        )));
    }
    let (lo_span, hi_span) = (basis.grid.lo(), basis.grid.hi());
    let bounds: Vec<(f64, f64)> = (0..basis.k()).map(|k| score_fc.interval(k)).collect();
    let mut hourly = Vec::with_capacity(24);
    for (i, &u) in demand_fc.iter().enumerate() {
        let uc = u.clamp(lo_span, hi_span);
        if uc != u {
            warn!(
                "hour {}: demand forecast {u} clamped to [{lo_span}, {hi_span}]",
                i + 1
            );
        }
        let f = basis.evaluate_clamped(uc);
        let point: f64 = f.iter().zip(&score_fc.mean).map(|(f, b)| f * b).sum();
        let (mut lo, mut hi) = (0.0, 0.0);
        for (fk, &(a, b)) in f.iter().zip(&bounds) {
            lo += (a * fk).min(b * fk);
            hi += (a * fk).max(b * fk);
        }
        hourly.push(HourlyForecast {
            hour: i as u8 + 1,
            demand_forecast: uc,
            price_forecast: point,
            lo: lo.min(point),
            hi: hi.max(point),
        });
    }
    let dlo = hourly
        .iter()
        .map(|h| h.demand_forecast)
        .fold(f64::INFINITY, f64::min);
    let dhi = hourly
        .iter()
        .map(|h| h.demand_forecast)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut curve = reconstruct_curve(basis, &score_fc.mean, Domain { lo: dlo, hi: dhi })?;
    curve.day_index = origin_day + score_fc.horizon as u32;
    let (peak, base) =
        match aggregate_peak_base(&hourly.iter().map(|h| h.price_forecast).collect::<Vec<_>>()) {
            Ok((p, b)) => (Some(p), Some(b)),
            Err(e) => {
                warn!(
                    "origin {origin_day}, horizon {}: aggregates undefined ({e})",
                    score_fc.horizon
                );
                (None, None)
            }
        };
    Ok(ForecastResult {
        schema_version: SCHEMA_VERSION,
        origin_day,
        origin_date: None,
        horizon: score_fc.horizon,
        demand_strategy: strategy,
        scores: score_fc.clone(),
        hourly,
        curve,
        peakload_log: peak,
        baseload_log: base,
    })
}

/// `(log mean of hours 9..=20, log mean of hours 1..=24)`.
pub fn aggregate_peak_base(hourly_prices: &[f64]) -> Result<(f64, f64)> {
    if hourly_prices.len() != 24 || hourly_prices.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument(
            "aggregates need 24 finite hourly prices".into(),
        ));
    }
    let peak_hours = &hourly_prices[PEAK_HOURS.start() - 1..*PEAK_HOURS.end()];
    let peak = peak_hours.iter().sum::<f64>() / peak_hours.len() as f64;
    let base = hourly_prices.iter().sum::<f64>() / 24.0;
    if !(peak > 0.0 && base > 0.0) {
        return Err(Error::Numerical(format!(
            "non-positive aggregate mean (peak {peak}, base {base}); log undefined"
        )));
    }
    Ok((peak.ln(), base.ln()))
}

/// Forecasts for horizons `1..=cfg.max_horizon` from origin `t_l`, with
/// score models fit on workdays `first..=t_l`.
pub struct Forecaster<'a> {
    pub basis: &'a BasisSystem,
    pub models: Vec<SarimaModel>,
    pub history: Vec<Vec<Option<f64>>>,
    pub origin_day: u32,
}

impl<'a> Forecaster<'a> {
    pub fn fit(
        basis: &'a BasisSystem,
        scores: &ScoreMatrix,
        first: u32,
        t_l: u32,
        orders: &SarimaOrders,
    ) -> Result<Self> {
        if scores.k() != basis.k() {
            return Err(Error::InvalidArgument(format!(
                "scores have {} factors, basis has {}",
                scores.k(),
                basis.k()
            )));
        }
        Ok(Self {
            basis,
            models: fit_score_models(scores, first, t_l, orders)?,
            history: (0..scores.k())
                .map(|k| scores.series(k, first, t_l))
                .collect(),
            origin_day: t_l,
        })
    }

    /// Score models refit from `previous` as starting values.
    pub fn refit(
        basis: &'a BasisSystem,
        scores: &ScoreMatrix,
        first: u32,
        t_l: u32,
        previous: &[SarimaModel],
    ) -> Result<Self> {
        let models = previous
            .par_iter()
            .enumerate()
            .map(|(k, m)| fit_sarima_from(&scores.series(k, first, t_l), &m.orders, Some(m)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            basis,
            models,
            history: (0..scores.k())
                .map(|k| scores.series(k, first, t_l))
                .collect(),
            origin_day: t_l,
        })
    }

    pub fn score_forecasts(&self, max_h: usize, level: f64) -> Result<Vec<ScoreForecast>> {
        forecast_scores(&self.models, &self.history, max_h, level)
    }

    /// Hourly forecasts for every horizon; `full` supplies demands.
    pub fn forecast(
        &self,
        full: &Dataset,
        strategy: DemandStrategy,
        cfg: &ForecastConfig,
    ) -> Result<Vec<ForecastResult>> {
        let origin_date = full.day(self.origin_day).map(|d| d.calendar_date);
        self.score_forecasts(cfg.max_horizon, cfg.level)?
            .iter()
            .map(|sf| {
                let demand = forecast_demand(full, self.origin_day, sf.horizon, strategy)?;
                let mut r = forecast_prices(self.basis, sf, &demand, strategy, self.origin_day)?;
                r.origin_date = origin_date;
                Ok(r)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{HourlyObservation, IngestConfig};
    use crate::quadrature::Grid;
    use chrono::Duration;
    use proptest::prelude::*;

    fn constant_basis(lo: f64, hi: f64) -> BasisSystem {
        let grid = Grid::new(lo, hi, 101).unwrap();
        let c = 1.0 / (hi - lo).sqrt();
        BasisSystem {
            schema_version: SCHEMA_VERSION,
            grid,
            functions: vec![vec![c; 101]],
            eigenvalues: vec![1.0],
            variance_shares: vec![1.0],
            rotation: vec![vec![1.0]],
            total_variance: 1.0,
        }
    }

    fn two_factor_basis() -> BasisSystem {
        let grid = Grid::new(0.0, 1.0, 101).unwrap();
        let f1 = vec![1.0; 101];
        let f2: Vec<f64> = grid
            .points()
            .iter()
            .map(|x| 3f64.sqrt() * (2.0 * x - 1.0))
            .collect();
        BasisSystem {
            schema_version: SCHEMA_VERSION,
            grid,
            functions: vec![f1, f2],
            eigenvalues: vec![2.0, 1.0],
            variance_shares: vec![0.6, 0.3],
            rotation: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            total_variance: 3.3,
        }
    }

    fn observation(day_index: u32, date: NaiveDate, hour: u8, demand: f64) -> HourlyObservation {
        HourlyObservation {
            day_index,
            calendar_date: date,
            hour,
            price: 30.0 + hour as f64,
            demand,
            is_outlier: false,
            is_missing: false,
        }
    }

    fn dataset(demand: impl Fn(usize, usize) -> f64, days: usize) -> Dataset {
        let start = NaiveDate::from_ymd_opt(2006, 1, 2).unwrap();
        let mut obs = Vec::new();
        let mut date = start;
        let mut n = 0;
        while n < days {
            if crate::ingest::is_weekday(date) {
                for h in 1..=24usize {
                    obs.push(observation(n as u32 + 1, date, h as u8, demand(n, h)));
                }
                n += 1;
            }
            date += Duration::days(1);
        }
        Dataset::from_observations(obs, Default::default(), IngestConfig::default()).unwrap()
    }

    #[test]
    fn constant_factor_gives_constant_price() {
        let (a, b) = (30000.0, 80000.0);
        let basis = constant_basis(a, b);
        let sf = ScoreForecast {
            horizon: 1,
            mean: vec![10.0 * (b - a).sqrt()],
            var: vec![0.0],
            level: 0.95,
        };
        let demand = [50000.0; 24];
        let r = forecast_prices(&basis, &sf, &demand, DemandStrategy::Ideal, 0).unwrap();
        for h in &r.hourly {
            assert!((h.price_forecast - 10.0).abs() < 1e-9);
            assert_eq!(h.lo, h.price_forecast);
            assert_eq!(h.hi, h.price_forecast);
        }
        assert!((r.baseload_log.unwrap() - 10f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn peak_base_of_hour_index() {
        let p: Vec<f64> = (1..=24).map(f64::from).collect();
        let (peak, base) = aggregate_peak_base(&p).unwrap();
        assert!((peak - 14.5f64.ln()).abs() < 1e-12);
        assert!((base - 12.5f64.ln()).abs() < 1e-12);
        assert_eq!(PEAK_HOURS.count(), 12);
        let (peak, base) = aggregate_peak_base(&[7.0; 24]).unwrap();
        assert!((peak - 7f64.ln()).abs() < 1e-12 && (base - 7f64.ln()).abs() < 1e-12);
        assert!(aggregate_peak_base(&[-1.0; 24]).is_err());
    }

    #[test]
    fn demand_outside_span_is_clamped() {
        let basis = two_factor_basis();
        let sf = ScoreForecast {
            horizon: 1,
            mean: vec![1.0, 1.0],
            var: vec![0.0, 0.0],
            level: 0.95,
        };
        let mut demand = [0.5; 24];
        demand[0] = 2.0;
        let r = forecast_prices(&basis, &sf, &demand, DemandStrategy::Persistence, 0).unwrap();
        assert_eq!(r.hourly[0].demand_forecast, 1.0);
        assert!((r.hourly[0].price_forecast - (1.0 + 3f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn persistence_and_ideal_demands() {
        let ds = dataset(|d, h| 40000.0 + 100.0 * d as f64 + h as f64, 30);
        let p1 = forecast_demand(&ds, 10, 1, DemandStrategy::Persistence).unwrap();
        for l in 2..=20 {
            assert_eq!(
                forecast_demand(&ds, 10, l, DemandStrategy::Persistence).unwrap(),
                p1
            );
        }
        assert_eq!(p1[4], 40905.0);
        let i1 = forecast_demand(&ds, 10, 1, DemandStrategy::Ideal).unwrap();
        assert_eq!(i1[4], 41005.0);
        assert!(forecast_demand(&ds, 25, 10, DemandStrategy::Ideal).is_err());
        let flat = dataset(|_, h| 45000.0 + h as f64, 30);
        assert_eq!(
            forecast_demand(&flat, 5, 3, DemandStrategy::Persistence).unwrap(),
            forecast_demand(&flat, 5, 3, DemandStrategy::Ideal).unwrap()
        );
    }

    #[test]
    fn missing_hour_takes_nearest() {
        let start = NaiveDate::from_ymd_opt(2006, 1, 2).unwrap();
        let obs: Vec<_> = (1..=24u8)
            .filter(|h| *h != 5 && *h != 24)
            .map(|h| observation(1, start, h, 1000.0 * h as f64))
            .collect();
        let ds =
            Dataset::from_observations(obs, Default::default(), IngestConfig::default()).unwrap();
        let d = forecast_demand(&ds, 1, 1, DemandStrategy::Persistence).unwrap();
        assert_eq!(d[4], 4000.0);
        assert_eq!(d[23], 23000.0);
    }

    #[test]
    fn csv_has_one_row_per_hour() {
        let basis = two_factor_basis();
        let sf = ScoreForecast {
            horizon: 2,
            mean: vec![3.0, 0.5],
            var: vec![0.1, 0.2],
            level: 0.9,
        };
        let r = forecast_prices(&basis, &sf, &[0.3; 24], DemandStrategy::Ideal, 7).unwrap();
        let csv = forecasts_to_csv(std::slice::from_ref(&r)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 25);
        assert_eq!(
            lines[0],
            "origin_date,horizon,hour,strategy,demand_fc,price_fc,lo,hi"
        );
        assert!(lines[1].starts_with("7,2,1,ideal,"));
        let back: ForecastResult =
            serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn score_interval_uses_normal_quantile() {
        let sf = ScoreForecast {
            horizon: 1,
            mean: vec![1.0],
            var: vec![4.0],
            level: 0.95,
        };
        let (lo, hi) = sf.interval(0);
        assert!((hi - 1.0 - 1.959963984540054 * 2.0).abs() < 1e-9);
        assert!((1.0 - lo - 1.959963984540054 * 2.0).abs() < 1e-9);
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(ForecastConfig::default().validate().is_ok());
        assert!(ForecastConfig {
            level: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ForecastConfig {
            max_horizon: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ForecastConfig {
            log_correction: true,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn plug_in_is_linear(a in proptest::collection::vec(-50.0f64..50.0, 2), b in proptest::collection::vec(-50.0f64..50.0, 2), u in proptest::collection::vec(0.0f64..1.0, 24), c in -3.0f64..3.0) {
            let basis = two_factor_basis();
            let mut demand = [0.0; 24];
            demand.copy_from_slice(&u);
            let run = |m: Vec<f64>| {
                let sf = ScoreForecast { horizon: 1, mean: m, var: vec![0.0, 0.0], level: 0.95 };
                forecast_prices(&basis, &sf, &demand, DemandStrategy::Ideal, 0).unwrap().hourly_prices()
            };
            let (pa, pb) = (run(a.clone()), run(b.clone()));
            let pc = run(a.iter().zip(&b).map(|(x, y)| x + c * y).collect());
            for h in 0..24 {
                prop_assert!((pc[h] - (pa[h] + c * pb[h])).abs() < 1e-9 * (1.0 + pc[h].abs()));
            }
        }

        #[test]
        fn intervals_bracket_point(mean in proptest::collection::vec(-50.0f64..50.0, 2), var in proptest::collection::vec(0.0f64..20.0, 2), u in 0.0f64..1.0) {
            let basis = two_factor_basis();
            let sf = ScoreForecast { horizon: 3, mean, var, level: 0.95 };
            let r = forecast_prices(&basis, &sf, &[u; 24], DemandStrategy::Ideal, 0).unwrap();
            for h in &r.hourly {
                prop_assert!(h.lo <= h.price_forecast && h.price_forecast <= h.hi);
            }
        }
    }
}
