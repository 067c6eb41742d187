//! One function per subcommand. Each reads its inputs, runs the pipeline
//! and writes artifacts plus a `config.toml` snapshot into the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ffm::baselines::{fit_ar, fit_mr, Aggregate, AggregateSeries};
use ffm::evaluate::{
    granger_test, rolling_forecast_study, score_ratio_series, stationarity_hook, EvaluationReport,
    ModelKind,
};
use ffm::forecast::{forecasts_to_csv, DemandStrategy, Forecaster};
use ffm::fpca::{fit_model, validate_subset_span, BasisSystem, ScoreMatrix};
use ffm::ingest::{load_dataset, read_holidays, split_learning_forecast, Dataset, DatasetFiles};
use ffm::smoothing::PriceDemandCurve;
use ffm::SCHEMA_VERSION;
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::selfcheck;

pub const CURVES_FILE: &str = "curves.json";
pub const BASIS_FILE: &str = "basis.json";
pub const EIGEN_BASIS_FILE: &str = "eigen_basis.json";
pub const SCORES_FILE: &str = "scores.json";

#[derive(Serialize, Deserialize)]
struct CurvesFile {
    schema_version: u32,
    curves: Vec<PriceDemandCurve>,
}

#[derive(Serialize)]
struct FitSummary {
    schema_version: u32,
    k: usize,
    undersmoothing_ratio: f64,
    bandwidth: f64,
    aic: f64,
    sse: f64,
    n_obs: usize,
    n_days: usize,
    skipped_days: Vec<u32>,
}

#[derive(Serialize)]
struct BaselineFile<'a, M: Serialize> {
    schema_version: u32,
    aggregate: Aggregate,
    model: &'a M,
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    ffm::Error::Io {
        path: path.to_path_buf(),
        source,
    }
    .into()
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Compute(format!("{}: {e}", path.display())))?;
    write_text(path, &text)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn check_schema(path: &Path, found: u32) -> Result<(), CliError> {
    if found != SCHEMA_VERSION {
        return Err(CliError::Input(format!(
            "{}: {}",
            path.display(),
            ffm::Error::SchemaVersion {
                expected: SCHEMA_VERSION,
                found
            }
        )));
    }
    Ok(())
}

fn write_snapshot(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    write_text(&out.join("config.toml"), &cfg.to_toml()?)
}

pub fn read_basis(path: &Path) -> Result<BasisSystem, CliError> {
    let b: BasisSystem = read_json(path)?;
    check_schema(path, b.schema_version)?;
    Ok(b)
}

pub fn read_scores(path: &Path) -> Result<ScoreMatrix, CliError> {
    read_json(path)
}

pub fn load_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let d = &cfg.data;
    let defaults = d.dir.as_deref().map(DatasetFiles::in_dir);
    let pick = |explicit: &Option<PathBuf>,
                default: Option<&PathBuf>,
                what: &str|
     -> Result<PathBuf, CliError> {
        explicit
            .clone()
            .or_else(|| default.cloned())
            .ok_or_else(|| CliError::Input(format!("no {what} file: set data.dir or data.{what}")))
    };
    let prices = pick(&d.prices, defaults.as_ref().map(|f| &f.prices), "prices")?;
    let demand = pick(&d.demand, defaults.as_ref().map(|f| &f.demand), "demand")?;
    let holidays = match (&d.holidays, &defaults) {
        (Some(p), _) => read_holidays(p)?,
        (None, Some(f)) if f.holidays.exists() => read_holidays(&f.holidays)?,
        _ => Default::default(),
    };
    let ds = load_dataset(&prices, &demand, d.wind.as_deref(), &holidays, &cfg.ingest)?;
    info!("loaded {} days from {}", ds.len(), prices.display());
    Ok(ds)
}

/// Index of the last day before `forecast_start`.
fn last_learning_day(ds: &Dataset, forecast_start: NaiveDate) -> Result<u32, CliError> {
    ds.days
        .iter()
        .rev()
        .find(|d| d.calendar_date < forecast_start)
        .map(|d| d.day_index)
        .ok_or_else(|| CliError::Input(format!("no learning days before {forecast_start}")))
}

fn learning_sample(cfg: &RunConfig, ds: Dataset) -> Result<Dataset, CliError> {
    match cfg.data.forecast_start {
        Some(date) => {
            let (learn, _) = split_learning_forecast(&ds, date)?;
            if learn.is_empty() {
                return Err(CliError::Input(format!("no learning days before {date}")));
            }
            Ok(learn)
        }
        None => Ok(ds),
    }
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let mut gen = cfg.simulate.generator.clone();
    gen.seed = cfg.seed;
    let (ds, truth) = gen.generate(cfg.simulate.days)?;
    ffm::ingest::write_dataset(&ds, out)?;
    write_json(&out.join("truth.json"), &truth)?;
    write_snapshot(cfg, out)
}

pub fn fit(cfg: &RunConfig, out: &Path, baselines: &[ModelKind]) -> Result<(), CliError> {
    let learn = learning_sample(cfg, load_data(cfg)?)?;
    let fit = fit_model(&learn, &cfg.model)?;
    let m = &fit.model;
    write_json(
        &out.join(CURVES_FILE),
        &CurvesFile {
            schema_version: SCHEMA_VERSION,
            curves: fit.sample.hat.clone(),
        },
    )?;
    write_json(&out.join(BASIS_FILE), &m.basis)?;
    write_json(&out.join(EIGEN_BASIS_FILE), &m.eigen_basis)?;
    write_json(&out.join(SCORES_FILE), &m.scores)?;
    write_json(
        &out.join("fit_summary.json"),
        &FitSummary {
            schema_version: SCHEMA_VERSION,
            k: m.k,
            undersmoothing_ratio: m.ratio,
            bandwidth: m.bandwidth,
            aic: m.aic,
            sse: m.sse,
            n_obs: m.n_obs,
            n_days: m.scores.len(),
            skipped_days: m.skipped_days.clone(),
        },
    )?;
    match &fit.dimension {
        Some(d) => write_text(&out.join("dimension.csv"), &d.to_csv())?,
        None => info!("K fixed at {}; no dimension table", m.k),
    }
    if let (Some(&first), Some(&last)) = (m.scores.day_index.first(), m.scores.day_index.last()) {
        for k in 0..m.k {
            let series: Vec<f64> = m
                .scores
                .series(k, first, last)
                .into_iter()
                .flatten()
                .collect();
            match stationarity_hook(&series) {
                Ok(s) => write_text(
                    &out.join(format!("stationarity_{}.csv", k + 1)),
                    &s.to_csv(),
                )?,
                Err(e) => warn!("factor {}: no stationarity export ({e})", k + 1),
            }
        }
    }
    if !baselines.is_empty() {
        let clean = learn.filter_days(|d| !d.observations.iter().any(|o| o.is_outlier));
        let series = AggregateSeries::from_dataset(&clean);
        for &kind in baselines {
            for agg in [Aggregate::Peak, Aggregate::Base] {
                let path = out.join(format!("{}_{agg}.json", kind.as_str()));
                match kind {
                    ModelKind::Ar => {
                        let model = fit_ar(series.values(agg), &series.dates, &cfg.study.ar)?;
                        write_json(
                            &path,
                            &BaselineFile {
                                schema_version: SCHEMA_VERSION,
                                aggregate: agg,
                                model: &model,
                            },
                        )?;
                    }
                    ModelKind::Mr => {
                        let mut mr = cfg.study.mr;
                        mr.seed = cfg.seed;
                        let fit = fit_mr(series.values(agg), &mr)?;
                        if fit.spike_unoccupied {
                            warn!("{agg}: spike regime essentially unoccupied (mean probability {:.4})", fit.spike_occupancy);
                        }
                        write_json(
                            &path,
                            &BaselineFile {
                                schema_version: SCHEMA_VERSION,
                                aggregate: agg,
                                model: &fit.model,
                            },
                        )?;
                    }
                    ModelKind::Ffm => {}
                }
            }
        }
    }
    write_snapshot(cfg, out)
}

pub fn forecast(
    cfg: &RunConfig,
    out: &Path,
    artifacts: &Path,
    origin: Option<NaiveDate>,
    strategies: &[DemandStrategy],
) -> Result<(), CliError> {
    let basis_path = artifacts.join(BASIS_FILE);
    let basis = read_basis(&basis_path)?;
    let scores = read_scores(&artifacts.join(SCORES_FILE))?;
    let ds = load_data(cfg)?;
    let first = *scores
        .day_index
        .first()
        .ok_or_else(|| CliError::Input("score artifact is empty".into()))?;
    let origin_day = match origin {
        Some(date) => {
            let day = ds
                .days
                .iter()
                .find(|d| d.calendar_date == date)
                .ok_or_else(|| {
                    CliError::Input(format!("origin {date} is not a day of the dataset"))
                })?;
            if scores.row(day.day_index).is_none() {
                return Err(CliError::Input(format!(
                    "origin {date} has no fitted scores"
                )));
            }
            day.day_index
        }
        None => *scores.day_index.last().expect("nonempty"),
    };
    let f = Forecaster::fit(
        &basis,
        &scores,
        first,
        origin_day,
        &cfg.forecast.sarima_orders,
    )?;
    let mut results = Vec::new();
    for &s in strategies {
        results.extend(f.forecast(&ds, s, &cfg.forecast)?);
    }
    write_text(&out.join("forecasts.csv"), &forecasts_to_csv(&results)?)?;
    write_json(&out.join("forecasts.json"), &results)?;
    write_snapshot(cfg, out)
}

/// Long-format series behind the error and interval-score figures.
fn figures_csv(report: &EvaluationReport) -> String {
    let mut s = String::from("figure,series,horizon,value\n");
    for (figure, metrics) in [
        ("rmse", &["rmse"][..]),
        (
            "interval_score",
            &["interval_score_mean", "interval_score_trimmed"][..],
        ),
    ] {
        for r in report
            .rows
            .iter()
            .filter(|r| metrics.contains(&r.metric.as_str()) && r.aggregate != "hourly")
        {
            let series = format!(
                "{}_{}_{}_{}",
                r.model.as_str(),
                r.strategy,
                r.aggregate,
                r.metric
            );
            s.push_str(&format!("{figure},{series},{},{}\n", r.horizon, r.value));
        }
    }
    s
}

pub fn evaluate(cfg: &RunConfig, out: &Path, self_check: bool) -> Result<(), CliError> {
    let mut outcomes = Vec::new();
    if self_check {
        outcomes.extend(selfcheck::run_suite());
    }
    let has_data = cfg.data.dir.is_some() || cfg.data.prices.is_some();
    if has_data || !self_check {
        let ds = load_data(cfg)?;
        let start = cfg.data.forecast_start.ok_or_else(|| {
            CliError::Input("evaluate needs data.forecast_start (or --forecast-start)".into())
        })?;
        let learning_end = last_learning_day(&ds, start)?;
        if !ds.days.iter().any(|d| d.calendar_date >= start) {
            return Err(CliError::Input(format!(
                "forecast sample is empty: no days on or after {start}"
            )));
        }
        let mut study = cfg.study.clone();
        study.mr.seed = cfg.seed;
        let report = rolling_forecast_study(&ds, learning_end, &cfg.model, &study)?;
        write_text(&out.join("report.csv"), &report.to_csv())?;
        write_text(&out.join("figures.csv"), &figures_csv(&report))?;
        let mut n = String::from("horizon,n_origins\n");
        for (h, c) in &report.n_origins {
            n.push_str(&format!("{h},{c}\n"));
        }
        write_text(&out.join("n_origins.csv"), &n)?;
        if self_check {
            outcomes.extend(selfcheck::check_report(&ds, learning_end, &study, &report));
        }
    }
    write_snapshot(cfg, out)?;
    if self_check {
        for o in &outcomes {
            println!(
                "{} {}: {}",
                if o.passed { "PASS" } else { "FAIL" },
                o.name,
                o.detail
            );
        }
        let failed = outcomes.iter().filter(|o| !o.passed).count();
        if failed > 0 {
            return Err(CliError::SelfCheck {
                failed,
                total: outcomes.len(),
            });
        }
    }
    Ok(())
}

/// `lo:hi` as day indices or ISO dates.
pub fn parse_subset(ds: &Dataset, text: &str) -> Result<(u32, u32), CliError> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| CliError::Input(format!("subset {text:?} is not of the form lo:hi")))?;
    if let (Ok(lo), Ok(hi)) = (a.parse::<u32>(), b.parse::<u32>()) {
        return Ok((lo, hi));
    }
    let date = |s: &str| {
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map_err(|e| CliError::Input(format!("subset bound {s:?}: {e}")))
    };
    let (da, db) = (date(a)?, date(b)?);
    let idx: Vec<u32> = ds
        .days
        .iter()
        .filter(|d| d.calendar_date >= da && d.calendar_date <= db)
        .map(|d| d.day_index)
        .collect();
    match (idx.first(), idx.last()) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Err(CliError::Input(format!("subset {text} contains no days"))),
    }
}

pub fn validate_span(
    cfg: &RunConfig,
    out: &Path,
    subsets: &[String],
    k: usize,
) -> Result<(), CliError> {
    let ds = load_data(cfg)?;
    let ranges = subsets
        .iter()
        .map(|s| parse_subset(&ds, s))
        .collect::<Result<Vec<_>, _>>()?;
    if ranges.len() < 2 {
        return Err(CliError::Input(
            "validate-span needs at least two subsets".into(),
        ));
    }
    let report = validate_subset_span(&ds, &ranges, k, &cfg.model)?;
    let mut csv = String::from("target_lo,target_hi,span_lo,span_hi,factor,r2\n");
    for (p, row) in report.r2.iter().enumerate() {
        for (q, r2) in row.iter().enumerate() {
            for (j, v) in r2.iter().enumerate() {
                let (a, b) = report.subsets[p];
                let (c, d) = report.subsets[q];
                csv.push_str(&format!("{a},{b},{c},{d},{},{v}\n", j + 1));
            }
        }
    }
    write_text(&out.join("span.csv"), &csv)?;
    write_json(&out.join("span.json"), &report)?;
    write_snapshot(cfg, out)
}

/// Exogenous values keyed by day index; a `date` key column needs the dataset.
fn read_exogenous(cfg: &RunConfig, path: &Path) -> Result<BTreeMap<u32, f64>, CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .clone();
    let by_date = match header.get(0) {
        Some("day_index") => None,
        Some("date") => {
            let ds = load_data(cfg)?;
            Some(
                ds.days
                    .iter()
                    .map(|d| (d.calendar_date, d.day_index))
                    .collect::<BTreeMap<_, _>>(),
            )
        }
        _ => {
            return Err(CliError::Input(format!(
                "{}: first column must be day_index or date",
                path.display()
            )))
        }
    };
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::Input(format!("{}:{line}: {e}", path.display())))?;
        let bad = |m: String| CliError::Input(format!("{}:{line}: {m}", path.display()));
        let (key, value) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| bad(format!("value {value:?}: {e}")))?;
        let day = match &by_date {
            None => key
                .trim()
                .parse::<u32>()
                .map_err(|e| bad(format!("day index {key:?}: {e}")))?,
            Some(map) => {
                let date = NaiveDate::parse_from_str(key.trim(), "%Y-%m-%d")
                    .map_err(|e| bad(format!("date {key:?}: {e}")))?;
                match map.get(&date) {
                    Some(&d) => d,
                    None => continue,
                }
            }
        };
        out.insert(day, value);
    }
    Ok(out)
}

pub fn granger(
    cfg: &RunConfig,
    out: &Path,
    scores_path: &Path,
    exog_path: &Path,
    max_lag: usize,
) -> Result<(), CliError> {
    let scores = read_scores(scores_path)?;
    let ratios = score_ratio_series(&scores)?;
    let exog = read_exogenous(cfg, exog_path)?;
    let mut ratio_csv = String::from("day_index,ratio\n");
    let (mut target, mut x) = (Vec::new(), Vec::new());
    for (d, r) in &ratios {
        ratio_csv.push_str(&format!(
            "{d},{}\n",
            r.map_or("NA".to_string(), |v| v.to_string())
        ));
        if let (Some(r), Some(&e)) = (r, exog.get(d)) {
            target.push(*r);
            x.push(e);
        }
    }
    info!(
        "{} days with both a score ratio and an exogenous value",
        target.len()
    );
    let results = granger_test(&target, &x, max_lag)?;
    let mut csv = String::from("lag,f_stat,p_value,df_num,df_den\n");
    for r in &results {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.lag, r.f_stat, r.p_value, r.df_num, r.df_den
        ));
    }
    write_text(&out.join("score_ratio.csv"), &ratio_csv)?;
    write_text(&out.join("granger.csv"), &csv)?;
    write_snapshot(cfg, out)
}
