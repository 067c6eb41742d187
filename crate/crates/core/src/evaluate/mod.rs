//! Forecast metrics, the rolling-origin study, Granger causality tests
//! and score-ratio diagnostics.

mod study;

pub use study::{
    pooled_interval_metrics, rolling_forecast_study, EvaluationReport, ModelKind, OriginRecord,
    ReportRow, StudyConfig,
};

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::fpca::ScoreMatrix;
use crate::ols::{collinear_terms, least_squares};

/// Scores with `|beta_2|` below this give no ratio.
pub const MIN_RATIO_DENOMINATOR: f64 = 1e-10;

pub fn rmse(forecasts: &[f64], actuals: &[f64]) -> Result<f64> {
    if forecasts.len() != actuals.len() || forecasts.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            forecasts.len(),
            actuals.len()
        )));
    }
    let ss: f64 = forecasts
        .iter()
        .zip(actuals)
        .map(|(f, a)| (f - a).powi(2))
        .sum();
    Ok((ss / forecasts.len() as f64).sqrt())
}

/// Width plus `2 / alpha` times the exceedance outside `[lo, hi]`.
pub fn interval_score(lo: f64, hi: f64, actual: f64, alpha: f64) -> Result<f64> {
    if lo > hi {
        return Err(Error::InvalidArgument(format!(
            "interval lower bound {lo} exceeds upper bound {hi}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let mut s = hi - lo;
    if actual < lo {
        s += 2.0 / alpha * (lo - actual);
    }
    if actual > hi {
        s += 2.0 / alpha * (actual - hi);
    }
    Ok(s)
}

/// Mean after dropping `floor(trim * n)` values at each end.
pub fn trimmed_mean(values: &[f64], trim: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(
            "trimmed mean of an empty set".into(),
        ));
    }
    if !(0.0..0.5).contains(&trim) {
        return Err(Error::InvalidArgument(format!(
            "trim must lie in [0, 0.5), got {trim}"
        )));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let cut = (trim * v.len() as f64).floor() as usize;
    let kept = &v[cut..v.len() - cut];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerResult {
    pub lag: usize,
    pub f_stat: f64,
    pub p_value: f64,
    pub df_num: usize,
    pub df_den: usize,
}

fn lagged_design(
    target: &[f64],
    exog: Option<&[f64]>,
    lag: usize,
    start: usize,
) -> (DMatrix<f64>, Vec<String>) {
    let n = target.len() - start;
    let cols = 1 + lag + exog.map_or(0, |_| lag);
    let mut names = vec!["const".to_string()];
    names.extend((1..=lag).map(|l| format!("target_lag{l}")));
    if exog.is_some() {
        names.extend((1..=lag).map(|l| format!("exog_lag{l}")));
    }
    let x = DMatrix::from_fn(n, cols, |i, j| {
        let t = start + i;
        match j {
            0 => 1.0,
            j if j <= lag => target[t - j],
            j => exog.unwrap()[t - (j - lag)],
        }
    });
    (x, names)
}

/// F tests of "exogenous lags add nothing" for `L = 1..=max_lag`, each on
/// the sample `t >= L`.
pub fn granger_test(
    target: &[f64],
    exogenous: &[f64],
    max_lag: usize,
) -> Result<Vec<GrangerResult>> {
    if target.len() != exogenous.len() {
        return Err(Error::InvalidArgument(format!(
            "series lengths differ: {} and {}",
            target.len(),
            exogenous.len()
        )));
    }
    if max_lag == 0 || target.len() <= 3 * max_lag {
        return Err(Error::InsufficientData {
            what: "observations for the Granger test (more than 3 * max_lag)",
            needed: 3 * max_lag + 1,
            got: target.len(),
        });
    }
    (1..=max_lag)
        .map(|lag| {
            let y = DVector::from_column_slice(&target[lag..]);
            let (xr, _) = lagged_design(target, None, lag, lag);
            let (xu, names) = lagged_design(target, Some(exogenous), lag, lag);
            let collinear = collinear_terms(&xu, &names);
            if !collinear.is_empty() {
                return Err(Error::SingularDesign { terms: collinear });
            }
            let (_, rss_r) = least_squares(&xr, &y)?;
            let (_, rss_u) = least_squares(&xu, &y)?;
            let df_den = y.len() - xu.ncols();
            let f_stat = ((rss_r - rss_u) / lag as f64) / (rss_u / df_den as f64);
            let dist = FisherSnedecor::new(lag as f64, df_den as f64)
                .map_err(|e| Error::Numerical(e.to_string()))?;
            Ok(GrangerResult {
                lag,
                f_stat,
                p_value: dist.sf(f_stat.max(0.0)),
                df_num: lag,
                df_den,
            })
        })
        .collect()
}

/// `beta_1 / beta_2` per scored day.
pub fn score_ratio_series(scores: &ScoreMatrix) -> Result<Vec<(u32, Option<f64>)>> {
    if scores.k() < 2 {
        return Err(Error::InvalidArgument(format!(
            "score ratios need K >= 2, got {}",
            scores.k()
        )));
    }
    Ok(scores
        .day_index
        .iter()
        .zip(&scores.scores)
        .map(|(&d, b)| {
            (
                d,
                (b[1].abs() >= MIN_RATIO_DENOMINATOR).then(|| b[0] / b[1]),
            )
        })
        .collect())
}

pub const MIN_STATIONARITY_LEN: usize = 50;

/// Levels and differences for external unit-root and stationarity tests,
/// with lag-1 autocorrelations as a quick diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaritySummary {
    pub n: usize,
    pub lag1_acf_level: Option<f64>,
    pub lag1_acf_diff: Option<f64>,
    pub zero_variance: bool,
    pub level: Vec<f64>,
    pub diff1: Vec<f64>,
    /// `y_t - y_{t-5}`.
    pub diff5: Vec<f64>,
}

impl StationaritySummary {
    /// Long-format `t,level,diff1,diff5`; differences are empty where undefined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,level,diff1,diff5\n");
        for t in 0..self.n {
            let d1 = if t >= 1 {
                self.diff1[t - 1].to_string()
            } else {
                String::new()
            };
            let d5 = if t >= 5 {
                self.diff5[t - 5].to_string()
            } else {
                String::new()
            };
            out.push_str(&format!("{t},{},{d1},{d5}\n", self.level[t]));
        }
        out
    }
}

fn lag1_acf(x: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let c0: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if !(c0 > 0.0) {
        return None;
    }
    let c1: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    Some(c1 / c0)
}

pub fn stationarity_hook(series: &[f64]) -> Result<StationaritySummary> {
    if series.len() < MIN_STATIONARITY_LEN {
        return Err(Error::InsufficientData {
            what: "observations for the stationarity export",
            needed: MIN_STATIONARITY_LEN,
            got: series.len(),
        });
    }
    let diff1: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let diff5: Vec<f64> = (5..series.len())
        .map(|t| series[t] - series[t - 5])
        .collect();
    let lag1_acf_level = lag1_acf(series);
    if lag1_acf_level.is_none() {
        warn!("stationarity export: series has zero variance");
    }
    Ok(StationaritySummary {
        n: series.len(),
        lag1_acf_level,
        lag1_acf_diff: lag1_acf(&diff1),
        zero_variance: lag1_acf_level.is_none(),
        level: series.to_vec(),
        diff1,
        diff5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[3.0, 4.0, 7.0], &[1.0, 2.0, 5.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 5.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn interval_score_examples() {
        assert_eq!(interval_score(0.0, 2.0, 1.0, 0.05).unwrap(), 2.0);
        assert!((interval_score(0.0, 2.0, 3.0, 0.05).unwrap() - 42.0).abs() < 1e-12);
        assert_eq!(interval_score(0.0, 2.0, 2.0, 0.05).unwrap(), 2.0);
        assert!(interval_score(3.0, 2.0, 2.0, 0.05).is_err());
    }

    #[test]
    fn trimmed_mean_examples() {
        assert_eq!(
            trimmed_mean(&[1.0, 2.0, 3.0, 4.0, 100.0], 0.2).unwrap(),
            3.0
        );
        assert_eq!(trimmed_mean(&[1.0, 2.0, 6.0], 0.0).unwrap(), 3.0);
        assert_eq!(trimmed_mean(&[4.5; 7], 0.3).unwrap(), 4.5);
        assert!(trimmed_mean(&[], 0.1).is_err());
    }

    #[test]
    fn granger_detects_lagged_driver() {
        let x = noise(500, 1);
        let e = noise(500, 2);
        let y: Vec<f64> = (0..500)
            .map(|t| if t > 0 { 0.8 * x[t - 1] } else { 0.0 } + e[t])
            .collect();
        let r = granger_test(&y, &x, 3).unwrap();
        assert!(r[0].p_value < 0.001);
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn granger_identical_series_is_singular() {
        let x = noise(300, 3);
        assert!(matches!(
            granger_test(&x, &x, 2),
            Err(Error::SingularDesign { .. })
        ));
    }

    #[test]
    fn granger_matches_restricted_unrestricted_formula() {
        // Lag 1 by hand with explicit regressions.
        let x = noise(200, 5);
        let y = noise(200, 6);
        let r = granger_test(&y, &x, 1).unwrap();
        let ols = |cols: &[&dyn Fn(usize) -> f64]| -> f64 {
            let n = 199;
            let xm = DMatrix::from_fn(n, cols.len(), |i, j| cols[j](i + 1));
            let yv = DVector::from_fn(n, |i, _| y[i + 1]);
            let b = (xm.transpose() * &xm).try_inverse().unwrap() * xm.transpose() * &yv;
            (yv - xm * b).norm_squared()
        };
        let one = |_: usize| 1.0;
        let ylag = |t: usize| y[t - 1];
        let xlag = |t: usize| x[t - 1];
        let rr = ols(&[&one, &ylag]);
        let ru = ols(&[&one, &ylag, &xlag]);
        let f = (rr - ru) / (ru / 196.0);
        assert!((r[0].f_stat - f).abs() < 1e-9 * f.max(1.0));
        assert_eq!(r[0].df_den, 196);
    }

    #[test]
    fn score_ratios() {
        let m = ScoreMatrix {
            day_index: vec![1, 2],
            scores: vec![vec![4.0, 2.0], vec![1.0, 0.0]],
            curve_norms: vec![1.0, 1.0],
        };
        assert_eq!(
            score_ratio_series(&m).unwrap(),
            vec![(1, Some(2.0)), (2, None)]
        );
    }

    #[test]
    fn stationarity_diagnostics() {
        let e = noise(2000, 7);
        let mut acc = 0.0;
        let rw: Vec<f64> = e
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        assert!(stationarity_hook(&rw).unwrap().lag1_acf_level.unwrap() > 0.95);
        assert!(stationarity_hook(&e).unwrap().lag1_acf_level.unwrap().abs() < 0.1);
        let c = stationarity_hook(&[2.0; 60]).unwrap();
        assert!(c.zero_variance);
        assert_eq!(c.to_csv().lines().count(), 61);
    }

    proptest! {
        #[test]
        fn rmse_is_scale_equivariant(f in proptest::collection::vec(-100.0f64..100.0, 1..30), c in -10.0f64..10.0, shift in -5.0f64..5.0) {
            let a: Vec<f64> = f.iter().map(|v| v + shift).collect();
            let fs: Vec<f64> = f.iter().map(|v| c * v).collect();
            let as_: Vec<f64> = a.iter().map(|v| c * v).collect();
            let lhs = rmse(&fs, &as_).unwrap();
            let rhs = c.abs() * rmse(&f, &a).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        }

        #[test]
        fn interval_score_is_width_inside(lo in -10.0f64..10.0, w in 0.0f64..5.0, s in 0.0f64..1.0, alpha in 0.01f64..0.5, out in 0.001f64..5.0) {
            let hi = lo + w;
            let inside = interval_score(lo, hi, lo + s * w, alpha).unwrap();
            prop_assert!((inside - w).abs() < 1e-12);
            prop_assert!(interval_score(lo, hi, hi + out, alpha).unwrap() > inside);
            prop_assert!(interval_score(lo, hi, lo - out, alpha).unwrap() > inside);
        }
    }
}
