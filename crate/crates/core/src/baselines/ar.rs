//! `y_t = d + g_t + alpha y_{t-1} + w_t` by least squares, with `g_t` made
//! of weekday dummies and an annual sine/cosine pair.

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ols::{collinear_terms, least_squares};

pub const MIN_AR_OBS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArConfig {
    /// Tuesday to Friday dummies against Monday.
    pub weekday: bool,
    /// `sin` and `cos` of `2 pi day_of_year / 365.25`.
    pub annual: bool,
}

impl Default for ArConfig {
    fn default() -> Self {
        Self {
            weekday: true,
            annual: true,
        }
    }
}

impl ArConfig {
    pub fn none() -> Self {
        Self {
            weekday: false,
            annual: false,
        }
    }

    fn term_names(&self) -> Vec<&'static str> {
        let mut names = Vec::new();
        if self.weekday {
            names.extend(["tue", "wed", "thu", "fri"]);
        }
        if self.annual {
            names.extend(["annual_sin", "annual_cos"]);
        }
        names
    }

    fn terms(&self, date: NaiveDate) -> Vec<f64> {
        let mut out = Vec::with_capacity(6);
        if self.weekday {
            let wd = date.weekday();
            out.extend(
                [Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri]
                    .map(|w| f64::from(u8::from(wd == w))),
            );
        }
        if self.annual {
            let phase = 2.0 * std::f64::consts::PI * f64::from(date.ordinal()) / 365.25;
            out.extend([phase.sin(), phase.cos()]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub config: ArConfig,
    pub drift: f64,
    pub alpha: f64,
    pub deterministic_terms: Vec<String>,
    pub deterministic_coeffs: Vec<f64>,
    pub innovation_var: f64,
    pub n_obs: usize,
}

impl ArModel {
    /// `g_t` for a calendar date.
    pub fn deterministic(&self, date: NaiveDate) -> f64 {
        self.config
            .terms(date)
            .iter()
            .zip(&self.deterministic_coeffs)
            .map(|(x, c)| x * c)
            .sum()
    }
}

/// Least squares on consecutive pairs of `series`; `dates[t]` is the date
/// of `series[t]`.
pub fn fit_ar(series: &[f64], dates: &[NaiveDate], config: &ArConfig) -> Result<ArModel> {
    if series.len() != dates.len() {
        return Err(Error::InvalidArgument(format!(
            "{} values but {} dates",
            series.len(),
            dates.len()
        )));
    }
    if series.len() < MIN_AR_OBS {
        return Err(Error::InsufficientData {
            what: "observations for the AR baseline",
            needed: MIN_AR_OBS,
            got: series.len(),
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "AR series contains non-finite values".into(),
        ));
    }
    let det_names = config.term_names();
    let mut names: Vec<String> = vec!["drift".into(), "lag1".into()];
    names.extend(det_names.iter().map(|s| s.to_string()));
    let n = series.len() - 1;
    let p = names.len();
    let mut x = DMatrix::zeros(n, p);
    for t in 1..series.len() {
        x[(t - 1, 0)] = 1.0;
        x[(t - 1, 1)] = series[t - 1];
        for (j, v) in config.terms(dates[t]).into_iter().enumerate() {
            x[(t - 1, 2 + j)] = v;
        }
    }
    let y = DVector::from_column_slice(&series[1..]);
    let collinear = collinear_terms(&x, &names);
    if !collinear.is_empty() {
        return Err(Error::SingularDesign { terms: collinear });
    }
    let (beta, sse) = least_squares(&x, &y)?;
    let dof = n.saturating_sub(p).max(1);
    Ok(ArModel {
        config: *config,
        drift: beta[0],
        alpha: beta[1],
        deterministic_terms: det_names.iter().map(|s| s.to_string()).collect(),
        deterministic_coeffs: beta.iter().skip(2).copied().collect(),
        innovation_var: sse / dof as f64,
        n_obs: n,
    })
}

/// Iterated conditional expectations for the dates of the next steps.
pub fn forecast_ar(model: &ArModel, last_value: f64, future_dates: &[NaiveDate]) -> Vec<f64> {
    let mut y = last_value;
    future_dates
        .iter()
        .map(|&d| {
            y = model.drift + model.deterministic(d) + model.alpha * y;
            y
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::add_workdays;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2006, 1, 2).unwrap();
        (0..n as u32).map(|i| add_workdays(start, i)).collect()
    }

    fn ar_series(alpha: f64, d: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = if alpha < 1.0 { d / (1.0 - alpha) } else { 0.0 };
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                y = d + alpha * y + e;
                y
            })
            .collect()
    }

    fn model(alpha: f64, drift: f64) -> ArModel {
        ArModel {
            config: ArConfig::none(),
            drift,
            alpha,
            deterministic_terms: Vec::new(),
            deterministic_coeffs: Vec::new(),
            innovation_var: 1.0,
            n_obs: 0,
        }
    }

    #[test]
    fn recovers_ar1() {
        let y = ar_series(0.7, 1.0, 2000, 3);
        let m = fit_ar(&y, &dates(2000), &ArConfig::none()).unwrap();
        assert!((m.alpha - 0.7).abs() < 0.05, "{}", m.alpha);
        assert!((m.innovation_var - 1.0).abs() < 0.1);
    }

    #[test]
    fn white_noise_has_no_persistence() {
        let y = ar_series(0.0, 0.0, 2000, 4);
        let m = fit_ar(&y, &dates(2000), &ArConfig::default()).unwrap();
        assert!(m.alpha.abs() < 0.05, "{}", m.alpha);
    }

    #[test]
    fn recovers_weekday_effects() {
        let ds = dates(1500);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut y = 0.0;
        let series: Vec<f64> = ds
            .iter()
            .map(|d| {
                let g = if d.weekday() == Weekday::Fri {
                    -0.8
                } else {
                    0.0
                };
                let e: f64 = StandardNormal.sample(&mut rng);
                y = 0.5 + g + 0.5 * y + 0.3 * e;
                y
            })
            .collect();
        let m = fit_ar(&series, &ds, &ArConfig::default()).unwrap();
        let fri = m
            .deterministic_terms
            .iter()
            .position(|t| t == "fri")
            .unwrap();
        assert!((m.deterministic_coeffs[fri] + 0.8).abs() < 0.05);
        assert!((m.alpha - 0.5).abs() < 0.03);
    }

    #[test]
    fn constant_series_is_singular() {
        let y = vec![3.0; 200];
        match fit_ar(&y, &dates(200), &ArConfig::none()) {
            Err(Error::SingularDesign { terms }) => {
                assert_eq!(terms, vec!["lag1".to_string(), "drift".to_string()])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(matches!(
            fit_ar(&[1.0; 50], &dates(50), &ArConfig::none()),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn hand_iterations() {
        let ds = dates(300);
        assert!(forecast_ar(&model(0.0, 2.5), 7.0, &ds[..5])
            .iter()
            .all(|&v| v == 2.5));
        assert!(forecast_ar(&model(1.0, 0.0), 7.0, &ds[..5])
            .iter()
            .all(|&v| v == 7.0));
        assert_eq!(forecast_ar(&model(0.5, 1.0), 0.0, &ds[..2])[1], 1.5);
        let long = forecast_ar(&model(0.8, 1.0), -4.0, &ds[..200]);
        assert!((long[199] - 5.0).abs() < 1e-6);
    }
}
