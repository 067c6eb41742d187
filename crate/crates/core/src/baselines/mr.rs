//! Two-regime Markov switching model: a moderate AR(1) regime in the
//! previous observation and an i.i.d. spike regime, fit by maximum
//! likelihood through the Hamilton filter.

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{minimize, BfgsOptions};

pub const MIN_MR_OBS: usize = 200;

/// Mean filtered spike probability below which the spike regime counts as
/// unoccupied.
const MIN_SPIKE_OCCUPANCY: f64 = 0.02;

const M: usize = 0;
const S: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MrConfig {
    pub starts: usize,
    pub seed: u64,
}

impl Default for MrConfig {
    fn default() -> Self {
        Self { starts: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrModel {
    pub drift: f64,
    pub alpha: f64,
    pub spike_mean: f64,
    pub var_moderate: f64,
    pub var_spike: f64,
    /// `P(M -> M)`.
    pub trans_q: f64,
    /// `P(S -> S)`.
    pub trans_p: f64,
    pub loglik: f64,
    pub n_obs: usize,
}

impl MrModel {
    /// `[P(M), P(S)]` of the stationary chain.
    pub fn stationary(&self) -> [f64; 2] {
        let denom = 2.0 - self.trans_p - self.trans_q;
        if denom <= 0.0 {
            return [1.0, 0.0];
        }
        let pm = (1.0 - self.trans_p) / denom;
        [pm, 1.0 - pm]
    }

    /// Distribution of the next regime given the current one.
    fn propagate(&self, xi: [f64; 2]) -> [f64; 2] {
        let m = self.trans_q * xi[M] + (1.0 - self.trans_p) * xi[S];
        [m, 1.0 - m]
    }

    fn log_densities(&self, y: f64, y_prev: f64) -> [f64; 2] {
        let ln = |r: f64, v: f64| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + r * r / v);
        [
            ln(y - self.drift - self.alpha * y_prev, self.var_moderate),
            ln(y - self.spike_mean, self.var_spike),
        ]
    }
}

/// Filtered and one-step predicted regime probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutput {
    /// `filtered[t] = [P(M_t | y_0..y_t), P(S_t | y_0..y_t)]`; entry 0 is
    /// the stationary distribution.
    pub filtered: Vec<[f64; 2]>,
    pub predicted: Vec<[f64; 2]>,
    pub loglik: f64,
}

/// Hamilton filter conditional on the first observation.
pub fn hamilton_filter(model: &MrModel, series: &[f64]) -> FilterOutput {
    let mut xi = model.stationary();
    let mut filtered = Vec::with_capacity(series.len());
    let mut predicted = Vec::with_capacity(series.len());
    filtered.push(xi);
    predicted.push(xi);
    let mut loglik = 0.0;
    for t in 1..series.len() {
        let pred = model.propagate(xi);
        let ld = model.log_densities(series[t], series[t - 1]);
        let top = ld[M].max(ld[S]);
        let a = pred[M] * (ld[M] - top).exp();
        let b = pred[S] * (ld[S] - top).exp();
        let f = a + b;
        if !(f > 0.0) || !f.is_finite() {
            loglik = f64::NEG_INFINITY;
            xi = pred;
        } else {
            loglik += top + f.ln();
            let pm = a / f;
            xi = [pm, 1.0 - pm];
        }
        predicted.push(pred);
        filtered.push(xi);
    }
    FilterOutput {
        filtered,
        predicted,
        loglik,
    }
}

/// Kim smoother: `P(regime_t | all observations)`.
pub fn kim_smoother(model: &MrModel, out: &FilterOutput) -> Vec<[f64; 2]> {
    let n = out.filtered.len();
    let mut smoothed = vec![[0.0; 2]; n];
    if n == 0 {
        return smoothed;
    }
    smoothed[n - 1] = out.filtered[n - 1];
    // trans[i][j] = P(R_{t+1} = i | R_t = j)
    let trans = [
        [model.trans_q, 1.0 - model.trans_p],
        [1.0 - model.trans_q, model.trans_p],
    ];
    for t in (0..n - 1).rev() {
        let ratio = [0, 1].map(|i| smoothed[t + 1][i] / out.predicted[t + 1][i].max(1e-300));
        let mut s =
            [0, 1].map(|j| out.filtered[t][j] * (trans[0][j] * ratio[0] + trans[1][j] * ratio[1]));
        let total = s[M] + s[S];
        if total > 0.0 {
            s[M] /= total;
            s[S] = 1.0 - s[M];
        }
        smoothed[t] = s;
    }
    smoothed
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Unconstrained `x` to a model; the spike variance is at least the
/// moderate one.
fn model_from(x: &[f64], n_obs: usize) -> MrModel {
    let var_moderate = x[3].exp();
    MrModel {
        drift: x[0],
        alpha: x[1],
        spike_mean: x[2],
        var_moderate,
        var_spike: var_moderate * (1.0 + x[4].exp()),
        trans_q: logistic(x[5]),
        trans_p: logistic(x[6]),
        loglik: f64::NAN,
        n_obs,
    }
}

fn unconstrained_from(m: &MrModel) -> Vec<f64> {
    let clamp = |p: f64| p.clamp(1e-6, 1.0 - 1e-6);
    vec![
        m.drift,
        m.alpha,
        m.spike_mean,
        m.var_moderate.ln(),
        (m.var_spike / m.var_moderate - 1.0).max(1e-8).ln(),
        logit(clamp(m.trans_q)),
        logit(clamp(m.trans_p)),
    ]
}

/// Starting point: moderate AR(1) on the pairs below the upper decile,
/// spike regime from the upper decile.
fn base_start(series: &[f64]) -> MrModel {
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted[(0.9 * (sorted.len() - 1) as f64) as usize];
    let pairs: Vec<(f64, f64)> = series
        .windows(2)
        .filter(|w| w[1] <= cut)
        .map(|w| (w[0], w[1]))
        .collect();
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let alpha = if sxx > 0.0 {
        (sxy / sxx).clamp(-0.95, 0.95)
    } else {
        0.0
    };
    let drift = my - alpha * mx;
    let var_moderate = (pairs
        .iter()
        .map(|p| (p.1 - drift - alpha * p.0).powi(2))
        .sum::<f64>()
        / n)
        .max(1e-8);
    let top: Vec<f64> = sorted.iter().copied().filter(|&v| v > cut).collect();
    let (spike_mean, var_top) = if top.len() >= 2 {
        let m = top.iter().sum::<f64>() / top.len() as f64;
        (
            m,
            top.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (top.len() - 1) as f64,
        )
    } else {
        (sorted[sorted.len() - 1], 0.0)
    };
    MrModel {
        drift,
        alpha,
        spike_mean,
        var_moderate,
        var_spike: var_top.max(4.0 * var_moderate),
        trans_q: 0.9,
        trans_p: 0.5,
        loglik: f64::NAN,
        n_obs: series.len(),
    }
}

/// Everything produced by [`fit_mr`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrFit {
    pub model: MrModel,
    pub filtered: Vec<[f64; 2]>,
    pub smoothed: Vec<[f64; 2]>,
    /// Mean filtered spike probability.
    pub spike_occupancy: f64,
    pub spike_unoccupied: bool,
    /// Log-likelihood per start; `None` where the start failed.
    pub start_logliks: Vec<Option<f64>>,
    /// Negative mean log-likelihood after every accepted step of the
    /// winning start.
    pub trace: Vec<f64>,
}

pub fn fit_mr(series: &[f64], config: &MrConfig) -> Result<MrFit> {
    if series.len() < MIN_MR_OBS {
        return Err(Error::InsufficientData {
            what: "observations for the regime-switching baseline",
            needed: MIN_MR_OBS,
            got: series.len(),
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "regime-switching series contains non-finite values".into(),
        ));
    }
    if config.starts == 0 {
        return Err(Error::InvalidArgument(
            "at least one optimizer start is needed".into(),
        ));
    }
    let n = series.len();
    let spread = {
        let mean = series.iter().sum::<f64>() / n as f64;
        (series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    if !(spread > 0.0) {
        return Err(Error::Numerical(
            "regime-switching series is constant".into(),
        ));
    }
    let x0 = unconstrained_from(&base_start(series));
    let starts: Vec<Vec<f64>> = (0..config.starts)
        .map(|s| {
            if s == 0 {
                return x0.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(s as u64);
            let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
            let mut x = x0.clone();
            x[2] += spread * z();
            x[3] += 0.5 * z();
            x[4] += 0.5 * z();
            x[5] += z();
            x[6] += z();
            x
        })
        .collect();
    let objective = |x: &[f64]| -hamilton_filter(&model_from(x, n), series).loglik / n as f64;
    let opts = BfgsOptions::default();
    let results: Vec<Result<crate::optim::OptimResult>> = starts
        .par_iter()
        .map(|x| minimize(objective, x, &opts))
        .collect();
    let start_logliks: Vec<Option<f64>> = results
        .iter()
        .map(|r| r.as_ref().ok().map(|o| -o.f * n as f64))
        .collect();
    let mut best: Option<&crate::optim::OptimResult> = None;
    for r in results.iter().flatten() {
        if best.is_none_or(|b| r.f < b.f) {
            best = Some(r);
        }
    }
    let best = match best {
        Some(b) => b,
        None => {
            let err = results
                .into_iter()
                .filter_map(|r| r.err())
                .min_by(|a, b| match (a, b) {
                    (
                        Error::NoConvergence { objective: fa, .. },
                        Error::NoConvergence { objective: fb, .. },
                    ) => fa.total_cmp(fb),
                    _ => std::cmp::Ordering::Equal,
                })
                .expect("at least one start");
            return Err(err);
        }
    };
    let mut model = model_from(&best.x, n);
    let out = hamilton_filter(&model, series);
    model.loglik = out.loglik;
    let smoothed = kim_smoother(&model, &out);
    let spike_occupancy = out.filtered.iter().map(|f| f[S]).sum::<f64>() / n as f64;
    let spike_unoccupied = spike_occupancy < MIN_SPIKE_OCCUPANCY;
    if spike_unoccupied {
        debug!("spike regime is essentially unoccupied (mean filtered probability {spike_occupancy:.4})");
    }
    Ok(MrFit {
        model,
        filtered: out.filtered,
        smoothed,
        spike_occupancy,
        spike_unoccupied,
        start_logliks,
        trace: best.trace.clone(),
    })
}

/// Collapsed forecasts for steps `1..=horizon` after the end of `history`.
pub fn forecast_mr(model: &MrModel, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let last = *history.last().ok_or_else(|| {
        Error::InvalidArgument("regime-switching forecast needs a history".into())
    })?;
    let xi = *hamilton_filter(model, history).filtered.last().unwrap();
    Ok(collapsed_path(model, xi, last, horizon))
}

/// Per-step mixture of the regime means under the propagated regime
/// distribution.
pub(crate) fn collapsed_path(
    model: &MrModel,
    mut xi: [f64; 2],
    last: f64,
    horizon: usize,
) -> Vec<f64> {
    let mut y = last;
    (0..horizon)
        .map(|_| {
            xi = model.propagate(xi);
            y = xi[M] * (model.drift + model.alpha * y) + xi[S] * model.spike_mean;
            y
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{generate_regime_switch, RegimeParams};
    use proptest::prelude::*;

    fn example() -> RegimeParams {
        RegimeParams {
            drift: 0.5,
            alpha: 0.6,
            spike_mean: 5.0,
            sd_moderate: 0.2,
            sd_spike: 1.0,
            q: 0.95,
            p: 0.5,
        }
    }

    fn model_of(p: &RegimeParams) -> MrModel {
        MrModel {
            drift: p.drift,
            alpha: p.alpha,
            spike_mean: p.spike_mean,
            var_moderate: p.sd_moderate.powi(2),
            var_spike: p.sd_spike.powi(2),
            trans_q: p.q,
            trans_p: p.p,
            loglik: f64::NAN,
            n_obs: 0,
        }
    }

    /// Likelihood by summing over all regime paths.
    fn brute_force_loglik(m: &MrModel, y: &[f64]) -> f64 {
        let n = y.len() - 1;
        let pi = m.stationary();
        let trans = |from: usize, to: usize| match (from, to) {
            (M, M) => m.trans_q,
            (M, S) => 1.0 - m.trans_q,
            (S, S) => m.trans_p,
            _ => 1.0 - m.trans_p,
        };
        let mut total = 0.0;
        for r0 in [M, S] {
            for path in 0..1usize << n {
                let mut prev = r0;
                let mut p = pi[r0];
                for t in 1..=n {
                    let r = (path >> (t - 1)) & 1;
                    p *= trans(prev, r) * m.log_densities(y[t], y[t - 1])[r].exp();
                    prev = r;
                }
                total += p;
            }
        }
        total.ln()
    }

    #[test]
    fn filter_likelihood_matches_path_enumeration() {
        let p = example();
        let (y, _) = generate_regime_switch(&p, 11, 3);
        let m = model_of(&p);
        let out = hamilton_filter(&m, &y);
        assert!((out.loglik - brute_force_loglik(&m, &y)).abs() < 1e-10);
    }

    #[test]
    fn smoother_matches_path_enumeration() {
        let p = example();
        let (y, _) = generate_regime_switch(&p, 9, 5);
        let m = model_of(&p);
        let out = hamilton_filter(&m, &y);
        let sm = kim_smoother(&m, &out);
        let n = y.len() - 1;
        let pi = m.stationary();
        let trans = [[m.trans_q, 1.0 - m.trans_q], [1.0 - m.trans_p, m.trans_p]];
        let mut marg = vec![[0.0; 2]; y.len()];
        let mut total = 0.0;
        for r0 in [M, S] {
            for path in 0..1usize << n {
                let regimes: Vec<usize> = std::iter::once(r0)
                    .chain((1..=n).map(|t| (path >> (t - 1)) & 1))
                    .collect();
                let mut p = pi[r0];
                for t in 1..=n {
                    p *= trans[regimes[t - 1]][regimes[t]]
                        * m.log_densities(y[t], y[t - 1])[regimes[t]].exp();
                }
                total += p;
                for (t, &r) in regimes.iter().enumerate() {
                    marg[t][r] += p;
                }
            }
        }
        for t in 0..y.len() {
            assert!((sm[t][S] - marg[t][S] / total).abs() < 1e-10, "t {t}");
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let (y, _) = generate_regime_switch(&example(), 400, 8);
        let a = fit_mr(&y, &MrConfig::default()).unwrap();
        let b = fit_mr(&y, &MrConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.model.var_spike >= a.model.var_moderate);
        assert!(a.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn single_regime_data_flags_spike_regime() {
        let p = RegimeParams {
            q: 1.0,
            ..example()
        };
        let (y, _) = generate_regime_switch(&p, 600, 2);
        let fit = fit_mr(&y, &MrConfig::default()).unwrap();
        assert!(
            fit.spike_unoccupied
                || fit.model.trans_p < 0.05
                || fit.model.trans_p > 0.95
                || fit.model.trans_q > 0.99,
            "{:?}",
            fit.model
        );
    }

    #[test]
    fn forecast_hand_cases() {
        let stay_m = MrModel {
            drift: 2.0,
            alpha: 0.0,
            spike_mean: 9.0,
            var_moderate: 1.0,
            var_spike: 4.0,
            trans_q: 1.0,
            trans_p: 0.3,
            loglik: 0.0,
            n_obs: 0,
        };
        assert!(collapsed_path(&stay_m, [1.0, 0.0], 5.0, 4)
            .iter()
            .all(|&v| v == 2.0));
        let stay_s = MrModel {
            trans_p: 1.0,
            ..stay_m.clone()
        };
        assert!(collapsed_path(&stay_s, [0.0, 1.0], 5.0, 4)
            .iter()
            .all(|&v| v == 9.0));
        let sym = MrModel {
            drift: 1.0,
            alpha: 0.0,
            spike_mean: 3.0,
            trans_q: 0.5,
            trans_p: 0.5,
            ..stay_m
        };
        assert_eq!(collapsed_path(&sym, [0.5, 0.5], 0.0, 1)[0], 2.0);
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(matches!(
            fit_mr(&[1.0; 100], &MrConfig::default()),
            Err(Error::InsufficientData { .. })
        ));
    }

    proptest! {
        #[test]
        fn filter_probabilities_sum_to_one(seed in 0u64..1000, q in 0.5f64..0.99, p in 0.1f64..0.9) {
            let params = RegimeParams { q, p, ..example() };
            let (y, _) = generate_regime_switch(&params, 200, seed);
            let m = model_of(&params);
            let out = hamilton_filter(&m, &y);
            for f in out.filtered.iter().chain(&out.predicted) {
                prop_assert!(f[0] >= 0.0 && f[1] >= 0.0);
                prop_assert!((f[0] + f[1] - 1.0).abs() < 1e-12);
            }
        }
    }
}
