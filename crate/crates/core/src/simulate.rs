//! Synthetic data: factor-model price-demand worlds with known truth,
//! seasonal ARIMA series and two-regime switching series.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{is_weekday, Dataset, HourlyObservation, IngestConfig};
use crate::quadrature::Grid;
use crate::SCHEMA_VERSION;

const BURN_IN: usize = 200;
const FACTOR_QUAD_POINTS: usize = 2001;

/// Parameters of `(1 - B)(1 - B^s) y = (1 + sum_j ma_j B^j)(1 + seasonal_ma B^s) e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SarimaParams {
    pub ma: Vec<f64>,
    pub seasonal_ma: f64,
    pub sigma2: f64,
    pub season: usize,
}

impl Default for SarimaParams {
    fn default() -> Self {
        Self {
            ma: vec![0.0; 6],
            seasonal_ma: 0.0,
            sigma2: 1.0,
            season: 5,
        }
    }
}

impl SarimaParams {
    /// Coefficients of the expanded moving-average polynomial, index 0 = 1.
    pub fn ma_polynomial(&self) -> Vec<f64> {
        let q = self.ma.len();
        let s = self.season;
        let mut psi = vec![0.0; q + s + 1];
        let mut theta = vec![1.0];
        theta.extend_from_slice(&self.ma);
        for (j, &t) in theta.iter().enumerate() {
            psi[j] += t;
            psi[j + s] += t * self.seasonal_ma;
        }
        psi
    }
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Simulates `t` values after a discarded burn-in, starting from zeros.
pub fn generate_sarima(params: &SarimaParams, t: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = params.ma_polynomial();
    let s = params.season;
    let sd = params.sigma2.max(0.0).sqrt();
    let total = t + BURN_IN;
    let eps: Vec<f64> = (0..total + psi.len())
        .map(|_| sd * std_normal(&mut rng))
        .collect();
    let lags = s + 1;
    let mut y = vec![0.0; total + lags];
    for i in 0..total {
        let e0 = i + psi.len() - 1;
        let w: f64 = psi.iter().enumerate().map(|(j, c)| c * eps[e0 - j]).sum();
        let at = i + lags;
        y[at] = y[at - 1] + y[at - s] - y[at - s - 1] + w;
    }
    y.split_off(lags + BURN_IN)
}

/// Two-regime switching parameters; `q = P(M -> M)`, `p = P(S -> S)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeParams {
    pub drift: f64,
    pub alpha: f64,
    pub spike_mean: f64,
    pub sd_moderate: f64,
    pub sd_spike: f64,
    pub q: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Moderate,
    Spike,
}

/// Simulates `t` values after burn-in. The moderate regime is an AR(1) in
/// the previous observation; the spike regime is i.i.d. around its mean.
pub fn generate_regime_switch(
    params: &RegimeParams,
    t: usize,
    seed: u64,
) -> (Vec<f64>, Vec<Regime>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut regime = Regime::Moderate;
    let mut y_prev = if (1.0 - params.alpha).abs() > 1e-12 {
        params.drift / (1.0 - params.alpha)
    } else {
        0.0
    };
    let mut ys = Vec::with_capacity(t);
    let mut rs = Vec::with_capacity(t);
    for i in 0..t + BURN_IN {
        if i > 0 {
            let u: f64 = rng.random();
            regime = match regime {
                Regime::Moderate if u >= params.q => Regime::Spike,
                Regime::Spike if u >= params.p => Regime::Moderate,
                r => r,
            };
        }
        let e = std_normal(&mut rng);
        let y = match regime {
            Regime::Moderate => params.drift + params.alpha * y_prev + params.sd_moderate * e,
            Regime::Spike => params.spike_mean + params.sd_spike * e,
        };
        if i >= BURN_IN {
            ys.push(y);
            rs.push(regime);
        }
        y_prev = y;
    }
    (ys, rs)
}

/// Closed-form shapes combined into orthonormal factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorFamily {
    /// Increasing softplus-like, convex increasing, then a wave.
    #[default]
    MeritOrder,
    /// A single constant factor.
    Constant,
}

/// Path of one factor's score around its level, in price units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ScoreProcess {
    /// `beta_t = beta_{t-1} + sd * e_t`.
    RandomWalk { sd: f64 },
    /// Seasonal ARIMA path.
    Sarima { params: SarimaParams },
    /// Independent noise.
    Iid { sd: f64 },
    /// Stationary AR(1) with marginal standard deviation `sd`.
    Ar1 { phi: f64, sd: f64 },
}

/// Factor-model world generator. Score levels and standard deviations are
/// given in price units; the generated scores are these times
/// `sqrt(B - A)`, so that a level `c` on a constant factor yields price `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FfmGenerator {
    pub k: usize,
    pub factors: FactorFamily,
    pub span: [f64; 2],
    pub full_domains: bool,
    /// Domain offsets `|z|` have marginal sd `domain_sd * (B - A)`.
    pub domain_sd: f64,
    /// Day-to-day autocorrelation of the domain offsets.
    pub domain_ar: f64,
    pub score_level: Vec<f64>,
    pub score_process: Vec<ScoreProcess>,
    pub noise_sd: f64,
    pub hours_per_day: usize,
    /// Hourly jitter of the intraday demand profile (fraction of the range).
    pub demand_jitter: f64,
    /// Scale of the day-to-day variation in profile phase and shape.
    pub profile_variation: f64,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for FfmGenerator {
    fn default() -> Self {
        Self {
            k: 2,
            factors: FactorFamily::MeritOrder,
            span: [30000.0, 80000.0],
            full_domains: false,
            domain_sd: 0.1,
            domain_ar: 0.7,
            score_level: vec![50.0, 0.0, 0.0],
            score_process: vec![
                ScoreProcess::RandomWalk { sd: 0.5 },
                ScoreProcess::Ar1 {
                    phi: 0.98,
                    sd: 12.0,
                },
                ScoreProcess::Ar1 { phi: 0.9, sd: 3.0 },
            ],
            noise_sd: 1.0,
            hours_per_day: 24,
            demand_jitter: 0.05,
            profile_variation: 1.0,
            start_date: NaiveDate::from_ymd_opt(2006, 1, 2).expect("valid date"),
            seed: 1,
        }
    }
}

/// Orthonormal factors as fixed combinations of closed-form shapes on the
/// unit interval `x = (u - A) / (B - A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueFactors {
    lo: f64,
    hi: f64,
    family: FactorFamily,
    /// `coef[k][j]`: weight of shape `j` in factor `k`.
    coef: Vec<Vec<f64>>,
}

fn shape(family: FactorFamily, j: usize, x: f64) -> f64 {
    match (family, j) {
        (FactorFamily::Constant, _) => 1.0,
        (_, 0) => 0.3 + (1.0 + (2.0 * (x - 0.3)).exp()).ln(),
        (_, 1) => (3.0 * x).exp(),
        (_, _) => (2.0 * std::f64::consts::PI * x).sin(),
    }
}

impl TrueFactors {
    pub fn new(family: FactorFamily, k: usize, lo: f64, hi: f64) -> Result<Self> {
        let max_k = match family {
            FactorFamily::Constant => 1,
            FactorFamily::MeritOrder => 3,
        };
        if k == 0 || k > max_k {
            return Err(Error::InvalidArgument(format!(
                "factor family supports 1..={max_k} factors, got {k}"
            )));
        }
        let quad = Grid::new(lo, hi, FACTOR_QUAD_POINTS)?;
        let w = quad.trapezoid_weights();
        let xs: Vec<f64> = quad.points().iter().map(|u| (u - lo) / (hi - lo)).collect();
        let shapes: Vec<Vec<f64>> = (0..k)
            .map(|j| xs.iter().map(|&x| shape(family, j, x)).collect())
            .collect();
        let ip = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .zip(&w)
                .map(|((x, y), w)| x * y * w)
                .sum::<f64>()
        };
        // Gram-Schmidt on sampled shapes, tracked as coefficient vectors.
        let mut coef: Vec<Vec<f64>> = Vec::new();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for j in 0..k {
            let mut c = vec![0.0; k];
            c[j] = 1.0;
            let mut v = shapes[j].clone();
            for (b, cb) in basis.iter().zip(&coef) {
                let r = ip(&shapes[j], b);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= r * bi;
                }
                for (ci, cbi) in c.iter_mut().zip(cb) {
                    *ci -= r * cbi;
                }
            }
            let norm = ip(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            c.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
            coef.push(c);
        }
        Ok(Self {
            lo,
            hi,
            family,
            coef,
        })
    }

    pub fn k(&self) -> usize {
        self.coef.len()
    }

    pub fn values(&self, u: f64) -> Vec<f64> {
        let x = (u - self.lo) / (self.hi - self.lo);
        let g: Vec<f64> = (0..self.k()).map(|j| shape(self.family, j, x)).collect();
        self.coef
            .iter()
            .map(|c| c.iter().zip(&g).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Factor `k` sampled on `grid`.
    pub fn sampled(&self, grid: &Grid, k: usize) -> Vec<f64> {
        grid.points().iter().map(|&u| self.values(u)[k]).collect()
    }
}

/// Known truth behind a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub span: [f64; 2],
    pub grid: Grid,
    pub factors: Vec<Vec<f64>>,
    pub day_index: Vec<u32>,
    pub dates: Vec<NaiveDate>,
    pub scores: Vec<Vec<f64>>,
    pub domains: Vec<[f64; 2]>,
    pub noise_sd: f64,
}

fn next_workday(d: NaiveDate) -> NaiveDate {
    let mut n = d.succ_opt().expect("date overflow");
    while !is_weekday(n) {
        n = n.succ_opt().expect("date overflow");
    }
    n
}

/// Stationary AR(1) path with N(0, 1) marginals.
fn ar1_path(rng: &mut ChaCha8Rng, t: usize, phi: f64) -> Vec<f64> {
    let innov = (1.0 - phi * phi).max(0.0).sqrt();
    let mut z = std_normal(rng);
    (0..t)
        .map(|i| {
            if i > 0 {
                z = phi * z + innov * std_normal(rng);
            }
            z
        })
        .collect()
}

impl FfmGenerator {
    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.span;
        if !(a > 0.0 && b > a) {
            return Err(Error::InvalidArgument(format!(
                "invalid demand span [{a}, {b}]"
            )));
        }
        if self.hours_per_day < 4 || self.hours_per_day > 24 {
            return Err(Error::InvalidArgument(
                "hours_per_day must lie in 4..=24".into(),
            ));
        }
        if self.score_level.len() < self.k {
            return Err(Error::InvalidArgument(
                "score_level needs one entry per factor".into(),
            ));
        }
        if self.score_process.len() < self.k {
            return Err(Error::InvalidArgument(
                "score process needs one entry per factor".into(),
            ));
        }
        if self
            .score_process
            .iter()
            .any(|p| matches!(p, ScoreProcess::Ar1 { phi, .. } if phi.abs() >= 1.0))
        {
            return Err(Error::InvalidArgument(
                "AR(1) score processes need |phi| < 1".into(),
            ));
        }
        if !(self.noise_sd >= 0.0
            && self.domain_sd >= 0.0
            && self.profile_variation >= 0.0
            && self.domain_ar.abs() < 1.0)
        {
            return Err(Error::InvalidArgument(
                "noise_sd, domain_sd, profile_variation must be >= 0 and |domain_ar| < 1".into(),
            ));
        }
        if !is_weekday(self.start_date) {
            return Err(Error::InvalidArgument(format!(
                "start date {} is not a weekday",
                self.start_date
            )));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }

    /// Score paths (natural units), one row per day.
    fn scores(&self, t: usize) -> Vec<Vec<f64>> {
        let scale = (self.span[1] - self.span[0]).sqrt();
        let mut rng = self.rng(1);
        let mut out = vec![vec![0.0; self.k]; t];
        for k in 0..self.k {
            let level = self.score_level[k];
            let path: Vec<f64> = match &self.score_process[k] {
                ScoreProcess::RandomWalk { sd } => {
                    let mut b = 0.0;
                    (0..t)
                        .map(|i| {
                            if i > 0 {
                                b += sd * std_normal(&mut rng);
                            }
                            b
                        })
                        .collect()
                }
                ScoreProcess::Iid { sd } => (0..t).map(|_| sd * std_normal(&mut rng)).collect(),
                ScoreProcess::Ar1 { phi, sd } => ar1_path(&mut rng, t, *phi)
                    .into_iter()
                    .map(|z| sd * z)
                    .collect(),
                ScoreProcess::Sarima { params } => {
                    generate_sarima(params, t, self.seed.wrapping_mul(31).wrapping_add(k as u64))
                }
            };
            for (row, v) in out.iter_mut().zip(path) {
                row[k] = (level + v) * scale;
            }
        }
        out
    }

    fn domains(&self, t: usize) -> Vec<[f64; 2]> {
        let [a, b] = self.span;
        if self.full_domains {
            return vec![[a, b]; t];
        }
        let s = self.domain_sd * (b - a);
        let cap = 0.4 * (b - a);
        let mut rng = self.rng(2);
        let lo = ar1_path(&mut rng, t, self.domain_ar);
        let hi = ar1_path(&mut rng, t, self.domain_ar);
        lo.iter()
            .zip(&hi)
            .map(|(zl, zh)| [a + (s * zl).abs().min(cap), b - (s * zh).abs().min(cap)])
            .collect()
    }

    /// Intraday demand profile in `[0, 1]` with both ends attained. The
    /// phase and the secondary harmonic vary from day to day.
    fn profile(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        use std::f64::consts::PI;
        let n = self.hours_per_day;
        let v = self.profile_variation;
        let phase = 0.17 + v * 0.06 * (rng.random::<f64>() - 0.5);
        let second = 0.15 + v * 0.3 * (rng.random::<f64>() - 0.5);
        let raw: Vec<f64> = (0..n)
            .map(|h| {
                let x = (h as f64 + 1.0) / 24.0;
                let base = 0.5 - 0.5 * (2.0 * PI * (x - phase)).cos();
                base + second * (4.0 * PI * x).sin() + self.demand_jitter * std_normal(rng)
            })
            .collect();
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
    }

    pub fn true_factors(&self) -> Result<TrueFactors> {
        TrueFactors::new(self.factors, self.k, self.span[0], self.span[1])
    }

    /// `t` consecutive workdays of hourly (demand, price) pairs and the truth.
    pub fn generate(&self, t: usize) -> Result<(Dataset, GroundTruth)> {
        self.validate()?;
        let factors = self.true_factors()?;
        let scores = self.scores(t);
        let domains = self.domains(t);
        let mut prof_rng = self.rng(3);
        let mut noise_rng = self.rng(4);
        let mut obs = Vec::with_capacity(t * self.hours_per_day);
        let mut dates = Vec::with_capacity(t);
        let mut date = self.start_date;
        for (i, (beta, dom)) in scores.iter().zip(&domains).enumerate() {
            if i > 0 {
                date = next_workday(date);
            }
            dates.push(date);
            let profile = self.profile(&mut prof_rng);
            for (h, p) in profile.iter().enumerate() {
                let u = dom[0] + (dom[1] - dom[0]) * p;
                let f = factors.values(u);
                let x: f64 = f.iter().zip(beta).map(|(a, b)| a * b).sum();
                let price = x + self.noise_sd * std_normal(&mut noise_rng);
                obs.push(HourlyObservation {
                    day_index: i as u32 + 1,
                    calendar_date: date,
                    hour: h as u8 + 1,
                    price,
                    demand: u,
                    is_outlier: false,
                    is_missing: false,
                });
            }
        }
        let ds = Dataset::from_observations(obs, BTreeSet::new(), IngestConfig::default())?;
        let grid = Grid::new(self.span[0], self.span[1], 201)?;
        let truth = GroundTruth {
            schema_version: SCHEMA_VERSION,
            span: self.span,
            factors: (0..self.k).map(|k| factors.sampled(&grid, k)).collect(),
            grid,
            day_index: (1..=t as u32).collect(),
            dates,
            scores,
            domains,
            noise_sd: self.noise_sd,
        };
        Ok((ds, truth))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coefficients_give_double_differenced_noise() {
        let p = SarimaParams::default();
        let y = generate_sarima(&p, 300, 5);
        let w: Vec<f64> = (6..y.len())
            .map(|t| y[t] - y[t - 1] - y[t - 5] + y[t - 6])
            .collect();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        assert!((var - 1.0).abs() < 0.2, "{var}");
    }

    #[test]
    fn sarima_autocovariance_matches_closed_form() {
        let p = SarimaParams {
            ma: vec![0.4, 0.2, 0.1, 0.05, 0.02, 0.01],
            seasonal_ma: -0.5,
            sigma2: 1.0,
            season: 5,
        };
        let y = generate_sarima(&p, 20000, 11);
        let w: Vec<f64> = (6..y.len())
            .map(|t| y[t] - y[t - 1] - y[t - 5] + y[t - 6])
            .collect();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let psi = p.ma_polynomial();
        for lag in 0..=11 {
            let theory: f64 = (0..psi.len() - lag)
                .map(|j| psi[j] * psi[j + lag])
                .sum::<f64>()
                * p.sigma2;
            let sample: f64 = (0..w.len() - lag)
                .map(|t| (w[t] - mean) * (w[t + lag] - mean))
                .sum::<f64>()
                / n;
            if theory.abs() > 0.05 {
                assert!(
                    (sample - theory).abs() <= 0.1 * theory.abs(),
                    "lag {lag}: {sample} vs {theory}"
                );
            } else {
                assert!(
                    (sample - theory).abs() < 0.03,
                    "lag {lag}: {sample} vs {theory}"
                );
            }
        }
    }

    #[test]
    fn seeds_reproduce() {
        let p = SarimaParams::default();
        assert_eq!(generate_sarima(&p, 50, 3), generate_sarima(&p, 50, 3));
        let r = RegimeParams {
            drift: 0.5,
            alpha: 0.6,
            spike_mean: 5.0,
            sd_moderate: 0.2,
            sd_spike: 1.0,
            q: 0.95,
            p: 0.5,
        };
        assert_eq!(
            generate_regime_switch(&r, 100, 9),
            generate_regime_switch(&r, 100, 9)
        );
    }

    #[test]
    fn never_leaves_moderate_with_q_one() {
        let r = RegimeParams {
            drift: 1.0,
            alpha: 0.5,
            spike_mean: 5.0,
            sd_moderate: 0.2,
            sd_spike: 1.0,
            q: 1.0,
            p: 0.5,
        };
        let (_, regimes) = generate_regime_switch(&r, 1000, 2);
        assert!(regimes.iter().all(|&x| x == Regime::Moderate));
    }

    #[test]
    fn occupancy_matches_stationary_distribution() {
        let r = RegimeParams {
            drift: 0.5,
            alpha: 0.6,
            spike_mean: 5.0,
            sd_moderate: 0.2,
            sd_spike: 1.0,
            q: 0.95,
            p: 0.5,
        };
        let (_, regimes) = generate_regime_switch(&r, 20000, 4);
        let spike = regimes.iter().filter(|&&x| x == Regime::Spike).count() as f64 / 20000.0;
        let stationary = (1.0 - r.q) / (2.0 - r.p - r.q);
        assert!((spike - stationary).abs() < 0.03, "{spike} vs {stationary}");
    }

    #[test]
    fn factors_are_orthonormal() {
        for k in 1..=3 {
            let f = TrueFactors::new(FactorFamily::MeritOrder, k, 30000.0, 80000.0).unwrap();
            let grid = Grid::new(30000.0, 80000.0, FACTOR_QUAD_POINTS).unwrap();
            let w = grid.trapezoid_weights();
            for a in 0..k {
                for b in 0..k {
                    let fa = f.sampled(&grid, a);
                    let fb = f.sampled(&grid, b);
                    let ip: f64 = (0..w.len()).map(|i| w[i] * fa[i] * fb[i]).sum();
                    assert!((ip - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn noiseless_constant_factor_prices() {
        let g = FfmGenerator {
            k: 1,
            factors: FactorFamily::Constant,
            noise_sd: 0.0,
            score_process: vec![ScoreProcess::Iid { sd: 0.0 }],
            score_level: vec![42.0],
            ..FfmGenerator::default()
        };
        let (ds, truth) = g.generate(5).unwrap();
        for d in &ds.days {
            for o in &d.observations {
                assert!((o.price - 42.0).abs() < 1e-9);
            }
        }
        let s = (truth.span[1] - truth.span[0]).sqrt();
        assert!((truth.scores[0][0] / s - 42.0).abs() < 1e-12);
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let g = FfmGenerator::default();
        let (a, ta) = g.generate(30).unwrap();
        let (b, tb) = g.generate(30).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(a.len(), 30);
        for (d, dom) in a.days.iter().zip(&ta.domains) {
            assert!(dom[0] >= 30000.0 && dom[0] < dom[1] && dom[1] <= 80000.0);
            let got = d.domain.unwrap();
            assert!((got.lo - dom[0]).abs() < 1e-6 && (got.hi - dom[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn domains_cover_span_edges() {
        let g = FfmGenerator::default();
        let (ds, _) = g.generate(500).unwrap();
        let span = ds.span.unwrap();
        assert!(span.lo - 30000.0 < 0.02 * 50000.0);
        assert!(80000.0 - span.hi < 0.02 * 50000.0);
    }
}
