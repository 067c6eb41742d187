//! Per-day scores in a basis system, and curves rebuilt from scores.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::basis::BasisSystem;
use crate::ingest::{DayRecord, Domain};
use crate::smoothing::PriceDemandCurve;
use crate::SCHEMA_VERSION;

/// Condition-number limit for score normal equations.
pub const MAX_GRAM_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// Gram system of integrals over the day's domain.
    #[default]
    Integral,
    /// Least squares of the fitted curve at the observed demands.
    Discrete,
}

/// Score series aligned with the days they were computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub day_index: Vec<u32>,
    pub scores: Vec<Vec<f64>>,
    pub curve_norms: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ScoreRecord {
    day_index: u32,
    beta: Vec<f64>,
    curve_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct ScoreFile {
    schema_version: u32,
    scores: Vec<ScoreRecord>,
}

impl Serialize for ScoreMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ScoreFile {
            schema_version: SCHEMA_VERSION,
            scores: self
                .day_index
                .iter()
                .zip(&self.scores)
                .zip(&self.curve_norms)
                .map(|((&d, b), &n)| ScoreRecord {
                    day_index: d,
                    beta: b.clone(),
                    curve_norm: n,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScoreMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = ScoreFile::deserialize(d)?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(D::Error::custom(
                Error::SchemaVersion {
                    expected: SCHEMA_VERSION,
                    found: f.schema_version,
                }
                .to_string(),
            ));
        }
        let mut m = ScoreMatrix {
            day_index: Vec::new(),
            scores: Vec::new(),
            curve_norms: Vec::new(),
        };
        for r in f.scores {
            m.day_index.push(r.day_index);
            m.scores.push(r.beta);
            m.curve_norms.push(r.curve_norm);
        }
        Ok(m)
    }
}

impl ScoreMatrix {
    pub fn len(&self) -> usize {
        self.day_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.day_index.is_empty()
    }

    pub fn k(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    /// Scores of factor `k` as a series on the contiguous workday axis from
    /// `first` to `last`, `None` on days without a score.
    pub fn series(&self, k: usize, first: u32, last: u32) -> Vec<Option<f64>> {
        let mut out = vec![None; (last + 1).saturating_sub(first) as usize];
        for (d, s) in self.day_index.iter().zip(&self.scores) {
            if *d >= first && *d <= last {
                out[(d - first) as usize] = Some(s[k]);
            }
        }
        out
    }

    pub fn row(&self, day_index: u32) -> Option<&[f64]> {
        self.day_index
            .binary_search(&day_index)
            .ok()
            .map(|i| self.scores[i].as_slice())
    }
}

/// A day's curve as seen by the score computations.
pub trait CurveView {
    fn day_index(&self) -> u32;
    fn domain(&self) -> Domain;
    fn value(&self, u: f64) -> Result<f64>;
    fn norm(&self) -> f64;
}

impl CurveView for PriceDemandCurve {
    fn day_index(&self) -> u32 {
        self.day_index
    }

    fn domain(&self) -> Domain {
        PriceDemandCurve::domain(self)
    }

    fn value(&self, u: f64) -> Result<f64> {
        self.evaluate(u)
    }

    fn norm(&self) -> f64 {
        self.l2_norm()
    }
}

fn solve_normal(g: DMatrix<f64>, c: DVector<f64>, context: &str) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::new(g.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::IllConditioned {
            condition,
            context: context.to_string(),
        });
    }
    let chol = g.cholesky().ok_or_else(|| {
        Error::Numerical(format!("{context}: normal equations not positive definite"))
    })?;
    Ok(chol.solve(&c).iter().copied().collect())
}

/// Scores of one day's fitted curve.
pub fn day_scores<C: CurveView>(
    basis: &BasisSystem,
    curve: &C,
    day: Option<&DayRecord>,
    mode: ScoreMode,
) -> Result<Vec<f64>> {
    let k = basis.k();
    let dom = curve.domain();
    let (g, c) = match mode {
        ScoreMode::Integral => {
            let (nodes, weights) = basis.grid.restricted_nodes(dom.lo, dom.hi)?;
            let mut g = DMatrix::zeros(k, k);
            let mut c = DVector::zeros(k);
            for (&u, &w) in nodes.iter().zip(&weights) {
                let f = basis.evaluate_clamped(u);
                let x = curve.value(u)?;
                for a in 0..k {
                    c[a] += w * f[a] * x;
                    for b in 0..k {
                        g[(a, b)] += w * f[a] * f[b];
                    }
                }
            }
            (g, c)
        }
        ScoreMode::Discrete => {
            let day = day.ok_or_else(|| {
                Error::InvalidArgument("discrete scores need the day's observations".into())
            })?;
            let demands: Vec<f64> = day.valid_pairs().into_iter().map(|p| p.0).collect();
            let mut g = DMatrix::zeros(k, k);
            let mut c = DVector::zeros(k);
            for &u in &demands {
                let f = basis.evaluate(u)?;
                let x = curve.value(u)?;
                for a in 0..k {
                    c[a] += f[a] * x;
                    for b in 0..k {
                        g[(a, b)] += f[a] * f[b];
                    }
                }
            }
            (g, c)
        }
    };
    solve_normal(g, c, &format!("scores for day {}", curve.day_index()))
}

/// Scores for every curve; fails on the first day that cannot be scored.
pub fn compute_scores<C: CurveView + Sync>(
    basis: &BasisSystem,
    curves: &[C],
    days: &[&DayRecord],
    mode: ScoreMode,
) -> Result<ScoreMatrix> {
    let (m, skipped) = score_days(basis, curves, days, mode, false)?;
    debug_assert!(skipped.is_empty());
    Ok(m)
}

/// Like [`compute_scores`] but skipping days that cannot be scored; the
/// skipped day indices are returned.
pub fn compute_scores_skipping<C: CurveView + Sync>(
    basis: &BasisSystem,
    curves: &[C],
    days: &[&DayRecord],
    mode: ScoreMode,
) -> Result<(ScoreMatrix, Vec<u32>)> {
    score_days(basis, curves, days, mode, true)
}

fn score_days<C: CurveView + Sync>(
    basis: &BasisSystem,
    curves: &[C],
    days: &[&DayRecord],
    mode: ScoreMode,
    skip: bool,
) -> Result<(ScoreMatrix, Vec<u32>)> {
    if mode == ScoreMode::Discrete && days.len() != curves.len() {
        return Err(Error::InvalidArgument(
            "curves and day records differ in length".into(),
        ));
    }
    let results: Vec<Result<Vec<f64>>> = curves
        .par_iter()
        .enumerate()
        .map(|(i, c)| day_scores(basis, c, days.get(i).copied(), mode))
        .collect();
    let mut m = ScoreMatrix {
        day_index: Vec::new(),
        scores: Vec::new(),
        curve_norms: Vec::new(),
    };
    let mut skipped = Vec::new();
    for (c, r) in curves.iter().zip(results) {
        match r {
            Ok(b) => {
                m.day_index.push(c.day_index());
                m.scores.push(b);
                m.curve_norms.push(c.norm());
            }
            Err(e) if skip => {
                warn!("day {}: scores skipped ({e})", c.day_index());
                skipped.push(c.day_index());
            }
            Err(e) => return Err(e),
        }
    }
    Ok((m, skipped))
}

/// `u -> sum_k beta_k f_k(u)` on `domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisCurve {
    pub day_index: u32,
    grid: crate::quadrature::Grid,
    values: Vec<f64>,
    domain: Domain,
}

impl BasisCurve {
    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Values on the basis grid nodes.
    pub fn grid_values(&self) -> &[f64] {
        &self.values
    }

    pub fn evaluate(&self, u: f64) -> Result<f64> {
        let slack = 1e-9 * self.grid.spacing();
        if !(u >= self.domain.lo - slack && u <= self.domain.hi + slack) {
            return Err(Error::OutsideDomain {
                value: u,
                lo: self.domain.lo,
                hi: self.domain.hi,
            });
        }
        Ok(self.grid.interpolate_clamped(&self.values, u))
    }
}

impl CurveView for BasisCurve {
    fn day_index(&self) -> u32 {
        self.day_index
    }

    fn domain(&self) -> Domain {
        self.domain
    }

    fn value(&self, u: f64) -> Result<f64> {
        self.evaluate(u)
    }

    fn norm(&self) -> f64 {
        crate::quadrature::trapezoid(
            self.domain.lo,
            self.domain.hi,
            crate::quadrature::DEFAULT_QUAD_POINTS,
            |u| self.grid.interpolate_clamped(&self.values, u).powi(2),
        )
        .sqrt()
    }
}

pub fn reconstruct_curve(
    basis: &BasisSystem,
    scores: &[f64],
    domain: Domain,
) -> Result<BasisCurve> {
    if scores.len() != basis.k() {
        return Err(Error::InvalidArgument(format!(
            "expected {} scores, got {}",
            basis.k(),
            scores.len()
        )));
    }
    if !(basis.grid.contains(domain.lo) && basis.grid.contains(domain.hi) && domain.lo <= domain.hi)
    {
        return Err(Error::OutsideDomain {
            value: if basis.grid.contains(domain.lo) {
                domain.hi
            } else {
                domain.lo
            },
            lo: basis.grid.lo(),
            hi: basis.grid.hi(),
        });
    }
    let values = (0..basis.grid.len())
        .map(|i| {
            scores
                .iter()
                .zip(&basis.functions)
                .map(|(b, f)| b * f[i])
                .sum()
        })
        .collect();
    Ok(BasisCurve {
        day_index: 0,
        grid: basis.grid.clone(),
        values,
        domain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Grid;
    use proptest::prelude::*;

    struct Closed<F: Fn(f64) -> f64> {
        domain: Domain,
        f: F,
    }

    impl<F: Fn(f64) -> f64> CurveView for Closed<F> {
        fn day_index(&self) -> u32 {
            1
        }

        fn domain(&self) -> Domain {
            self.domain
        }

        fn value(&self, u: f64) -> Result<f64> {
            Ok((self.f)(u))
        }

        fn norm(&self) -> f64 {
            1.0
        }
    }

    /// Constant and linear functions on [0, 1], Gram-Schmidt under the grid's trapezoid rule.
    fn linear_basis() -> BasisSystem {
        let grid = Grid::new(0.0, 1.0, 201).unwrap();
        let w = grid.trapezoid_weights();
        let dot = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .zip(&w)
                .map(|((x, y), w)| x * y * w)
                .sum::<f64>()
        };
        let f1 = vec![1.0; grid.len()];
        let raw: Vec<f64> = grid
            .points()
            .iter()
            .map(|u| 3f64.sqrt() * (2.0 * u - 1.0))
            .collect();
        let c = dot(&raw, &f1);
        let f2: Vec<f64> = raw.iter().zip(&f1).map(|(r, e)| r - c * e).collect();
        let n = dot(&f2, &f2).sqrt();
        let f2 = f2.into_iter().map(|v| v / n).collect();
        BasisSystem {
            schema_version: SCHEMA_VERSION,
            grid,
            functions: vec![f1, f2],
            eigenvalues: vec![1.0, 0.5],
            variance_shares: vec![0.6, 0.3],
            rotation: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            total_variance: 1.5,
        }
    }

    fn full() -> Domain {
        Domain { lo: 0.0, hi: 1.0 }
    }

    #[test]
    fn twice_first_factor() {
        let b = linear_basis();
        let s = day_scores(
            &b,
            &Closed {
                domain: full(),
                f: |_| 2.0,
            },
            None,
            ScoreMode::Integral,
        )
        .unwrap();
        assert!((s[0] - 2.0).abs() < 1e-12 && s[1].abs() < 1e-12, "{s:?}");
    }

    #[test]
    fn full_domain_scores_are_projections() {
        let b = linear_basis();
        let s = day_scores(
            &b,
            &Closed {
                domain: full(),
                f: f64::exp,
            },
            None,
            ScoreMode::Integral,
        )
        .unwrap();
        let e = std::f64::consts::E;
        assert!((s[0] - (e - 1.0)).abs() < 1e-4, "{}", s[0]);
        assert!((s[1] - 3f64.sqrt() * (3.0 - e)).abs() < 1e-3, "{}", s[1]);
    }

    #[test]
    fn sub_domain_scores_are_least_squares() {
        let (lo, hi) = (0.2f64, 0.7f64);
        let m = |p: i32| (hi.powi(p + 1) - lo.powi(p + 1)) / f64::from(p + 1);
        let e0 = hi.exp() - lo.exp();
        let e1 = (hi - 1.0) * hi.exp() - (lo - 1.0) * lo.exp();
        let det = m(0) * m(2) - m(1) * m(1);
        let a = (m(2) * e0 - m(1) * e1) / det;
        let slope = (m(0) * e1 - m(1) * e0) / det;
        let b = linear_basis();
        let s = day_scores(
            &b,
            &Closed {
                domain: Domain { lo, hi },
                f: f64::exp,
            },
            None,
            ScoreMode::Integral,
        )
        .unwrap();
        let beta2 = slope / (2.0 * 3f64.sqrt());
        assert!((s[1] - beta2).abs() < 1e-3, "{} vs {beta2}", s[1]);
        assert!(
            (s[0] - (a + slope / 2.0)).abs() < 1e-3,
            "{} vs {}",
            s[0],
            a + slope / 2.0
        );
    }

    #[test]
    fn degenerate_domain_is_rejected() {
        let b = linear_basis();
        let c = Closed {
            domain: Domain {
                lo: 0.5,
                hi: 0.5 + 1e-9,
            },
            f: |u| u,
        };
        assert!(day_scores(&b, &c, None, ScoreMode::Integral).is_err());
    }

    #[test]
    fn discrete_mode_needs_observations() {
        let b = linear_basis();
        let r = day_scores(
            &b,
            &Closed {
                domain: full(),
                f: |_| 1.0,
            },
            None,
            ScoreMode::Discrete,
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn reconstruct_checks_arguments() {
        let b = linear_basis();
        assert!(reconstruct_curve(&b, &[1.0], full()).is_err());
        assert!(reconstruct_curve(&b, &[1.0, 0.0], Domain { lo: -0.1, hi: 0.5 }).is_err());
        let c = reconstruct_curve(&b, &[1.0, 0.0], Domain { lo: 0.2, hi: 0.6 }).unwrap();
        assert!(c.evaluate(0.7).is_err());
        assert!((c.evaluate(0.4).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_matrix_json() {
        let m = ScoreMatrix {
            day_index: vec![1, 3],
            scores: vec![vec![1.5, -0.25], vec![2.0, 0.125]],
            curve_norms: vec![4.0, 5.0],
        };
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<ScoreMatrix>(&s).unwrap(), m);
        assert_eq!(
            m.series(1, 1, 4),
            vec![Some(-0.25), None, Some(0.125), None]
        );
        assert_eq!(m.row(3), Some(&[2.0, 0.125][..]));
        let bad = s.replace("\"schema_version\":1", "\"schema_version\":99");
        assert!(serde_json::from_str::<ScoreMatrix>(&bad).is_err());
    }

    proptest! {
        #[test]
        fn reconstruct_then_score_round_trips(b1 in -50.0f64..50.0, b2 in -50.0f64..50.0, lo in 0.0f64..0.5, w in 0.2f64..0.5) {
            let basis = linear_basis();
            let dom = Domain { lo, hi: (lo + w).min(1.0) };
            let c = reconstruct_curve(&basis, &[b1, b2], dom).unwrap();
            let s = day_scores(&basis, &c, None, ScoreMode::Integral).unwrap();
            prop_assert!((s[0] - b1).abs() < 1e-8 && (s[1] - b2).abs() < 1e-8, "{:?}", s);
        }
    }
}
