//! Leave-one-day-out choice of the undersmoothing ratio.
//!
//! For a ratio `r`, every day is refit at `r * b_opt`, standardized, and
//! the basis is re-estimated without the held-out day. The held-out day's
//! observed prices are regressed on the leave-out basis at its demands and
//! the squared residuals are summed over all days.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::{
    day_products, eigenpairs, smooth_products, standardize_curves, CovarianceSurface, DayProducts,
    MomentSums, SmoothedSample, MAX_GRAM_CONDITION,
};
use crate::ingest::DayRecord;
use crate::quadrature::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UndersmoothingReport {
    pub k: usize,
    pub ratio: f64,
    /// `(ratio, criterion)` for every grid value.
    pub scores: Vec<(f64, f64)>,
    /// Days left out of the criterion because their leave-out fit failed.
    pub skipped_days: Vec<u32>,
}

/// Squared residuals of `prices ~ f_1..f_k (demands)` for each `k` in `ks`.
fn holdout_sse(
    grid: &Grid,
    functions: &[Vec<f64>],
    values: &[f64],
    day: &DayRecord,
    ks: &[usize],
) -> Vec<Option<f64>> {
    let pairs = day.valid_pairs();
    let lead = values.first().copied().unwrap_or(0.0);
    ks.iter()
        .map(|&k| {
            if k > functions.len() || !(values[k - 1] >= 1e-12 * lead && lead > 0.0) {
                return None;
            }
            let x = DMatrix::from_fn(pairs.len(), k, |i, j| {
                grid.interpolate_clamped(&functions[j], pairs[i].0)
            });
            let y = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.1));
            let g = x.transpose() * &x;
            let eig = g.clone().symmetric_eigenvalues();
            let (max, min) = (eig.max(), eig.min());
            if !(min > 0.0 && max / min <= MAX_GRAM_CONDITION) {
                return None;
            }
            let beta = g.cholesky()?.solve(&(x.transpose() * &y));
            Some((y - x * beta).norm_squared())
        })
        .collect()
}

/// ratio -> day -> k -> held-out SSE.
type Table = Vec<Vec<Vec<Option<f64>>>>;

fn reports_from(
    table: &Table,
    ratios: &[f64],
    ks: &[usize],
    day_index: &[u32],
) -> Result<Vec<UndersmoothingReport>> {
    ks.iter()
        .enumerate()
        .map(|(ki, &k)| {
            // Only days usable at every ratio enter, so criteria are comparable.
            let usable: Vec<bool> = (0..day_index.len())
                .map(|t| table.iter().all(|per_day| per_day[t][ki].is_some()))
                .collect();
            let skipped: Vec<u32> = day_index
                .iter()
                .zip(&usable)
                .filter(|(_, &u)| !u)
                .map(|(&d, _)| d)
                .collect();
            if skipped.len() == day_index.len() {
                return Err(Error::Numerical(format!(
                    "undersmoothing criterion has no usable day for K = {k}"
                )));
            }
            if !skipped.is_empty() {
                warn!(
                    "K = {k}: {} day(s) skipped in the undersmoothing criterion",
                    skipped.len()
                );
            }
            let scores: Vec<(f64, f64)> = ratios
                .iter()
                .zip(table)
                .map(|(&r, per_day)| {
                    let s = per_day
                        .iter()
                        .zip(&usable)
                        .filter(|(_, &u)| u)
                        .map(|(v, _)| v[ki].unwrap())
                        .sum();
                    (r, s)
                })
                .collect();
            let best = scores
                .iter()
                .copied()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            Ok(UndersmoothingReport {
                k,
                ratio: best.0,
                scores,
                skipped_days: skipped,
            })
        })
        .collect()
}

fn check_args(sample: &SmoothedSample, ks: &[usize], ratio_grid: &[f64]) -> Result<Vec<f64>> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument("undersmoothing needs K >= 1".into()));
    }
    let needed = ks.iter().max().unwrap() + 1;
    if sample.len() < needed {
        return Err(Error::InsufficientData {
            what: "fit-eligible days for undersmoothing",
            needed,
            got: sample.len(),
        });
    }
    if ratio_grid.is_empty() || ratio_grid.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::InvalidArgument(
            "ratio grid values must lie in (0, 1]".into(),
        ));
    }
    let mut ratios = ratio_grid.to_vec();
    ratios.sort_by(f64::total_cmp);
    ratios.dedup();
    Ok(ratios)
}

fn ratio_products(sample: &SmoothedSample, ratio: f64) -> Result<Vec<DayProducts>> {
    let tilde = sample.tilde_curves(ratio)?;
    let std = standardize_curves(&sample.hat, &tilde);
    day_products(&std, &sample.day_refs())
}

fn evaluate_holdouts<F>(
    sample: &SmoothedSample,
    products: &[DayProducts],
    grid: &Grid,
    ks: &[usize],
    leave_out: F,
) -> Vec<Option<Vec<Option<f64>>>>
where
    F: Fn(usize) -> Result<CovarianceSurface> + Sync,
{
    (0..products.len())
        .into_par_iter()
        .map(|t| {
            let day_idx = products[t].day_index;
            let pos = sample
                .days
                .binary_search_by_key(&day_idx, |d| d.day_index)
                .ok()?;
            match leave_out(t) {
                Ok(surface) => {
                    let (values, functions) = eigenpairs(&surface);
                    Some(holdout_sse(
                        grid,
                        &functions,
                        &values,
                        &sample.days[pos],
                        ks,
                    ))
                }
                Err(e) => {
                    warn!("day {day_idx}: leave-out basis failed ({e})");
                    None
                }
            }
        })
        .collect()
}

fn run<F>(
    sample: &SmoothedSample,
    ks: &[usize],
    ratio_grid: &[f64],
    grid_n: usize,
    mut per_ratio: F,
) -> Result<Vec<UndersmoothingReport>>
where
    F: FnMut(&[DayProducts], &Grid) -> Vec<Option<Vec<Option<f64>>>>,
{
    let ratios = check_args(sample, ks, ratio_grid)?;
    let grid = sample.grid(grid_n)?;
    let day_index: Vec<u32> = sample.days.iter().map(|d| d.day_index).collect();
    let mut table: Table = Vec::with_capacity(ratios.len());
    for &r in &ratios {
        let products = ratio_products(sample, r)?;
        let results = per_ratio(&products, &grid);
        let mut per_day = vec![vec![None; ks.len()]; day_index.len()];
        for (p, res) in products.iter().zip(results) {
            if let (Ok(pos), Some(v)) = (day_index.binary_search(&p.day_index), res) {
                per_day[pos] = v;
            }
        }
        table.push(per_day);
    }
    reports_from(&table, &ratios, ks, &day_index)
}

/// Cross-validated undersmoothing ratio for each `K` in `ks`.
///
/// The covariance bandwidth is held fixed, so each leave-out surface is
/// obtained exactly by subtracting the held-out day's kernel moment sums
/// from the totals.
pub fn undersmoothing_cv(
    sample: &SmoothedSample,
    ks: &[usize],
    ratio_grid: &[f64],
    bandwidth: f64,
    grid_n: usize,
) -> Result<Vec<UndersmoothingReport>> {
    run(sample, ks, ratio_grid, grid_n, |products, grid| {
        let sums = MomentSums::accumulate(grid, bandwidth, products);
        evaluate_holdouts(sample, products, grid, ks, |t| {
            let block = sums.day_block(&products[t]);
            sums.surface(Some(&block))
        })
    })
}

/// Same criterion with every leave-out surface smoothed from scratch.
pub fn undersmoothing_cv_exact(
    sample: &SmoothedSample,
    ks: &[usize],
    ratio_grid: &[f64],
    bandwidth: f64,
    grid_n: usize,
) -> Result<Vec<UndersmoothingReport>> {
    run(sample, ks, ratio_grid, grid_n, |products, grid| {
        evaluate_holdouts(sample, products, grid, ks, |t| {
            let rest: Vec<DayProducts> = products
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != t)
                .map(|(_, p)| p.clone())
                .collect();
            smooth_products(&rest, grid, bandwidth)
        })
    })
}
