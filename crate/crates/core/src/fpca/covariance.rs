//! Local-linear smoothing of raw covariance products on an `n x n` grid.
//!
//! For a grid point `(x, y)` the estimate is the intercept of the weighted
//! least-squares plane through the products `z_ti * z_tj` observed at
//! `(u_ti, u_tj)`, `i != j`, with an Epanechnikov product kernel. The fit
//! depends on the data only through nine weighted moment sums per grid
//! cell, so per-day contributions can be added and removed exactly.

use log::warn;
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Domain;
use crate::quadrature::{log_space, Grid};

/// Kernel mass below which a grid point is considered unsupported.
pub const MIN_KERNEL_MASS: f64 = 1e-8;

const MOMENTS: usize = 9;
const DAY_CHUNK: usize = 16;

/// Standardized curve values at one day's observed demands.
#[derive(Debug, Clone, PartialEq)]
pub struct DayProducts {
    pub day_index: u32,
    pub demands: Vec<f64>,
    pub values: Vec<f64>,
}

/// Smoothed covariance on an equidistant grid; `values` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSurface {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl CovarianceSurface {
    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }
}

#[inline]
fn epanechnikov(t: f64) -> f64 {
    if t.abs() < 1.0 {
        0.75 * (1.0 - t * t)
    } else {
        0.0
    }
}

/// Kernel weights of one demand against a contiguous run of grid nodes.
struct PointKernel {
    first: usize,
    weight: Vec<f64>,
    offset: Vec<f64>,
}

impl PointKernel {
    fn new(grid: &Grid, h: f64, u: f64) -> Self {
        let n = grid.len();
        let dx = grid.spacing();
        let lo = ((u - h - grid.lo()) / dx).ceil().max(0.0) as usize;
        let hi = (((u + h - grid.lo()) / dx).floor().max(0.0) as usize).min(n - 1);
        let mut weight = Vec::new();
        let mut offset = Vec::new();
        let first = lo.min(hi);
        for g in first..=hi {
            let t = (u - grid.point(g)) / h;
            weight.push(epanechnikov(t));
            offset.push(t);
        }
        Self {
            first,
            weight,
            offset,
        }
    }

    fn last(&self) -> usize {
        self.first + self.weight.len() - 1
    }
}

/// Moment sums of one day on the square block `[first, first + m)^2`.
pub(crate) struct DayBlock {
    first: usize,
    m: usize,
    data: Vec<f64>,
}

impl DayBlock {
    fn compute(grid: &Grid, h: f64, day: &DayProducts) -> Self {
        let kernels: Vec<PointKernel> = day
            .demands
            .iter()
            .map(|&u| PointKernel::new(grid, h, u))
            .collect();
        let first = kernels.iter().map(|k| k.first).min().unwrap_or(0);
        let last = kernels.iter().map(|k| k.last()).max().unwrap_or(0);
        let m = last + 1 - first;
        // Column aggregates over all points: sum k, k d, k d^2, k z, k z d.
        let mut cols = vec![[0.0f64; 5]; m];
        for (pk, &z) in kernels.iter().zip(&day.values) {
            for (o, (&k, &d)) in pk.weight.iter().zip(&pk.offset).enumerate() {
                let c = &mut cols[pk.first + o - first];
                c[0] += k;
                c[1] += k * d;
                c[2] += k * d * d;
                c[3] += k * z;
                c[4] += k * z * d;
            }
        }
        let mut data = vec![0.0; m * m * MOMENTS];
        for (pk, &zi) in kernels.iter().zip(&day.values) {
            for (oi, (&a, &du)) in pk.weight.iter().zip(&pk.offset).enumerate() {
                if a == 0.0 {
                    continue;
                }
                let row = pk.first + oi - first;
                for (col, c) in cols.iter().enumerate() {
                    let mut c = *c;
                    // Remove this point's own contribution (pairs i != j).
                    let g = col + first;
                    if g >= pk.first && g <= pk.last() {
                        let o = g - pk.first;
                        let (k, d) = (pk.weight[o], pk.offset[o]);
                        c[0] -= k;
                        c[1] -= k * d;
                        c[2] -= k * d * d;
                        c[3] -= k * zi;
                        c[4] -= k * zi * d;
                    }
                    if c[0] == 0.0 {
                        continue;
                    }
                    let cell = &mut data[(row * m + col) * MOMENTS..(row * m + col + 1) * MOMENTS];
                    cell[0] += a * c[0];
                    cell[1] += a * du * c[0];
                    cell[2] += a * c[1];
                    cell[3] += a * du * du * c[0];
                    cell[4] += a * du * c[1];
                    cell[5] += a * c[2];
                    cell[6] += a * zi * c[3];
                    cell[7] += a * zi * du * c[3];
                    cell[8] += a * zi * c[4];
                }
            }
        }
        Self { first, m, data }
    }

    fn cell(&self, i: usize, j: usize) -> Option<&[f64]> {
        if i < self.first || j < self.first || i >= self.first + self.m || j >= self.first + self.m
        {
            return None;
        }
        let (r, c) = (i - self.first, j - self.first);
        let at = (r * self.m + c) * MOMENTS;
        Some(&self.data[at..at + MOMENTS])
    }

    fn add_into(&self, n: usize, total: &mut [f64]) {
        for r in 0..self.m {
            for c in 0..self.m {
                let src = (r * self.m + c) * MOMENTS;
                let dst = ((r + self.first) * n + c + self.first) * MOMENTS;
                for k in 0..MOMENTS {
                    total[dst + k] += self.data[src + k];
                }
            }
        }
    }
}

/// Accumulated moment sums over a set of days at one bandwidth.
pub(crate) struct MomentSums {
    grid: Grid,
    bandwidth: f64,
    data: Vec<f64>,
}

impl MomentSums {
    /// Sums over all days; chunked in fixed day order so the result does
    /// not depend on the thread count.
    pub(crate) fn accumulate(grid: &Grid, bandwidth: f64, days: &[DayProducts]) -> Self {
        let n = grid.len();
        let partials: Vec<Vec<f64>> = days
            .par_chunks(DAY_CHUNK)
            .map(|chunk| {
                let mut acc = vec![0.0; n * n * MOMENTS];
                for d in chunk {
                    DayBlock::compute(grid, bandwidth, d).add_into(n, &mut acc);
                }
                acc
            })
            .collect();
        let mut data = vec![0.0; n * n * MOMENTS];
        for p in partials {
            for (a, b) in data.iter_mut().zip(p) {
                *a += b;
            }
        }
        Self {
            grid: grid.clone(),
            bandwidth,
            data,
        }
    }

    pub(crate) fn day_block(&self, day: &DayProducts) -> DayBlock {
        DayBlock::compute(&self.grid, self.bandwidth, day)
    }

    fn cell(&self, i: usize, j: usize) -> [f64; MOMENTS] {
        let at = (i * self.grid.len() + j) * MOMENTS;
        let mut out = [0.0; MOMENTS];
        out.copy_from_slice(&self.data[at..at + MOMENTS]);
        out
    }

    /// Moment sums at `(i, j)` with `removed` taken out.
    fn cell_without(&self, i: usize, j: usize, removed: Option<&DayBlock>) -> [f64; MOMENTS] {
        let mut s = self.cell(i, j);
        if let Some(d) = removed.and_then(|b| b.cell(i, j)) {
            for (a, b) in s.iter_mut().zip(d) {
                *a -= b;
            }
        }
        s
    }

    fn no_mass(&self, i: usize, j: usize) -> Error {
        Error::NoKernelMass {
            u: self.grid.point(i),
            v: self.grid.point(j),
            bandwidth: self.bandwidth,
        }
    }

    /// Smoothed surface, optionally leaving one day's block out.
    pub(crate) fn surface(&self, removed: Option<&DayBlock>) -> Result<CovarianceSurface> {
        let n = self.grid.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = solve_cell(&self.cell_without(i, j, removed))
                    .ok_or_else(|| self.no_mass(i, j))?;
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let m = 0.5 * (values[i * n + j] + values[j * n + i]);
                values[i * n + j] = m;
                values[j * n + i] = m;
            }
        }
        Ok(CovarianceSurface {
            grid: self.grid.clone(),
            values,
            bandwidth: self.bandwidth,
        })
    }
}

/// Intercept of the local-linear fit; local constant when the design is
/// nearly singular; `None` without kernel mass.
fn solve_cell(s: &[f64; MOMENTS]) -> Option<f64> {
    if !(s[0] >= MIN_KERNEL_MASS) {
        return None;
    }
    let constant = s[6] / s[0];
    if !(s[3] > 0.0 && s[5] > 0.0) {
        return Some(constant);
    }
    let d = Vector3::new(1.0 / s[0].sqrt(), 1.0 / s[3].sqrt(), 1.0 / s[5].sqrt());
    let m = Matrix3::new(s[0], s[1], s[2], s[1], s[3], s[4], s[2], s[4], s[5]);
    let scaled = Matrix3::from_fn(|r, c| m[(r, c)] * d[r] * d[c]);
    if scaled.determinant() < 1e-10 {
        return Some(constant);
    }
    let rhs = Vector3::new(s[6] * d[0], s[7] * d[1], s[8] * d[2]);
    match scaled.lu().solve(&rhs) {
        Some(y) if y[0].is_finite() => Some(y[0] * d[0]),
        _ => Some(constant),
    }
}

/// Surface from precomputed products at a fixed bandwidth.
pub fn smooth_products(
    products: &[DayProducts],
    grid: &Grid,
    bandwidth: f64,
) -> Result<CovarianceSurface> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if grid.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "covariance grid needs n >= 10, got {}",
            grid.len()
        )));
    }
    MomentSums::accumulate(grid, bandwidth, products).surface(None)
}

/// `count` log-spaced bandwidths over `[0.02, 0.5] * (B - A)`.
pub fn default_bandwidth_grid(span: Domain, count: usize) -> Vec<f64> {
    log_space(0.02 * span.width(), 0.5 * span.width(), count.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthCv {
    pub bandwidth: f64,
    /// `(bandwidth, summed squared leave-one-curve-out error, unsupported pairs)`.
    pub scores: Vec<(f64, f64, usize)>,
}

struct LeaveOut<'a> {
    sums: &'a MomentSums,
    block: DayBlock,
    cache: Vec<f64>,
}

impl LeaveOut<'_> {
    /// Leave-out estimate at grid node `(i, j)`; NaN when unsupported.
    fn node(&mut self, i: usize, j: usize) -> f64 {
        let n = self.sums.grid.len();
        let at = i * n + j;
        if self.cache[at].is_infinite() {
            self.cache[at] =
                solve_cell(&self.sums.cell_without(i, j, Some(&self.block))).unwrap_or(f64::NAN);
        }
        self.cache[at]
    }

    fn bilinear(&mut self, u: f64, v: f64) -> f64 {
        let g = &self.sums.grid;
        let locate = |x: f64| {
            let p = ((x - g.lo()) / g.spacing()).clamp(0.0, (g.len() - 1) as f64);
            let i = (p.floor() as usize).min(g.len() - 2);
            (i, p - i as f64)
        };
        let (i, fu) = locate(u);
        let (j, fv) = locate(v);
        let v00 = self.node(i, j);
        let v10 = self.node(i + 1, j);
        let v01 = self.node(i, j + 1);
        let v11 = self.node(i + 1, j + 1);
        (1.0 - fu) * ((1.0 - fv) * v00 + fv * v01) + fu * ((1.0 - fv) * v10 + fv * v11)
    }
}

/// Leave-one-curve-out selection of the kernel bandwidth.
///
/// A candidate whose leave-out surfaces leave some pair unsupported is only
/// chosen when every candidate does; then the fewest unsupported pairs wins.
pub fn bandwidth_cv(
    products: &[DayProducts],
    grid: &Grid,
    candidates: &[f64],
) -> Result<BandwidthCv> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("empty bandwidth grid".into()));
    }
    if products.len() < 2 {
        return Err(Error::InsufficientData {
            what: "curves for bandwidth cross-validation",
            needed: 2,
            got: products.len(),
        });
    }
    let n = grid.len();
    let mut scores = Vec::with_capacity(candidates.len());
    for &h in candidates {
        let sums = MomentSums::accumulate(grid, h, products);
        let per_day: Vec<(f64, usize)> = products
            .par_iter()
            .map(|day| {
                let mut lo = LeaveOut {
                    sums: &sums,
                    block: sums.day_block(day),
                    cache: vec![f64::INFINITY; n * n],
                };
                let mut sse = 0.0;
                let mut missing = 0;
                for (i, (&ui, &zi)) in day.demands.iter().zip(&day.values).enumerate() {
                    for (j, (&uj, &zj)) in day.demands.iter().zip(&day.values).enumerate() {
                        if i == j {
                            continue;
                        }
                        let pred = lo.bilinear(ui, uj);
                        if pred.is_nan() {
                            missing += 1;
                        } else {
                            sse += (zi * zj - pred).powi(2);
                        }
                    }
                }
                (sse, missing)
            })
            .collect();
        let (sse, missing) = per_day
            .iter()
            .fold((0.0, 0), |(s, m), &(a, b)| (s + a, m + b));
        scores.push((h, sse, missing));
    }
    let best = scores
        .iter()
        .min_by(|a, b| a.2.cmp(&b.2).then(a.1.total_cmp(&b.1)))
        .copied()
        .expect("nonempty candidates");
    if best.2 > 0 {
        warn!(
            "every bandwidth candidate leaves pairs unsupported; using h = {} ({} pairs)",
            best.0, best.2
        );
    }
    Ok(BandwidthCv {
        bandwidth: best.0,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_products(c: f64, days: usize) -> Vec<DayProducts> {
        (0..days)
            .map(|t| {
                let demands: Vec<f64> = (0..24)
                    .map(|h| h as f64 / 23.0 + 1e-3 * (t as f64 * 0.37).sin())
                    .map(|u| u.clamp(0.0, 1.0))
                    .collect();
                DayProducts {
                    day_index: t as u32,
                    values: vec![c; demands.len()],
                    demands,
                }
            })
            .collect()
    }

    #[test]
    fn constant_products_give_constant_surface() {
        let grid = Grid::new(0.0, 1.0, 12).unwrap();
        let s = smooth_products(&const_products(0.7, 5), &grid, 0.2).unwrap();
        for v in &s.values {
            assert!((v - 0.49).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn symmetric_output() {
        let grid = Grid::new(0.0, 1.0, 15).unwrap();
        let days: Vec<DayProducts> = (0..8)
            .map(|t| {
                let demands: Vec<f64> = (0..24).map(|h| ((h * 5 + t) % 24) as f64 / 23.0).collect();
                let values = demands.iter().map(|u| 1.0 + u * (t as f64 + 1.0)).collect();
                DayProducts {
                    day_index: t,
                    demands,
                    values,
                }
            })
            .collect();
        let s = smooth_products(&days, &grid, 0.15).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                assert!((s.at(i, j) - s.at(j, i)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn unsupported_point_is_error() {
        let grid = Grid::new(0.0, 1.0, 10).unwrap();
        let days = vec![DayProducts {
            day_index: 1,
            demands: vec![0.0, 0.1, 0.2, 0.3],
            values: vec![1.0; 4],
        }];
        let err = smooth_products(&days, &grid, 0.05).unwrap_err();
        assert!(matches!(err, Error::NoKernelMass { .. }), "{err}");
    }

    #[test]
    fn downdate_equals_recompute() {
        let grid = Grid::new(0.0, 1.0, 12).unwrap();
        let days: Vec<DayProducts> = (0..7)
            .map(|t| {
                let demands: Vec<f64> = (0..24)
                    .map(|h| ((h * 5 + t * 2) % 24) as f64 / 23.0)
                    .collect();
                let values = demands.iter().map(|u| (3.0 * u + t as f64).sin()).collect();
                DayProducts {
                    day_index: t as u32,
                    demands,
                    values,
                }
            })
            .collect();
        let sums = MomentSums::accumulate(&grid, 0.3, &days);
        let block = sums.day_block(&days[3]);
        let down = sums.surface(Some(&block)).unwrap();
        let mut rest = days.clone();
        rest.remove(3);
        let direct = smooth_products(&rest, &grid, 0.3).unwrap();
        for (a, b) in down.values.iter().zip(&direct.values) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}
