//! Orthonormal basis systems: discretized eigendecomposition of a smoothed
//! covariance surface and VARIMAX rotation.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::covariance::CovarianceSurface;
use crate::quadrature::Grid;
use crate::SCHEMA_VERSION;

/// `K` functions sampled on a common grid, orthonormal under the trapezoid
/// rule of that grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSystem {
    pub schema_version: u32,
    pub grid: Grid,
    pub functions: Vec<Vec<f64>>,
    /// Leading eigenvalues before any rotation, descending.
    pub eigenvalues: Vec<f64>,
    /// Share of total variance carried by each (possibly rotated) function.
    pub variance_shares: Vec<f64>,
    /// `rotation[j][k]`: weight of eigenfunction `j` in function `k`.
    pub rotation: Vec<Vec<f64>>,
    /// Trace of the discretized operator.
    pub total_variance: f64,
}

impl BasisSystem {
    pub fn k(&self) -> usize {
        self.functions.len()
    }

    pub fn cumulative_share(&self) -> f64 {
        self.variance_shares.iter().sum()
    }

    /// All basis functions at `u` (linear interpolation); errors outside the grid.
    pub fn evaluate(&self, u: f64) -> Result<Vec<f64>> {
        if !self.grid.contains(u) {
            return Err(Error::OutsideDomain {
                value: u,
                lo: self.grid.lo(),
                hi: self.grid.hi(),
            });
        }
        Ok(self.evaluate_clamped(u))
    }

    pub fn evaluate_clamped(&self, u: f64) -> Vec<f64> {
        self.functions
            .iter()
            .map(|f| self.grid.interpolate_clamped(f, u))
            .collect()
    }

    /// Trapezoid inner-product matrix of the functions on the full grid.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let w = self.grid.trapezoid_weights();
        let k = self.k();
        let mut g = vec![vec![0.0; k]; k];
        for a in 0..k {
            for b in 0..k {
                g[a][b] = (0..w.len())
                    .map(|i| w[i] * self.functions[a][i] * self.functions[b][i])
                    .sum();
            }
        }
        g
    }

    pub fn check_schema(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        Ok(())
    }
}

/// `∫f > 0`, or the largest-magnitude value positive when the integral vanishes.
fn needs_flip(f: &[f64], w: &[f64]) -> bool {
    let integral: f64 = f.iter().zip(w).map(|(a, b)| a * b).sum();
    let scale: f64 = f.iter().zip(w).map(|(a, b)| a.abs() * b).sum();
    if integral.abs() > 1e-12 * scale {
        integral < 0.0
    } else {
        let m = f
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        m < 0.0
    }
}

/// All eigenpairs of the trapezoid-weighted surface, descending, with
/// eigenvectors mapped back to function values (unit trapezoid norm).
pub(crate) fn eigenpairs(surface: &CovarianceSurface) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = surface.n();
    let w = surface.grid.trapezoid_weights();
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let m = DMatrix::from_fn(n, n, |i, j| sw[i] * surface.at(i, j) * sw[j]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let functions = order
        .iter()
        .map(|&c| {
            let mut f: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, c)] / sw[i]).collect();
            if needs_flip(&f, &w) {
                f.iter_mut().for_each(|x| *x = -*x);
            }
            f
        })
        .collect();
    (values, functions)
}

pub(crate) fn basis_from_eigenpairs(
    grid: &Grid,
    values: &[f64],
    functions: &[Vec<f64>],
    k: usize,
) -> Result<BasisSystem> {
    if k == 0 || k > values.len() {
        return Err(Error::InvalidArgument(format!(
            "K must lie in 1..={}, got {k}",
            values.len()
        )));
    }
    let lead = values[0];
    let rank = values
        .iter()
        .take_while(|&&l| lead > 0.0 && l >= 1e-12 * lead)
        .count();
    if rank < k {
        return Err(Error::RankDeficient { requested: k, rank });
    }
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical(format!(
            "covariance operator has non-positive trace {total:e}"
        )));
    }
    Ok(BasisSystem {
        schema_version: SCHEMA_VERSION,
        grid: grid.clone(),
        functions: functions[..k].to_vec(),
        eigenvalues: values[..k].to_vec(),
        variance_shares: values[..k].iter().map(|l| l / total).collect(),
        rotation: identity(k),
        total_variance: total,
    })
}

fn identity(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Leading `k` eigenfunctions of the smoothed covariance operator.
pub fn eigendecompose(surface: &CovarianceSurface, k: usize) -> Result<BasisSystem> {
    let (values, functions) = eigenpairs(surface);
    basis_from_eigenpairs(&surface.grid, &values, &functions, k)
}

fn varimax_criterion(l: &[Vec<f64>]) -> f64 {
    l.iter()
        .map(|col| {
            let n = col.len() as f64;
            let m2 = col.iter().map(|x| x * x).sum::<f64>() / n;
            let m4 = col.iter().map(|x| x.powi(4)).sum::<f64>() / n;
            m4 - m2 * m2
        })
        .sum()
}

/// Orthogonal rotation `R` maximizing the raw VARIMAX criterion of the
/// columns `loadings`, by pairwise plane rotations.
pub fn varimax_rotation(loadings: &[Vec<f64>], tol: f64, max_sweeps: usize) -> Vec<Vec<f64>> {
    let k = loadings.len();
    let mut l = loadings.to_vec();
    let mut r = identity(k);
    if k < 2 {
        return r;
    }
    let n = l[0].len() as f64;
    let mut crit = varimax_criterion(&l);
    for _ in 0..max_sweeps {
        let mut max_angle = 0.0f64;
        for p in 0..k - 1 {
            for q in p + 1..k {
                let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
                for (x, y) in l[p].iter().zip(&l[q]) {
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    a += u;
                    b += v;
                    c += u * u - v * v;
                    d += 2.0 * u * v;
                }
                let num = d - 2.0 * a * b / n;
                let den = c - (a * a - b * b) / n;
                let theta = 0.25 * num.atan2(den);
                if theta.abs() < 1e-15 {
                    continue;
                }
                max_angle = max_angle.max(theta.abs());
                let (s, co) = theta.sin_cos();
                for i in 0..l[p].len() {
                    let (x, y) = (l[p][i], l[q][i]);
                    l[p][i] = co * x + s * y;
                    l[q][i] = -s * x + co * y;
                }
                for row in r.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = co * x + s * y;
                    row[q] = -s * x + co * y;
                }
            }
        }
        let next = varimax_criterion(&l);
        let change = (next - crit).abs();
        crit = next;
        if change <= tol * crit.abs().max(f64::MIN_POSITIVE) || max_angle < 1e-12 {
            break;
        }
    }
    r
}

/// VARIMAX-rotated copy of an unrotated basis. Rotated functions are ordered
/// by decreasing variance share and sign-normalized; `rotation` maps the
/// input eigenfunctions to the output functions.
pub fn varimax_rotate(basis: &BasisSystem) -> BasisSystem {
    let k = basis.k();
    if k < 2 {
        return basis.clone();
    }
    let r = varimax_rotation(&basis.functions, 1e-10, 1000);
    let n = basis.grid.len();
    let w = basis.grid.trapezoid_weights();
    let rotated: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            (0..n)
                .map(|i| (0..k).map(|j| basis.functions[j][i] * r[j][c]).sum())
                .collect()
        })
        .collect();
    let shares: Vec<f64> = (0..k)
        .map(|c| {
            (0..k)
                .map(|j| r[j][c] * r[j][c] * basis.eigenvalues[j])
                .sum::<f64>()
                / basis.total_variance
        })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| shares[b].total_cmp(&shares[a]));
    let mut functions = Vec::with_capacity(k);
    let mut rotation = vec![vec![0.0; k]; k];
    let mut variance_shares = Vec::with_capacity(k);
    for (new, &old) in order.iter().enumerate() {
        let mut f = rotated[old].clone();
        let sign = if needs_flip(&f, &w) { -1.0 } else { 1.0 };
        f.iter_mut().for_each(|x| *x *= sign);
        for j in 0..k {
            rotation[j][new] = sign * r[j][old];
        }
        functions.push(f);
        variance_shares.push(shares[old]);
    }
    BasisSystem {
        functions,
        variance_shares,
        rotation,
        ..basis.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn surface_from(grid: &Grid, values: Vec<f64>) -> CovarianceSurface {
        CovarianceSurface {
            grid: grid.clone(),
            values,
            bandwidth: 1.0,
        }
    }

    fn normalized(grid: &Grid, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let w = grid.trapezoid_weights();
        let v: Vec<f64> = grid.points().into_iter().map(f).collect();
        let norm = v.iter().zip(&w).map(|(a, b)| a * a * b).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect()
    }

    #[test]
    fn rank_one_surface() {
        let grid = Grid::new(0.0, 2.0, 41).unwrap();
        let phi = normalized(&grid, |u| 1.0 + u * u);
        let n = grid.len();
        let vals = (0..n * n).map(|c| phi[c / n] * phi[c % n]).collect();
        let b = eigendecompose(&surface_from(&grid, vals), 1).unwrap();
        assert!((b.eigenvalues[0] - 1.0).abs() < 1e-8);
        for (a, e) in b.functions[0].iter().zip(&phi) {
            assert!((a - e).abs() < 1e-8);
        }
        assert!(matches!(
            eigendecompose(
                &surface_from(&grid, (0..n * n).map(|c| phi[c / n] * phi[c % n]).collect()),
                2
            ),
            Err(Error::RankDeficient { rank: 1, .. })
        ));
    }

    fn random_psd(n: usize, seed: u64) -> (Grid, CovarianceSurface) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::new(0.0, 1.0, n).unwrap();
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let g = &a * a.transpose();
        let vals = (0..n * n).map(|c| g[(c / n, c % n)]).collect();
        (grid.clone(), surface_from(&grid, vals))
    }

    #[test]
    fn matches_dense_oracle() {
        // Oracle: generalized symmetric problem G W f = lambda f solved via
        // W^{1/2} G W^{1/2}, reassembled independently here.
        let (grid, s) = random_psd(30, 7);
        let n = 30;
        let w = grid.trapezoid_weights();
        let g = DMatrix::from_fn(n, n, |i, j| s.at(i, j));
        let b = eigendecompose(&s, 5).unwrap();
        for k in 0..5 {
            let f = &b.functions[k];
            // (G W f)_i = lambda f_i
            for i in 0..n {
                let lhs: f64 = (0..n).map(|j| g[(i, j)] * w[j] * f[j]).sum();
                assert!((lhs - b.eigenvalues[k] * f[i]).abs() < 1e-8 * b.eigenvalues[0]);
            }
        }
        let gram = b.gram();
        for a in 0..5 {
            for c in 0..5 {
                let e = if a == c { 1.0 } else { 0.0 };
                assert!((gram[a][c] - e).abs() < 1e-10);
            }
        }
        assert!(b.eigenvalues.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn sign_convention() {
        let (_, s) = random_psd(25, 3);
        let b = eigendecompose(&s, 4).unwrap();
        let w = b.grid.trapezoid_weights();
        for f in &b.functions {
            assert!(f.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() > 0.0);
        }
    }

    #[test]
    fn k_one_varimax_is_identity() {
        let (_, s) = random_psd(20, 1);
        let b = eigendecompose(&s, 1).unwrap();
        assert_eq!(varimax_rotate(&b), b);
    }

    #[test]
    fn varimax_recovers_simple_structure() {
        // Loadings built from two disjoint-support columns then mixed by a
        // known rotation: VARIMAX must undo the mix up to order and sign.
        let n = 40;
        let a: Vec<f64> = (0..n).map(|i| if i < 20 { 1.0 } else { 0.0 }).collect();
        let b: Vec<f64> = (0..n).map(|i| if i >= 20 { 1.0 } else { 0.0 }).collect();
        let t: f64 = 0.6;
        let mixed = vec![
            a.iter()
                .zip(&b)
                .map(|(x, y)| t.cos() * x - t.sin() * y)
                .collect::<Vec<_>>(),
            a.iter()
                .zip(&b)
                .map(|(x, y)| t.sin() * x + t.cos() * y)
                .collect::<Vec<_>>(),
        ];
        let r = varimax_rotation(&mixed, 1e-12, 1000);
        let col0: Vec<f64> = (0..n)
            .map(|i| mixed[0][i] * r[0][0] + mixed[1][i] * r[1][0])
            .collect();
        let zeros = col0.iter().filter(|x| x.abs() < 1e-8).count();
        assert_eq!(zeros, 20);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn rotation_preserves_orthonormality_and_span(seed in 0u64..10_000, k in 2usize..5) {
            let (_, s) = random_psd(24, seed);
            let b = eigendecompose(&s, k).unwrap();
            let r = varimax_rotate(&b);
            for (a, row) in r.gram().iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    let e = if a == c { 1.0 } else { 0.0 };
                    prop_assert!((v - e).abs() < 1e-6);
                }
            }
            for a in 0..k {
                for c in 0..k {
                    let rr: f64 = (0..k).map(|j| r.rotation[j][a] * r.rotation[j][c]).sum();
                    let e = if a == c { 1.0 } else { 0.0 };
                    prop_assert!((rr - e).abs() < 1e-10);
                }
            }
            // Projection of each original function onto the rotated span.
            let w = b.grid.trapezoid_weights();
            for f in &b.functions {
                let coef: Vec<f64> = r.functions.iter().map(|g| (0..w.len()).map(|i| w[i] * f[i] * g[i]).sum()).collect();
                let res: f64 = (0..w.len())
                    .map(|i| {
                        let p: f64 = coef.iter().zip(&r.functions).map(|(c, g)| c * g[i]).sum();
                        w[i] * (f[i] - p).powi(2)
                    })
                    .sum();
                prop_assert!(res.sqrt() < 1e-10);
            }
            let total: f64 = r.variance_shares.iter().sum();
            prop_assert!((total - b.cumulative_share()).abs() < 1e-10);
            prop_assert!(r.variance_shares.windows(2).all(|p| p[0] >= p[1]));
        }
    }
}
