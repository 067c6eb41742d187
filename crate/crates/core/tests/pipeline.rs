use ffm::fpca::{
    eigendecompose, estimate_covariance_surface, standardize_curves, Bandwidth, BasisSystem,
    SmoothedSample, StandardizedCurve,
};
use ffm::ingest::Dataset;
use ffm::simulate::FfmGenerator;
use ffm::smoothing::SmoothingConfig;

const BANDWIDTH: f64 = 3000.0;

fn basis(ds: &Dataset, standardize: bool) -> BasisSystem {
    let sample = SmoothedSample::new(ds, &SmoothingConfig::default()).unwrap();
    let curves = if standardize {
        standardize_curves(&sample.hat, &sample.hat)
    } else {
        sample
            .hat
            .iter()
            .map(|c| StandardizedCurve {
                curve: c.clone(),
                scale: 1.0,
            })
            .collect()
    };
    let surface = estimate_covariance_surface(
        &curves,
        &sample.day_refs(),
        50,
        Bandwidth::Fixed(BANDWIDTH),
        0,
    )
    .unwrap();
    eigendecompose(&surface, 2).unwrap()
}

/// L2 distance between sign-matched functions of two bases on one grid.
fn distances(a: &BasisSystem, b: &BasisSystem) -> Vec<f64> {
    let w = a.grid.trapezoid_weights();
    a.functions
        .iter()
        .zip(&b.functions)
        .map(|(f, g)| {
            let dot: f64 = f.iter().zip(g).zip(&w).map(|((x, y), w)| x * y * w).sum();
            let s = dot.signum();
            f.iter()
                .zip(g)
                .zip(&w)
                .map(|((x, y), w)| (x - s * y).powi(2) * w)
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn scaled_day(ds: &Dataset, pos: usize, factor: f64) -> Dataset {
    let mut out = ds.clone();
    for o in &mut out.days[pos].observations {
        o.price *= factor;
    }
    out
}

#[test]
fn one_day_rescaled_leaves_standardized_basis_unchanged() {
    let g = FfmGenerator {
        full_domains: true,
        ..Default::default()
    };
    let (ds, _) = g.generate(200).unwrap();
    let scaled = scaled_day(&ds, 17, 100.0);
    let d = distances(&basis(&ds, true), &basis(&scaled, true));
    assert!(d.iter().all(|&x| x < 0.02), "{d:?}");
}

#[test]
fn one_day_rescaled_moves_raw_basis() {
    let g = FfmGenerator {
        full_domains: true,
        ..Default::default()
    };
    let (ds, _) = g.generate(200).unwrap();
    let scaled = scaled_day(&ds, 17, 100.0);
    let d = distances(&basis(&ds, false), &basis(&scaled, false));
    assert!(d.iter().any(|&x| x > 0.02), "{d:?}");
}
