//! Invariants checked by `evaluate --self-check`.

use ffm::baselines::{hamilton_filter, MrModel};
use ffm::evaluate::{
    granger_test, interval_score, rmse, trimmed_mean, EvaluationReport, StudyConfig,
};
use ffm::ingest::Dataset;
use ffm::simulate::{generate_regime_switch, FactorFamily, FfmGenerator, RegimeParams};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &str, passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        name: name.to_string(),
        passed,
        detail: detail.into(),
    }
}

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let p = RegimeParams {
        drift: 0.0,
        alpha: 0.0,
        spike_mean: 0.0,
        sd_moderate: 1.0,
        sd_spike: 1.0,
        q: 1.0,
        p: 0.5,
    };
    generate_regime_switch(&p, n, seed).0
}

fn interval_scores() -> Outcome {
    let got = [
        interval_score(0.0, 2.0, 1.0, 0.05),
        interval_score(0.0, 2.0, 3.0, 0.05),
        interval_score(0.0, 2.0, 2.0, 0.05),
    ];
    let want = [2.0, 42.0, 2.0];
    let ok = got
        .iter()
        .zip(want)
        .all(|(g, w)| matches!(g, Ok(v) if (v - w).abs() < 1e-12));
    outcome("interval_score examples", ok, format!("{got:?}"))
}

fn rmse_checks() -> Outcome {
    let base = rmse(&[0.0, 0.0], &[3.0, 4.0]);
    let scaled = rmse(&[0.0, 0.0], &[-6.0, -8.0]);
    let ok = matches!((&base, &scaled), (Ok(a), Ok(b)) if (a - 5.0 / 2f64.sqrt()).abs() < 1e-12 && (b - 2.0 * a).abs() < 1e-12);
    outcome(
        "rmse example and scale equivariance",
        ok,
        format!("{base:?} {scaled:?}"),
    )
}

fn trimmed() -> Outcome {
    let v = trimmed_mean(&[1.0, 2.0, 3.0, 4.0, 100.0], 0.2);
    outcome(
        "trimmed mean example",
        matches!(v, Ok(x) if (x - 3.0).abs() < 1e-12),
        format!("{v:?}"),
    )
}

fn filter_sums() -> Outcome {
    let p = RegimeParams {
        drift: 0.5,
        alpha: 0.6,
        spike_mean: 4.0,
        sd_moderate: 0.2,
        sd_spike: 1.0,
        q: 0.95,
        p: 0.5,
    };
    let (y, _) = generate_regime_switch(&p, 2000, 7);
    let m = MrModel {
        drift: p.drift,
        alpha: p.alpha,
        spike_mean: p.spike_mean,
        var_moderate: p.sd_moderate.powi(2),
        var_spike: p.sd_spike.powi(2),
        trans_q: p.q,
        trans_p: p.p,
        loglik: 0.0,
        n_obs: y.len(),
    };
    let out = hamilton_filter(&m, &y);
    let worst = out
        .filtered
        .iter()
        .chain(&out.predicted)
        .map(|x| (x[0] + x[1] - 1.0).abs())
        .fold(0.0, f64::max);
    outcome(
        "regime filter probabilities sum to one",
        worst <= 1e-12,
        format!("max deviation {worst:e}"),
    )
}

fn granger_alternative() -> Outcome {
    let x = noise(500, 11);
    let e = noise(500, 12);
    let y: Vec<f64> = (0..500)
        .map(|t| if t > 0 { 0.8 * x[t - 1] } else { 0.0 } + e[t])
        .collect();
    match granger_test(&y, &x, 1) {
        Ok(r) => outcome(
            "granger detects a lagged driver",
            r[0].p_value < 1e-3,
            format!("p = {:e}", r[0].p_value),
        ),
        Err(e) => outcome("granger detects a lagged driver", false, e.to_string()),
    }
}

fn generator() -> Outcome {
    let g = FfmGenerator {
        k: 1,
        factors: FactorFamily::Constant,
        full_domains: true,
        noise_sd: 0.0,
        ..Default::default()
    };
    let (a, b) = match (g.generate(40), g.generate(40)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            return outcome(
                "generator determinism and rank-one prices",
                false,
                e.to_string(),
            )
        }
    };
    let flat = a.0.days.iter().zip(&a.1.scores).all(|(d, s)| {
        let level = s[0] / (g.span[1] - g.span[0]).sqrt();
        d.observations
            .iter()
            .all(|o| (o.price - level).abs() < 1e-9 * level.abs().max(1.0))
    });
    outcome(
        "generator determinism and rank-one prices",
        a == b && flat,
        format!("identical: {}, flat prices: {flat}", a == b),
    )
}

pub fn run_suite() -> Vec<Outcome> {
    vec![
        interval_scores(),
        rmse_checks(),
        trimmed(),
        filter_sums(),
        granger_alternative(),
        generator(),
    ]
}

/// Invariants of a finished study on `ds`.
pub fn check_report(
    ds: &Dataset,
    learning_end: u32,
    cfg: &StudyConfig,
    report: &EvaluationReport,
) -> Vec<Outcome> {
    let last = ds.last_index().unwrap_or(0);
    let min_h = cfg.horizons.iter().copied().min().unwrap_or(1) as u32;
    let origins: Vec<u32> = ds
        .days
        .iter()
        .map(|d| d.day_index)
        .filter(|&d| d >= learning_end && d + min_h <= last)
        .collect();
    let mismatched: Vec<String> = cfg
        .horizons
        .iter()
        .filter_map(|&h| {
            let want = origins
                .iter()
                .filter(|&&d| ds.day(d + h as u32).is_some())
                .count();
            let got = report.n_origins.get(&h).copied().unwrap_or(0);
            (want != got).then(|| format!("h={h}: {got} vs {want}"))
        })
        .collect();
    let nonfinite = report.rows.iter().filter(|r| !r.value.is_finite()).count();
    let unbracketed = report
        .records
        .iter()
        .flat_map(|r| &r.hourly)
        .filter(|(_, f, lo, hi, _)| !(lo <= f && f <= hi))
        .count();
    vec![
        outcome(
            "origin counts per horizon",
            mismatched.is_empty(),
            mismatched.join("; "),
        ),
        outcome(
            "report metrics finite",
            nonfinite == 0,
            format!("{nonfinite} non-finite values"),
        ),
        outcome(
            "hourly forecasts inside their intervals",
            unbracketed == 0,
            format!("{unbracketed} violations"),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for o in run_suite() {
            assert!(o.passed, "{}: {}", o.name, o.detail);
        }
    }
}
