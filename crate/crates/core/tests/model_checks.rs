//! Monte Carlo and estimator-level checks that tie the modules together.

use prizecorr::inference::{log_likelihood, mle, posterior};
use prizecorr::normal_core::rank_to_z;
use prizecorr::simulation::{
    ScanRange, SyntheticShape, overlap_experiment, profile_likelihood_scan, roc_and_phi, sample_replication,
    scan_argmax, synthetic_dataset,
};
use prizecorr::tail_model::tail_exceedance;
use prizecorr::{Coupling, SimConfig, TailCondition};

const NOBEL: SyntheticShape = SyntheticShape {
    pool_size: 2887,
    winner_count: 25,
    list_cutoff_rank: None,
};

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn gaussian(pool: usize, m: usize, r: f64, reps: usize, seed: u64) -> SimConfig {
    SimConfig {
        pool_size: pool,
        winner_count: m,
        r,
        coupling: Coupling::Gaussian,
        replications: reps,
        seed,
    }
}

fn binom_pmf(n: u64, k: u64, p: f64) -> f64 {
    let ln_choose: f64 = (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum();
    (ln_choose + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

fn overlap_p(r: f64) -> f64 {
    let x_c = rank_to_z(25, 2887).unwrap();
    tail_exceedance(x_c, &TailCondition::new(r, x_c).unwrap()).unwrap()
}

#[test]
fn simulated_overlap_rate_matches_exceedance() {
    let result = overlap_experiment(&gaussian(2887, 25, 0.63, 10_000, 5)).unwrap();
    let rates: Vec<f64> = result
        .histogram
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| std::iter::repeat_n(k as f64 / 25.0, c as usize))
        .collect();
    let (mean, sd) = mean_sd(&rates);
    let se = sd / (rates.len() as f64).sqrt();
    let p = overlap_p(0.63);
    assert!(
        (mean - p).abs() <= 3.0 * se,
        "simulated {mean}, exceedance {p}, 3 SE {}",
        3.0 * se
    );
}

#[test]
fn scan_fractions_match_binomial_prediction() {
    let range = ScanRange {
        low: 0.55,
        high: 0.70,
        step: 0.05,
    };
    let reps = 10_000;
    let points = profile_likelihood_scan(2887, 25, 5, range, reps, 9).unwrap();
    let mut misses = Vec::new();
    for pt in &points {
        let predicted = binom_pmf(25, 5, overlap_p(pt.r));
        let se = (predicted * (1.0 - predicted) / reps as f64).sqrt();
        if (pt.fraction_matching - predicted).abs() > 3.0 * se {
            misses.push(format!(
                "r={:.2}: simulated {:.4} vs binomial {predicted:.4}",
                pt.r, pt.fraction_matching
            ));
        }
    }
    assert!(misses.is_empty(), "beyond 3 SE: {}", misses.join("; "));
}

#[test]
fn scan_peak_agrees_with_binomial_peak() {
    let range = ScanRange {
        low: 0.50,
        high: 0.75,
        step: 0.05,
    };
    let points = profile_likelihood_scan(2887, 25, 5, range, 10_000, 9).unwrap();
    let simulated = scan_argmax(&points).unwrap().r;
    let binomial = points
        .iter()
        .map(|pt| (pt.r, binom_pmf(25, 5, overlap_p(pt.r))))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    assert!(
        (simulated - binomial).abs() <= 0.05 + 1e-9,
        "simulated {simulated}, binomial {binomial}"
    );
}

#[test]
fn mixture_gap_approaches_r_as_sieve_grows() {
    let r = 0.4;
    let mean_gap = |n: usize, m: usize, reps: u64| {
        let cfg = SimConfig {
            pool_size: n,
            winner_count: m,
            r,
            coupling: Coupling::Mixture,
            replications: reps as usize,
            seed: 17,
        };
        let gaps: Vec<f64> = (0..reps)
            .map(|rep| {
                roc_and_phi(&sample_replication(&cfg, rep).unwrap(), m, m)
                    .unwrap()
                    .tpr_minus_fpr
            })
            .collect();
        mean_sd(&gaps)
    };
    let (small, small_sd) = mean_gap(10_000, 100, 200);
    let (large, large_sd) = mean_gap(10_000, 1000, 200);
    let se = (small_sd.powi(2) / 200.0 + large_sd.powi(2) / 200.0).sqrt();
    assert!(
        small < r && large < r,
        "gap should approach r from below: {small}, {large}"
    );
    assert!(
        large - small > 2.0 * se,
        "no convergence: M=100 {small}, M=1000 {large}"
    );
    assert!((large - r).abs() < 0.015, "M=1000 mean {large}");
}

#[test]
fn mle_recovers_r_in_nobel_shape() {
    let hits = (0..100)
        .filter(|&rep| {
            let ds = synthetic_dataset(NOBEL, 0.65, 42, rep).unwrap();
            (mle(&ds, 0.001).unwrap().r_hat - 0.65).abs() <= 0.10
        })
        .count();
    assert!(hits >= 90, "only {hits}/100 within ±0.10");
}

#[test]
fn estimator_spread_shrinks_with_sample_size() {
    let mut spreads = Vec::new();
    for scale in [1usize, 10, 100] {
        let shape = SyntheticShape {
            pool_size: 2887 * scale,
            winner_count: 25 * scale,
            list_cutoff_rank: None,
        };
        let estimates: Vec<f64> = (0..30)
            .map(|rep| {
                mle(&synthetic_dataset(shape, 0.65, 8, rep).unwrap(), 0.001)
                    .unwrap()
                    .r_hat
            })
            .collect();
        spreads.push(mean_sd(&estimates).1);
    }
    assert!(
        spreads[0] > spreads[1] && spreads[1] > spreads[2],
        "spreads {spreads:?}"
    );
}

#[test]
fn posterior_interval_width_and_coverage() {
    let mut widths = Vec::new();
    let mut covered = 0;
    for rep in 0..100 {
        let ds = synthetic_dataset(NOBEL, 0.65, 99, rep).unwrap();
        let (_, report) = posterior(&ds, 0.001, 0.95).unwrap();
        let ci = report.interval.unwrap();
        assert!(ci.low <= report.r_hat && report.r_hat <= ci.high);
        widths.push(ci.high - ci.low);
        if ci.low <= 0.65 && 0.65 <= ci.high {
            covered += 1;
        }
    }
    let (mean_width, _) = mean_sd(&widths);
    assert!((0.15..=0.25).contains(&mean_width), "mean width {mean_width}");
    assert!(covered >= 88, "coverage {covered}/100");
}

#[test]
fn likelihood_is_continuous_in_r() {
    let ds = synthetic_dataset(
        SyntheticShape {
            list_cutoff_rank: Some(200),
            ..NOBEL
        },
        0.6,
        3,
        0,
    )
    .unwrap();
    let h = 1e-7;
    for i in 0..99 {
        let r = f64::from(i) * 0.01 + 0.005;
        let jump = (log_likelihood(&ds, r + h).unwrap() - log_likelihood(&ds, r).unwrap()).abs();
        assert!(jump < 1e-3, "jump {jump} at r = {r}");
    }
}
