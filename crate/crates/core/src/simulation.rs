//! Monte Carlo machinery: correlated (rating, score) pools, the top-M
//! overlap experiment and its profile scan over r, ROC points and the phi
//! coefficient, and synthetic winner-rank datasets for recovery studies.
//!
//! Every replication draws from its own ChaCha8 stream, selected with
//! `set_stream(replication index)` on a generator seeded from the config
//! seed. Results therefore do not depend on how rayon schedules work.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{DatasetFields, PrizeDataset, RankEntry};
use crate::normal_core::quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// y = r·x + √(1 − r²)·s
    Gaussian,
    /// y = x with probability r, otherwise y = s
    Mixture,
}

impl std::str::FromStr for Coupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Coupling::Gaussian),
            "mixture" => Ok(Coupling::Mixture),
            other => Err(Error::InvalidConfig(format!(
                "unknown coupling `{other}` (gaussian|mixture)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub pool_size: usize,
    pub winner_count: usize,
    pub r: f64,
    pub coupling: Coupling,
    pub replications: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 {
            return Err(Error::InvalidConfig("pool size must be positive".into()));
        }
        if self.winner_count == 0 || self.winner_count > self.pool_size {
            return Err(Error::InvalidConfig(format!(
                "winner count must satisfy 1 <= winners <= pool ({}), got {}",
                self.pool_size, self.winner_count
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be positive".into()));
        }
        let ok = match self.coupling {
            Coupling::Gaussian => self.r > -1.0 && self.r < 1.0,
            Coupling::Mixture => (0.0..=1.0).contains(&self.r),
        };
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "r = {} is outside the admissible range for {:?} coupling",
                self.r, self.coupling
            )));
        }
        Ok(())
    }
}

fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Standard normal variate by inverse-CDF transform of an open-interval
/// uniform.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return quantile(u);
        }
    }
}

fn draw_pairs(cfg: &SimConfig, replication: u64) -> Vec<(f64, f64)> {
    let mut rng = replication_rng(cfg.seed, replication);
    let noise = (1.0 - cfg.r * cfg.r).max(0.0).sqrt();
    (0..cfg.pool_size)
        .map(|_| {
            let x = standard_normal(&mut rng);
            match cfg.coupling {
                Coupling::Gaussian => {
                    let s = standard_normal(&mut rng);
                    (x, cfg.r * x + noise * s)
                }
                Coupling::Mixture => {
                    let copy = rng.random::<f64>() < cfg.r;
                    let s = standard_normal(&mut rng);
                    (x, if copy { x } else { s })
                }
            }
        })
        .collect()
}

/// One pool of `cfg.pool_size` correlated pairs (replication stream 0).
pub fn sample_pairs(cfg: &SimConfig) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    Ok(draw_pairs(cfg, 0))
}

/// Pool for an arbitrary replication index.
pub fn sample_replication(cfg: &SimConfig, replication: u64) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    Ok(draw_pairs(cfg, replication))
}

/// Indices in descending order of `key`; ties go to the lower index.
fn descending_order<F: Fn(usize) -> f64>(n: usize, key: F) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    idx
}

/// Membership mask of the `m` largest values (ties broken by index).
pub fn top_m_mask<F: Fn(usize) -> f64>(n: usize, m: usize, key: F) -> Vec<bool> {
    let mut mask = vec![false; n];
    if m == 0 {
        return mask;
    }
    if m >= n {
        return vec![true; n];
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.select_nth_unstable_by(m - 1, |&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    for &i in &idx[..m] {
        mask[i] = true;
    }
    mask
}

/// |top-m by x ∩ top-m by y|
pub fn overlap_count(pairs: &[(f64, f64)], m: usize) -> usize {
    let n = pairs.len();
    let by_x = top_m_mask(n, m, |i| pairs[i].0);
    let by_y = top_m_mask(n, m, |i| pairs[i].1);
    by_x.iter().zip(&by_y).filter(|(a, b)| **a && **b).count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapResult {
    /// `histogram[k]` is the number of replications with overlap exactly k,
    /// for k = 0..=winner_count.
    pub histogram: Vec<u64>,
    pub replications: u64,
    pub mean_overlap: f64,
}

impl OverlapResult {
    pub fn fraction_at(&self, k: usize) -> f64 {
        self.histogram.get(k).copied().unwrap_or(0) as f64 / self.replications as f64
    }

    fn from_counts(counts: &[usize], m: usize) -> Self {
        let mut histogram = vec![0u64; m + 1];
        for &k in counts {
            histogram[k] += 1;
        }
        let total: usize = counts.iter().sum();
        Self {
            histogram,
            replications: counts.len() as u64,
            mean_overlap: total as f64 / counts.len() as f64,
        }
    }
}

/// Histogram of the top-M overlap (M = winner count) across replications.
pub fn overlap_experiment(cfg: &SimConfig) -> Result<OverlapResult> {
    cfg.validate()?;
    let m = cfg.winner_count;
    let counts: Vec<usize> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| overlap_count(&draw_pairs(cfg, rep), m))
        .collect();
    Ok(OverlapResult::from_counts(&counts, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub r: f64,
    pub fraction_matching: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRange {
    pub low: f64,
    pub high: f64,
    pub step: f64,
}

impl ScanRange {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "scan step must be positive, got {}",
                self.step
            )));
        }
        if !(self.low.is_finite() && self.high.is_finite()) || self.low > self.high {
            return Err(Error::InvalidConfig(format!(
                "scan range needs low <= high, got {}:{}",
                self.low, self.high
            )));
        }
        let n = ((self.high - self.low) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.low + i as f64 * self.step).collect())
    }
}

/// Fraction of replications whose overlap equals `observed_overlap`, at each
/// r of the scan. Every grid point reuses the same replication streams, so
/// neighbouring points differ only through r.
pub fn profile_likelihood_scan(
    pool: usize,
    m: usize,
    observed_overlap: usize,
    range: ScanRange,
    reps_per_point: usize,
    seed: u64,
) -> Result<Vec<ScanPoint>> {
    if reps_per_point < 1000 {
        return Err(Error::InvalidConfig(format!(
            "profile scan needs at least 1000 replications per point, got {reps_per_point}"
        )));
    }
    if observed_overlap > m {
        return Err(Error::InvalidConfig(format!(
            "observed overlap {observed_overlap} exceeds the sieve size {m}"
        )));
    }
    range
        .points()?
        .into_iter()
        .map(|r| {
            let cfg = SimConfig {
                pool_size: pool,
                winner_count: m,
                r,
                coupling: Coupling::Gaussian,
                replications: reps_per_point,
                seed,
            };
            let result = overlap_experiment(&cfg)?;
            Ok(ScanPoint {
                r,
                fraction_matching: result.fraction_at(observed_overlap),
            })
        })
        .collect()
}

/// Scan point with the largest matching fraction (first one on ties).
pub fn scan_argmax(points: &[ScanPoint]) -> Option<ScanPoint> {
    points.iter().copied().reduce(|best, p| {
        if p.fraction_matching > best.fraction_matching {
            p
        } else {
            best
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    /// Sieve size.
    pub m: usize,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// Confusion summary for one sieve size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiResult {
    pub point: RocPoint,
    pub true_positives: usize,
    /// Pearson correlation of the winner and sieve indicator vectors; `None`
    /// when the sieve is empty or holds the whole pool.
    pub phi: Option<f64>,
    pub tpr_minus_fpr: f64,
}

fn check_winner_count(n: usize, winner_count: usize) -> Result<()> {
    if winner_count == 0 || winner_count >= n {
        return Err(Error::Domain(format!(
            "winner count must satisfy 0 < winners < sample size ({n}), got {winner_count}"
        )));
    }
    Ok(())
}

/// Winners are the top `winner_count` by x, the sieve the top `m` by y.
pub fn roc_and_phi(sample: &[(f64, f64)], winner_count: usize, m: usize) -> Result<PhiResult> {
    let n = sample.len();
    check_winner_count(n, winner_count)?;
    if m > n {
        return Err(Error::Domain(format!("sieve size {m} exceeds sample size {n}")));
    }
    let winners = top_m_mask(n, winner_count, |i| sample[i].0);
    let sieve = top_m_mask(n, m, |i| sample[i].1);
    let tp = winners.iter().zip(&sieve).filter(|(w, s)| **w && **s).count();
    let fp = m - tp;

    let (n_i, w_i, m_i, tp_i) = (n as i128, winner_count as i128, m as i128, tp as i128);
    // N·TP − W·M is the shared numerator of phi and TPR − FPR.
    let numerator = (n_i * tp_i - w_i * m_i) as f64;
    let winner_scale = (w_i * (n_i - w_i)) as f64;
    let tpr_minus_fpr = numerator / winner_scale;
    let phi = if m == 0 || m == n {
        None
    } else if m == winner_count {
        Some(numerator / winner_scale)
    } else {
        let sieve_scale = (m_i * (n_i - m_i)) as f64;
        Some(numerator / (winner_scale.sqrt() * sieve_scale.sqrt()))
    };

    Ok(PhiResult {
        point: RocPoint {
            m,
            tpr: tp as f64 / winner_count as f64,
            fpr: fp as f64 / (n - winner_count) as f64,
        },
        true_positives: tp,
        phi,
        tpr_minus_fpr,
    })
}

/// ROC curve over every sieve size 0..=n for one realised sample.
pub fn roc_curve(sample: &[(f64, f64)], winner_count: usize) -> Result<RocCurve> {
    let n = sample.len();
    check_winner_count(n, winner_count)?;
    let winners = top_m_mask(n, winner_count, |i| sample[i].0);
    let order = descending_order(n, |i| sample[i].1);
    let negatives = (n - winner_count) as f64;
    let mut points = Vec::with_capacity(n + 1);
    points.push(RocPoint {
        m: 0,
        tpr: 0.0,
        fpr: 0.0,
    });
    let mut tp = 0usize;
    for (k, &i) in order.iter().enumerate() {
        if winners[i] {
            tp += 1;
        }
        let m = k + 1;
        points.push(RocPoint {
            m,
            tpr: tp as f64 / winner_count as f64,
            fpr: (m - tp) as f64 / negatives,
        });
    }
    Ok(RocCurve { points })
}

/// Pool shape for synthetic winner-rank datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticShape {
    pub pool_size: usize,
    pub winner_count: usize,
    /// Top-list length; winners ranked below it are censored.
    pub list_cutoff_rank: Option<usize>,
}

/// Draw a pool under gaussian coupling at `r`, take the top winners by x,
/// and record their ranks by y the way the real data would be recorded.
pub fn synthetic_dataset(shape: SyntheticShape, r: f64, seed: u64, replication: u64) -> Result<PrizeDataset> {
    let cfg = SimConfig {
        pool_size: shape.pool_size,
        winner_count: shape.winner_count,
        r,
        coupling: Coupling::Gaussian,
        replications: 1,
        seed,
    };
    cfg.validate()?;
    let pairs = draw_pairs(&cfg, replication);
    let n = pairs.len();
    let winners = top_m_mask(n, shape.winner_count, |i| pairs[i].0);
    let order = descending_order(n, |i| pairs[i].1);

    let mut observed = Vec::new();
    let mut censored = 0u64;
    for (pos, &i) in order.iter().enumerate() {
        if !winners[i] {
            continue;
        }
        let rank = pos as u64 + 1;
        match shape.list_cutoff_rank {
            Some(cutoff) if rank > cutoff as u64 => censored += 1,
            _ => observed.push(RankEntry::Known(rank)),
        }
    }
    PrizeDataset::try_from(DatasetFields {
        label: format!("synthetic r={r} seed={seed} rep={replication}"),
        pool_size: shape.pool_size as u64,
        winner_count: shape.winner_count as u64,
        observed_ranks: observed,
        censored_count: censored,
        list_cutoff_rank: shape.list_cutoff_rank.map(|c| c as u64),
        notes: "generated from the gaussian coupling model".into(),
    })
}
