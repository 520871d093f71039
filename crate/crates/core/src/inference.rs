//! Likelihood of winner ranks under the tail model, the maximum-likelihood
//! estimate of r, a flat-prior grid posterior, and the count-based
//! exceedance estimator.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::normal_core::{QuadratureSpec, integrate, rank_to_z};
use crate::tail_model::{self, R_UPPER, TailCondition};

/// Largest correlation on the likelihood grid.
pub const R_GRID_MAX: f64 = 0.999;

pub const PRIOR_TAG: &str = "uniform[0, 0.999]";

/// One entry of a dataset's observed-rank list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RankEntry {
    Known(u64),
    /// A winner known to be on the top list whose rank was not recorded.
    Unrecorded,
}

/// Unvalidated dataset contents; converted into a [`PrizeDataset`] with
/// `TryFrom`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetFields {
    pub label: String,
    pub pool_size: u64,
    pub winner_count: u64,
    pub observed_ranks: Vec<RankEntry>,
    pub censored_count: u64,
    pub list_cutoff_rank: Option<u64>,
    pub notes: String,
}

/// Validated winner-rank data for one prize.
#[derive(Debug, Clone, PartialEq)]
pub struct PrizeDataset {
    label: String,
    pool_size: u64,
    winner_count: u64,
    /// Ascending and distinct.
    observed_ranks: Vec<u64>,
    unrecorded_count: u64,
    censored_count: u64,
    list_cutoff_rank: Option<u64>,
    notes: String,
}

impl TryFrom<DatasetFields> for PrizeDataset {
    type Error = Error;

    fn try_from(f: DatasetFields) -> Result<Self> {
        let invalid = |field: &'static str, message: String| Err(Error::InvalidDataset { field, message });

        if f.winner_count == 0 && f.observed_ranks.is_empty() && f.censored_count == 0 {
            return Err(Error::EmptyDataset(format!(
                "`{}` has no winners, no observed ranks and no censored winners",
                f.label
            )));
        }
        if f.pool_size < 2 {
            return invalid(
                "pool_size",
                format!("pool_size must be at least 2, got {}", f.pool_size),
            );
        }
        if f.winner_count == 0 {
            return invalid("winner_count", "winner_count must be positive".into());
        }
        if f.winner_count >= f.pool_size {
            return invalid(
                "winner_count",
                format!(
                    "winner_count {} must be below pool_size {}",
                    f.winner_count, f.pool_size
                ),
            );
        }

        let mut ranks = Vec::with_capacity(f.observed_ranks.len());
        let mut unrecorded = 0u64;
        for entry in &f.observed_ranks {
            match *entry {
                RankEntry::Known(k) => ranks.push(k),
                RankEntry::Unrecorded => unrecorded += 1,
            }
        }
        ranks.sort_unstable();
        if let Some(w) = ranks.windows(2).find(|w| w[0] == w[1]) {
            return invalid(
                "observed_ranks",
                format!("observed rank {} appears more than once", w[0]),
            );
        }
        if let Some(&k) = ranks.iter().find(|&&k| k == 0 || k >= f.pool_size) {
            return invalid(
                "observed_ranks",
                format!("observed rank {k} must satisfy 1 <= rank < pool_size ({})", f.pool_size),
            );
        }

        let listed = ranks.len() as u64 + unrecorded;
        if listed + f.censored_count != f.winner_count {
            return invalid(
                "winner_count",
                format!(
                    "winner_count {} must equal observed ranks ({listed}) + censored_count ({})",
                    f.winner_count, f.censored_count
                ),
            );
        }

        match f.list_cutoff_rank {
            Some(cutoff) => {
                if cutoff == 0 || cutoff >= f.pool_size {
                    return invalid(
                        "list_cutoff_rank",
                        format!(
                            "list_cutoff_rank {cutoff} must satisfy 1 <= cutoff < pool_size ({})",
                            f.pool_size
                        ),
                    );
                }
                if let Some(&k) = ranks.iter().find(|&&k| k > cutoff) {
                    return invalid(
                        "observed_ranks",
                        format!("observed rank {k} lies below the list cutoff {cutoff}"),
                    );
                }
                if listed > cutoff {
                    return invalid(
                        "observed_ranks",
                        format!("{listed} winners cannot fit in a top list of {cutoff}"),
                    );
                }
            }
            None => {
                if f.censored_count > 0 {
                    return invalid("censored_count", "censored_count > 0 requires list_cutoff_rank".into());
                }
            }
        }

        Ok(Self {
            label: f.label,
            pool_size: f.pool_size,
            winner_count: f.winner_count,
            observed_ranks: ranks,
            unrecorded_count: unrecorded,
            censored_count: f.censored_count,
            list_cutoff_rank: f.list_cutoff_rank,
            notes: f.notes,
        })
    }
}

impl PrizeDataset {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn pool_size(&self) -> u64 {
        self.pool_size
    }

    pub fn winner_count(&self) -> u64 {
        self.winner_count
    }

    pub fn observed_ranks(&self) -> &[u64] {
        &self.observed_ranks
    }

    /// Winners on the top list whose rank is a placeholder.
    pub fn unrecorded_count(&self) -> u64 {
        self.unrecorded_count
    }

    /// Winners on the top list (known and placeholder ranks).
    pub fn listed_count(&self) -> u64 {
        self.observed_ranks.len() as u64 + self.unrecorded_count
    }

    pub fn censored_count(&self) -> u64 {
        self.censored_count
    }

    pub fn list_cutoff_rank(&self) -> Option<u64> {
        self.list_cutoff_rank
    }

    pub fn notes(&self) -> &str {
        &self.notes
    }

    pub fn has_placeholders(&self) -> bool {
        self.unrecorded_count > 0
    }

    pub fn to_fields(&self) -> DatasetFields {
        let mut observed: Vec<RankEntry> = self.observed_ranks.iter().map(|&k| RankEntry::Known(k)).collect();
        observed.extend((0..self.unrecorded_count).map(|_| RankEntry::Unrecorded));
        DatasetFields {
            label: self.label.clone(),
            pool_size: self.pool_size,
            winner_count: self.winner_count,
            observed_ranks: observed,
            censored_count: self.censored_count,
            list_cutoff_rank: self.list_cutoff_rank,
            notes: self.notes.clone(),
        }
    }

    /// Likelihood method implied by the data.
    pub fn likelihood_method(&self) -> Method {
        if self.censored_count > 0 {
            Method::CensoredMle
        } else {
            Method::FullMle
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FullMle,
    CensoredMle,
    ExceedanceInversion,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::FullMle => "full-mle",
            Method::CensoredMle => "censored-mle",
            Method::ExceedanceInversion => "exceedance-inversion",
        }
    }
}

/// Selection threshold and (when a top list exists) score cutoff, in z-units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub x_c: f64,
    pub y_c: Option<f64>,
}

pub fn derive_thresholds(ds: &PrizeDataset) -> Result<Thresholds> {
    let x_c = rank_to_z(ds.winner_count, ds.pool_size)?;
    let y_c = ds.list_cutoff_rank.map(|c| rank_to_z(c, ds.pool_size)).transpose()?;
    Ok(Thresholds { x_c, y_c })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CredibleInterval {
    pub low: f64,
    pub high: f64,
    pub level: f64,
    /// Always "equal-tailed".
    pub kind: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub method: Method,
    pub r_hat: f64,
    pub interval: Option<CredibleInterval>,
    pub at_boundary: bool,
    /// Set when the posterior piles into a single cell, or its equal-tailed
    /// interval had to be widened to contain `r_hat`.
    pub degenerate: bool,
    /// √(1 − r_hat²), the weight of the rating-unrelated component.
    pub noise_prefactor: f64,
    pub thresholds: Thresholds,
    /// Observed fraction that the exceedance estimator matched.
    pub target_fraction: Option<f64>,
}

impl EstimateReport {
    fn new(method: Method, r_hat: f64, thresholds: Thresholds) -> Self {
        Self {
            method,
            r_hat,
            interval: None,
            at_boundary: false,
            degenerate: false,
            noise_prefactor: noise_prefactor(r_hat),
            thresholds,
            target_fraction: None,
        }
    }
}

pub fn noise_prefactor(r: f64) -> f64 {
    (1.0 - r * r).sqrt()
}

/// Precomputed pieces of the rank likelihood for one dataset.
#[derive(Debug, Clone)]
pub struct RankLikelihood {
    thresholds: Thresholds,
    z_scores: Vec<f64>,
    censored_count: u64,
    quadrature: QuadratureSpec,
}

impl RankLikelihood {
    pub fn new(ds: &PrizeDataset) -> Result<Self> {
        if ds.has_placeholders() {
            return Err(Error::Config(format!(
                "`{}` has {} placeholder ranks; the likelihood needs every observed rank",
                ds.label, ds.unrecorded_count
            )));
        }
        let thresholds = derive_thresholds(ds)?;
        if ds.censored_count > 0 && thresholds.y_c.is_none() {
            return Err(Error::Config("censored winners need a list cutoff (y_c)".into()));
        }
        let z_scores = ds
            .observed_ranks
            .iter()
            .map(|&k| rank_to_z(k, ds.pool_size))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            thresholds,
            z_scores,
            censored_count: ds.censored_count,
            quadrature: QuadratureSpec::default(),
        })
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    /// Σ ln p(y_k | x > x_c) + N₂ · ln(1 − p(y > y_c | x > x_c)).
    ///
    /// Returns `-inf` when the censored mass vanishes.
    pub fn log_likelihood(&self, r: f64) -> Result<f64> {
        let cond = TailCondition::new(r, self.thresholds.x_c)?;
        let mut total: f64 = self.z_scores.iter().map(|&z| cond.ln_density(z)).sum();
        if self.censored_count > 0 {
            let y_c = self
                .thresholds
                .y_c
                .ok_or_else(|| Error::Config("censored term requested without y_c".into()))?;
            // 1 − exceedance, integrated directly so it keeps precision when
            // nearly all of the mass sits above the cutoff.
            let hw = self.quadrature.half_width();
            let below = if y_c <= -hw {
                0.0
            } else {
                integrate(|y| cond.density(y), -hw, y_c.min(hw), &self.quadrature)?
            };
            if below <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            total += self.censored_count as f64 * below.ln();
        }
        Ok(total)
    }
}

pub fn log_likelihood(ds: &PrizeDataset, r: f64) -> Result<f64> {
    RankLikelihood::new(ds)?.log_likelihood(r)
}

/// {0, step, 2·step, …} up to 0.999, with 0.999 always the last point.
pub fn r_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.01) {
        return Err(Error::Domain(format!(
            "grid step must satisfy 0 < step <= 0.01, got {step}"
        )));
    }
    let n = (R_GRID_MAX / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    if R_GRID_MAX - grid[n] > 1e-12 {
        grid.push(R_GRID_MAX);
    } else {
        grid[n] = R_GRID_MAX;
    }
    Ok(grid)
}

#[derive(Debug, Clone)]
struct GridScan {
    grid: Vec<f64>,
    log_likelihoods: Vec<f64>,
    best: usize,
}

fn scan(model: &RankLikelihood, step: f64) -> Result<GridScan> {
    let grid = r_grid(step)?;
    // ordered collect keeps the result independent of scheduling
    let log_likelihoods = grid
        .par_iter()
        .map(|&r| model.log_likelihood(r))
        .collect::<Result<Vec<f64>>>()?;

    let mut best = None;
    for (i, &ll) in log_likelihoods.iter().enumerate() {
        if ll.is_nan() {
            return Err(Error::EstimationFailure(format!(
                "log-likelihood is NaN at r = {}",
                grid[i]
            )));
        }
        if ll > f64::NEG_INFINITY && best.is_none_or(|b: usize| ll > log_likelihoods[b]) {
            best = Some(i);
        }
    }
    let best = best.ok_or_else(|| Error::EstimationFailure("log-likelihood is -inf at every grid point".into()))?;
    Ok(GridScan {
        grid,
        log_likelihoods,
        best,
    })
}

/// Golden-section search for the maximum of `f` on `[lo, hi]`.
fn golden_section_max<F>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = f(b)?;
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = f(a)?;
        }
    }
    Ok(if fa >= fb { (a, fa) } else { (b, fb) })
}

fn refine(model: &RankLikelihood, scan: &GridScan) -> Result<f64> {
    let i = scan.best;
    let lo = scan.grid[i.saturating_sub(1)];
    let hi = scan.grid[(i + 1).min(scan.grid.len() - 1)];
    let (r, ll) = golden_section_max(|r| model.log_likelihood(r), lo, hi, 1e-5)?;
    Ok(if ll > scan.log_likelihoods[i] { r } else { scan.grid[i] })
}

fn near_upper_boundary(r: f64, step: f64) -> bool {
    r >= R_GRID_MAX - step - 1e-12
}

/// Maximum-likelihood estimate of r on [0, 0.999]: grid scan with step
/// `r_grid_step`, then golden-section refinement inside the winning cell.
pub fn mle(ds: &PrizeDataset, r_grid_step: f64) -> Result<EstimateReport> {
    let model = RankLikelihood::new(ds)?;
    let scan = scan(&model, r_grid_step)?;
    let r_hat = refine(&model, &scan)?;
    let mut report = EstimateReport::new(ds.likelihood_method(), r_hat, model.thresholds());
    report.at_boundary = near_upper_boundary(r_hat, r_grid_step);
    Ok(report)
}

/// Discretised posterior over r.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorGrid {
    pub r_values: Vec<f64>,
    pub log_likelihoods: Vec<f64>,
    pub posterior_masses: Vec<f64>,
    pub prior_tag: String,
}

impl PosteriorGrid {
    /// Grid point carrying the most mass.
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, &m) in self.posterior_masses.iter().enumerate() {
            if m > self.posterior_masses[best] {
                best = i;
            }
        }
        self.r_values[best]
    }

    /// r at which the cumulative mass reaches `q`, interpolating linearly
    /// between grid points.
    pub fn quantile(&self, q: f64) -> f64 {
        let mut cum_prev = 0.0;
        let mut cum = 0.0;
        for (i, &m) in self.posterior_masses.iter().enumerate() {
            cum += m;
            if cum >= q {
                if i == 0 || cum == cum_prev {
                    return self.r_values[i];
                }
                let t = (q - cum_prev) / (cum - cum_prev);
                return self.r_values[i - 1] + t * (self.r_values[i] - self.r_values[i - 1]);
            }
            cum_prev = cum;
        }
        *self.r_values.last().expect("posterior grid is never empty")
    }
}

fn masses_from_log_likelihoods(log_likelihoods: &[f64]) -> Vec<f64> {
    let peak = log_likelihoods.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_likelihoods.iter().map(|&ll| (ll - peak).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Flat-prior posterior over the likelihood grid and its equal-tailed
/// credible interval.
pub fn posterior(ds: &PrizeDataset, grid_step: f64, credible_level: f64) -> Result<(PosteriorGrid, EstimateReport)> {
    if !(credible_level > 0.0 && credible_level < 1.0) {
        return Err(Error::Domain(format!(
            "credible level must lie in (0, 1), got {credible_level}"
        )));
    }
    let model = RankLikelihood::new(ds)?;
    let scan = scan(&model, grid_step)?;
    let r_hat = refine(&model, &scan)?;

    let masses = masses_from_log_likelihoods(&scan.log_likelihoods);
    let grid = PosteriorGrid {
        r_values: scan.grid.clone(),
        log_likelihoods: scan.log_likelihoods.clone(),
        posterior_masses: masses,
        prior_tag: PRIOR_TAG.to_string(),
    };

    let tail = 0.5 * (1.0 - credible_level);
    let mut low = grid.quantile(tail);
    let mut high = grid.quantile(1.0 - tail);
    let mut degenerate = grid.posterior_masses[scan.best] > 1.0 - 1e-9;
    if r_hat < low || r_hat > high {
        degenerate = true;
        low = low.min(r_hat);
        high = high.max(r_hat);
    }

    let mut report = EstimateReport::new(ds.likelihood_method(), r_hat, model.thresholds());
    report.interval = Some(CredibleInterval {
        low,
        high,
        level: credible_level,
        kind: "equal-tailed",
    });
    report.at_boundary = near_upper_boundary(r_hat, grid_step);
    report.degenerate = degenerate;
    Ok((grid, report))
}

/// Solve the tail-exceedance relation for r from winner counts alone.
///
/// With a top-list cutoff the target is the fraction of winners on the list
/// and y_c comes from the cutoff rank. Without one, every rank must be known;
/// the sieve is then the top `winner_count` entries, so y_c = x_c.
pub fn infer_by_exceedance(ds: &PrizeDataset) -> Result<EstimateReport> {
    let thresholds = derive_thresholds(ds)?;
    let winners = ds.winner_count as f64;
    let (y_c, target) = match thresholds.y_c {
        Some(y_c) => (y_c, ds.listed_count() as f64 / winners),
        None => {
            if ds.has_placeholders() {
                return Err(Error::Config(
                    "exceedance without a list cutoff needs every winner's rank".into(),
                ));
            }
            let inside = ds.observed_ranks.iter().filter(|&&k| k <= ds.winner_count).count();
            (thresholds.x_c, inside as f64 / winners)
        }
    };

    let (r_hat, at_boundary) = match tail_model::invert_exceedance_for_r(y_c, thresholds.x_c, target) {
        Ok(r) => (r, r >= R_GRID_MAX),
        Err(Error::NoSolution { high, .. }) if target >= high => (R_UPPER, true),
        Err(e) => return Err(e),
    };
    let mut report = EstimateReport::new(
        Method::ExceedanceInversion,
        r_hat,
        Thresholds {
            x_c: thresholds.x_c,
            y_c: Some(y_c),
        },
    );
    report.at_boundary = at_boundary;
    report.target_fraction = Some(target);
    Ok(report)
}
