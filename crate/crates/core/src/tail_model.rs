//! Distribution of the observed score among candidates selected on the
//! latent rating.
//!
//! With (x, y) standard bivariate normal at correlation r and selection
//! x > x_c, the density of y is
//!
//! ```text
//! p(y | x > x_c) = φ(y) · S((x_c − r·y) / √(1 − r²)) / S(x_c)
//! ```
//!
//! where S is the standard normal upper tail. Its upper tail above y_c is the
//! expected fraction of selected candidates who also clear the score cutoff.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::normal_core::{self, QuadratureSpec, integrate, ln_pdf, ln_sf, pdf, sf};

/// Upper end of the bracket used when solving for r.
pub const R_UPPER: f64 = 0.999_999;

const EXCEEDANCE_TOL: f64 = 1e-9;

/// Correlation and selection threshold for the conditional score density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailCondition {
    r: f64,
    x_c: f64,
    /// √(1 − r²)
    noise: f64,
    ln_sf_threshold: f64,
}

impl TailCondition {
    pub fn new(r: f64, x_c: f64) -> Result<Self> {
        if !(r > -1.0 && r < 1.0) {
            return Err(Error::Domain(format!("correlation must satisfy -1 < r < 1, got {r}")));
        }
        if !x_c.is_finite() {
            return Err(Error::Domain(format!("threshold x_c must be finite, got {x_c}")));
        }
        let ln_sf_threshold = ln_sf(x_c);
        if !ln_sf_threshold.is_finite() {
            return Err(Error::Domain(format!("threshold x_c = {x_c} leaves no tail mass")));
        }
        Ok(Self {
            r,
            x_c,
            noise: (1.0 - r * r).sqrt(),
            ln_sf_threshold,
        })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn x_c(&self) -> f64 {
        self.x_c
    }

    /// Density of y given x > x_c.
    pub fn density(&self, y: f64) -> f64 {
        pdf(y) * sf((self.x_c - self.r * y) / self.noise) / sf(self.x_c)
    }

    /// Log of [`TailCondition::density`], finite far into either tail.
    pub fn ln_density(&self, y: f64) -> f64 {
        ln_pdf(y) + ln_sf((self.x_c - self.r * y) / self.noise) - self.ln_sf_threshold
    }
}

/// Standard bivariate normal density at correlation `r`.
pub fn bivariate_density(x: f64, y: f64, r: f64) -> Result<f64> {
    if !(r > -1.0 && r < 1.0) {
        return Err(Error::Domain(format!("correlation must satisfy -1 < r < 1, got {r}")));
    }
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::Domain(format!(
            "bivariate_density requires finite (x, y), got ({x}, {y})"
        )));
    }
    let one_minus_r2 = 1.0 - r * r;
    let quad = (x * x - 2.0 * r * x * y + y * y) / (2.0 * one_minus_r2);
    Ok((-quad).exp() / (2.0 * PI * one_minus_r2.sqrt()))
}

pub fn conditional_density(y: f64, cond: &TailCondition) -> f64 {
    cond.density(y)
}

/// P(y > y_c | x > x_c) by quadrature of the conditional density.
pub fn tail_exceedance(y_c: f64, cond: &TailCondition) -> Result<f64> {
    tail_exceedance_with(y_c, cond, &QuadratureSpec::default())
}

pub fn tail_exceedance_with(y_c: f64, cond: &TailCondition, spec: &QuadratureSpec) -> Result<f64> {
    if !y_c.is_finite() {
        return Err(Error::Domain(format!("score cutoff y_c must be finite, got {y_c}")));
    }
    let hi = spec.half_width();
    if y_c >= hi {
        return Ok(0.0);
    }
    let lo = y_c.max(-hi);
    let p = integrate(|y| cond.density(y), lo, hi, spec)?;
    Ok(p.clamp(0.0, 1.0))
}

/// Solve `tail_exceedance(y_c, {r, x_c}) = target` for r in [0, R_UPPER].
///
/// The map r ↦ exceedance is increasing for positive thresholds, so the root
/// is bracketed and found by bisection followed by Illinois false position.
pub fn invert_exceedance_for_r(y_c: f64, x_c: f64, target: f64) -> Result<f64> {
    if !(target.is_finite() && y_c.is_finite() && x_c.is_finite()) {
        return Err(Error::Domain(format!(
            "inversion needs finite inputs (y_c {y_c}, x_c {x_c}, target {target})"
        )));
    }
    let exceed = |r: f64| -> Result<f64> { tail_exceedance(y_c, &TailCondition::new(r, x_c)?) };

    let p_low = exceed(0.0)?;
    let p_high = exceed(R_UPPER)?;
    let out_of_range = || Error::NoSolution {
        target,
        low: p_low,
        high: p_high,
    };
    if target < p_low - EXCEEDANCE_TOL || target > p_high + EXCEEDANCE_TOL {
        return Err(out_of_range());
    }
    if (target - p_low).abs() <= EXCEEDANCE_TOL {
        return Ok(0.0);
    }
    if (target - p_high).abs() <= EXCEEDANCE_TOL {
        return Ok(R_UPPER);
    }

    let (mut a, mut b) = (0.0, R_UPPER);
    let (mut fa, mut fb) = (p_low - target, p_high - target);

    while b - a > 1e-3 {
        let m = 0.5 * (a + b);
        let fm = exceed(m)? - target;
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }

    // Illinois variant of regula falsi.
    let mut side = 0i8;
    for _ in 0..100 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = exceed(c)? - target;
        if fc.abs() < EXCEEDANCE_TOL || b - a < 1e-14 {
            return Ok(c);
        }
        if (fc < 0.0) == (fa < 0.0) {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::EstimationFailure(format!(
        "root search for r did not settle (bracket [{a}, {b}])"
    )))
}

/// Model-predicted TPR − FPR when the sieve holds as many slots as there are
/// selected candidates (`winner_fraction` of the pool).
///
/// TPR is the tail exceedance at the shared threshold; FPR follows from the
/// expected number of non-selected candidates in the sieve.
pub fn expected_tpr_fpr_gap(cond: &TailCondition, winner_fraction: f64) -> Result<f64> {
    if !(winner_fraction > 0.0 && winner_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "winner fraction must lie in (0, 1), got {winner_fraction}"
        )));
    }
    let threshold = normal_core::normal_quantile(1.0 - winner_fraction)?;
    let tpr = tail_exceedance(threshold, cond)?;
    let fpr = winner_fraction * (1.0 - tpr) / (1.0 - winner_fraction);
    Ok(tpr - fpr)
}
