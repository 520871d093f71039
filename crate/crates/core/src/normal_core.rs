//! Standard-normal special functions, adaptive quadrature, and the
//! rank → z-score conversion used throughout the crate.
//!
//! The checked entry points (`normal_pdf`, `normal_cdf`, ...) reject
//! non-finite arguments. The crate-internal `pdf`, `cdf`, `sf` and `ln_sf`
//! helpers skip the checks and are used on hot paths.

use std::collections::BinaryHeap;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

/// 1/√(2π)
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Settings for [`integrate`] and for every infinite integral in the crate,
/// which is truncated to `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    abs_tol: f64,
    half_width: f64,
    max_subdivisions: usize,
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, half_width: f64, max_subdivisions: usize) -> Result<Self> {
        if !(abs_tol > 0.0 && abs_tol.is_finite()) {
            return Err(Error::Domain(format!("absolute tolerance must be > 0, got {abs_tol}")));
        }
        if !(half_width >= 6.0 && half_width.is_finite()) {
            return Err(Error::Domain(format!("half-width must be >= 6, got {half_width}")));
        }
        if max_subdivisions < 16 {
            return Err(Error::Domain(format!(
                "max subdivisions must be >= 16, got {max_subdivisions}"
            )));
        }
        Ok(Self {
            abs_tol,
            half_width,
            max_subdivisions,
        })
    }

    pub fn abs_tol(&self) -> f64 {
        self.abs_tol
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn max_subdivisions(&self) -> usize {
        self.max_subdivisions
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            half_width: 8.0,
            max_subdivisions: 256,
        }
    }
}

fn check_finite(z: f64, what: &str) -> Result<()> {
    if z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} requires a finite argument, got {z}")))
    }
}

#[inline]
pub(crate) fn pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

#[inline]
pub(crate) fn ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

#[inline]
pub(crate) fn cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail S(z) = 1 − Φ(z), accurate far into the right tail.
#[inline]
pub(crate) fn sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// ln S(z). Past z = 35 the erfc route is close to underflow, so the
/// asymptotic Mills-ratio series takes over.
pub(crate) fn ln_sf(z: f64) -> f64 {
    if z < 35.0 {
        sf(z).ln()
    } else {
        let t2 = 1.0 / (z * z);
        let series = 1.0 - t2 * (1.0 - 3.0 * t2 * (1.0 - 5.0 * t2));
        ln_pdf(z) - z.ln() + series.ln()
    }
}

pub fn normal_pdf(z: f64) -> Result<f64> {
    check_finite(z, "normal_pdf")?;
    Ok(pdf(z))
}

pub fn normal_cdf(z: f64) -> Result<f64> {
    check_finite(z, "normal_cdf")?;
    Ok(cdf(z))
}

pub fn normal_sf(z: f64) -> Result<f64> {
    check_finite(z, "normal_sf")?;
    Ok(sf(z))
}

// Acklam's rational approximation to the inverse normal CDF.
const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const ACKLAM_P_LOW: f64 = 0.02425;

fn acklam_lower(q: f64) -> f64 {
    // q <= 0.5; result <= 0
    if q < ACKLAM_P_LOW {
        let t = (-2.0 * q.ln()).sqrt();
        let [c0, c1, c2, c3, c4, c5] = ACKLAM_C;
        let [d0, d1, d2, d3] = ACKLAM_D;
        (((((c0 * t + c1) * t + c2) * t + c3) * t + c4) * t + c5) / ((((d0 * t + d1) * t + d2) * t + d3) * t + 1.0)
    } else {
        let t = q - 0.5;
        let s = t * t;
        let [a0, a1, a2, a3, a4, a5] = ACKLAM_A;
        let [b0, b1, b2, b3, b4] = ACKLAM_B;
        (((((a0 * s + a1) * s + a2) * s + a3) * s + a4) * s + a5) * t
            / (((((b0 * s + b1) * s + b2) * s + b3) * s + b4) * s + 1.0)
    }
}

/// Φ⁻¹ for p in (0, 1) without argument checks.
pub(crate) fn quantile(p: f64) -> f64 {
    // Work in whichever tail is smaller so the Newton residual is computed
    // against an unrounded cdf value.
    let upper = p > 0.5;
    let q = if upper { 1.0 - p } else { p };
    let mut z = acklam_lower(q);
    let density = pdf(z);
    if density > 0.0 {
        z -= (cdf(z) - q) / density;
    }
    if upper { -z } else { z }
}

pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal_quantile requires 0 < p < 1, got {p}")));
    }
    Ok(quantile(p))
}

/// z-score of the `rank`-th entry (1 = best) in a pool of `pool`, using the
/// percentile 1 − rank/pool.
pub fn rank_to_z(rank: u64, pool: u64) -> Result<f64> {
    if rank == 0 || pool == 0 {
        return Err(Error::Domain(format!(
            "rank and pool must be positive (rank {rank}, pool {pool})"
        )));
    }
    if rank >= pool {
        return Err(Error::Domain(format!(
            "rank {rank} must be below the pool size {pool} (percentile 0 has no z-score)"
        )));
    }
    Ok(quantile(1.0 - rank as f64 / pool as f64))
}

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
#[allow(clippy::excessive_precision)]
const GK15_NODES: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const GK15_KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for nodes 1, 3, 5 and the centre.
#[allow(clippy::excessive_precision)]
const GK15_GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Segment {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let f_centre = f(centre);
    let mut kronrod = GK15_KRONROD_WEIGHTS[7] * f_centre;
    let mut gauss = GK15_GAUSS_WEIGHTS[3] * f_centre;
    for (j, (&node, &wk)) in GK15_NODES[..7].iter().zip(&GK15_KRONROD_WEIGHTS[..7]).enumerate() {
        let dx = half * node;
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += wk * pair;
        if j % 2 == 1 {
            gauss += GK15_GAUSS_WEIGHTS[j / 2] * pair;
        }
    }
    Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[lo, hi]`.
///
/// The segment with the largest error estimate is bisected until the summed
/// error falls under `spec.abs_tol()`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Domain(format!(
            "integration bounds must be finite, got [{lo}, {hi}]"
        )));
    }
    if lo > hi {
        return Err(Error::Domain(format!(
            "integration requires lo <= hi, got [{lo}, {hi}]"
        )));
    }
    if lo == hi {
        return Ok(0.0);
    }

    let first = gauss_kronrod_15(&f, lo, hi);
    let mut total = first.value;
    let mut total_error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);

    let mut subdivisions = 1;
    while total_error > spec.abs_tol {
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::Convergence {
                estimate: total,
                error: total_error,
            });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.lo + worst.hi);
        let left = gauss_kronrod_15(&f, worst.lo, mid);
        let right = gauss_kronrod_15(&f, mid, worst.hi);
        total += left.value + right.value - worst.value;
        total_error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;

        // Re-sum occasionally so cancellation in the running totals cannot
        // keep the loop alive after the segments themselves have converged.
        if subdivisions % 32 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_error = heap.iter().map(|s| s.error).sum();
        }
    }
    if !total.is_finite() {
        return Err(Error::Domain("integrand produced a non-finite value".into()));
    }
    Ok(total)
}

/// Integral over `[-half_width, half_width]`, standing in for the whole line.
pub fn integrate_line<F: Fn(f64) -> f64>(f: F, spec: &QuadratureSpec) -> Result<f64> {
    integrate(f, -spec.half_width, spec.half_width, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// exp(−z²/2)/√(2π) by Taylor series with compensated summation.
    fn pdf_by_series(z: f64) -> f64 {
        let x = -0.5 * z * z;
        let mut term = 1.0_f64;
        let mut sum = 1.0_f64;
        let mut comp = 0.0_f64;
        for n in 1..200 {
            term *= x / n as f64;
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            if term.abs() < 1e-30 {
                break;
            }
        }
        sum / (2.0 * PI).sqrt()
    }

    /// Composite Simpson rule, independent of the adaptive integrator.
    fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
        let n = if n % 2 == 1 { n + 1 } else { n };
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn pdf_values() {
        assert!((normal_pdf(0.0).unwrap() - 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(normal_pdf(1.7).unwrap(), normal_pdf(-1.7).unwrap());
        let z = 2.38;
        let reference = pdf_by_series(z);
        assert!((normal_pdf(z).unwrap() - reference).abs() < 1e-12, "{reference}");
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        assert!(normal_pdf(f64::NAN).is_err());
        assert!(normal_cdf(f64::INFINITY).is_err());
        assert!(normal_sf(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn cdf_values() {
        assert_eq!(normal_cdf(0.0).unwrap(), 0.5);
        assert!((normal_cdf(2.38).unwrap() - 0.99134).abs() < 5e-6);
        let by_simpson = simpson(pdf, -8.0, 1.0, 20_000);
        assert!((by_simpson - 0.841_344_746_1).abs() < 1e-10);
        assert!((normal_cdf(1.0).unwrap() - by_simpson).abs() < 1e-10);
    }

    #[test]
    fn quantile_values() {
        assert!((normal_quantile(0.99134).unwrap() - 2.38).abs() < 0.005);
        assert!((normal_quantile(0.999772).unwrap() - 3.51).abs() < 0.005);
        assert!(normal_quantile(0.5).unwrap().abs() < 1e-15);
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(normal_quantile(p).is_err(), "{p}");
        }
    }

    #[test]
    fn quantile_inverts_cdf_to_1e9() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let z = normal_quantile(p).unwrap();
            assert!((cdf(z) - p).abs() < 1e-9, "p={p}");
        }
        for p in [1e-12, 1e-8, 1e-4, 1.0 - 1e-4, 1.0 - 1e-8] {
            let z = quantile(p);
            assert!(((cdf(z) - p) / p.min(1.0 - p)).abs() < 1e-9, "p={p}");
        }
    }

    #[test]
    fn rank_to_z_matches_worked_thresholds() {
        assert!((rank_to_z(4, 2887).unwrap() - 3.00).abs() < 0.01);
        assert!((rank_to_z(25, 2887).unwrap() - 2.38).abs() < 0.01);
        assert!((rank_to_z(898, 96_619).unwrap() - 2.35).abs() < 0.01);
    }

    #[test]
    fn rank_to_z_rejects_out_of_range() {
        assert!(rank_to_z(2887, 2887).is_err());
        assert!(rank_to_z(3000, 2887).is_err());
        assert!(rank_to_z(0, 2887).is_err());
    }

    #[test]
    fn rank_to_z_decreasing() {
        let pool = 500;
        let zs: Vec<f64> = (1..pool).map(|k| rank_to_z(k, pool).unwrap()).collect();
        assert!(zs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn ln_sf_is_continuous_at_the_switch() {
        let below = sf(34.999_999).ln();
        let above = ln_sf(35.000_001);
        assert!((below - above).abs() < 1e-3);
        assert!(ln_sf(60.0).is_finite());
        assert!((ln_sf(1.0) - sf(1.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn integrate_examples() {
        let spec = QuadratureSpec::default();
        assert!((integrate(pdf, -8.0, 8.0, &spec).unwrap() - 1.0).abs() < 1e-9);
        assert!((integrate(pdf, 0.0, 8.0, &spec).unwrap() - 0.5).abs() < 1e-9);
        assert!(integrate(|z| z * pdf(z), -8.0, 8.0, &spec).unwrap().abs() < 1e-9);
        assert_eq!(integrate(pdf, 1.3, 1.3, &spec).unwrap(), 0.0);
    }

    #[test]
    fn integrate_reports_convergence_failure() {
        let spec = QuadratureSpec::new(1e-14, 8.0, 16).unwrap();
        // A kink the rule cannot resolve within 16 subdivisions.
        let err = integrate(|x: f64| (x - 0.123_456_789).abs().sqrt(), -8.0, 8.0, &spec).unwrap_err();
        match err {
            Error::Convergence { estimate, .. } => assert!(estimate > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quadrature_spec_invariants() {
        assert!(QuadratureSpec::new(0.0, 8.0, 64).is_err());
        assert!(QuadratureSpec::new(1e-10, 5.0, 64).is_err());
        assert!(QuadratureSpec::new(1e-10, 8.0, 8).is_err());
        assert!(QuadratureSpec::new(1e-10, 6.0, 16).is_ok());
    }
}
