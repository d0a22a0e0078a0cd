//! Gauss hypergeometric function and adaptive Gauss-Kronrod quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const HYP_MAX_TERMS: usize = 10_000;
const HYP_EPS: f64 = 1e-16;

/// Gauss hypergeometric function `2F1(a, b; c; z)` for `z` in `(-1, 0]`.
///
/// The argument is mapped to `z/(z-1)` in `[0, 1/2)` by the Pfaff
/// transformation `2F1(a,b;c;z) = (1-z)^-a 2F1(a, c-b; c; z/(z-1))` and the
/// power series is summed there.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if !(z > -1.0 && z <= 0.0) {
        return Err(Error::Domain(format!("2F1 argument z = {z} not in (-1, 0]")));
    }
    if c <= 0.0 && c == c.floor() {
        return Err(Error::Domain(format!(
            "2F1 parameter c = {c} is a non-positive integer"
        )));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let w = z / (z - 1.0);
    let series = hyp2f1_series(a, c - b, c, w)?;
    Ok((1.0 - z).powf(-a) * series)
}

/// Plain power series of `2F1` for `|z| < 1`.
pub(crate) fn hyp2f1_series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..HYP_MAX_TERMS {
        let n = n as f64;
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z;
        sum += term;
        // The term ratio tends to z, so the remaining tail is at most |term|
        // once |z| <= 1/2.
        if term == 0.0 || term.abs() <= HYP_EPS * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::NoConvergence { terms: HYP_MAX_TERMS })
}

/// Tolerances and limits for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Finite upper limit used by [`integrate_power_tail`] in place of infinity.
    pub tail_cutoff: Option<f64>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: f64::MIN_POSITIVE,
            rel_tol: 1e-10,
            max_subdivisions: 4000,
            tail_cutoff: None,
        }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::Domain("quadrature tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Integral estimate with its error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

// Gauss-Kronrod 7/15 abscissae and weights.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
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
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn qk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut gauss = fc * WG[3];
    let mut kronrod = fc * WGK[7];
    let mut res_abs = kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = kronrod * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    let round_off = 50.0 * f64::EPSILON * res_abs;
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(round_off);
    }
    (result, err)
}

#[derive(Debug)]
struct Segment {
    a: f64,
    b: f64,
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
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive integral of `f` over `[a, b]`, splitting first at `breaks`.
///
/// Breakpoints outside `(a, b)` are ignored. Subdivision is global: the
/// segment with the largest error is bisected until the total error meets
/// `max(abs_tol, rel_tol * |value|)`.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<Integral> {
    spec.check()?;
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    if b < a {
        let r = integrate_with_breaks(f, b, a, breaks, spec)?;
        return Ok(Integral {
            value: -r.value,
            error: r.error,
        });
    }
    let mut points: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    points.insert(0, a);
    points.push(b);

    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in points.windows(2) {
        let (value, error) = qk15(&f, w[0], w[1]);
        total += value;
        total_err += error;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }

    let mut segments = heap.len();
    loop {
        if !total.is_finite() || !total_err.is_finite() {
            return Err(Error::ToleranceNotMet {
                estimate: total,
                error: total_err,
            });
        }
        let target = spec.abs_tol.max(spec.rel_tol * total.abs());
        if total_err <= target {
            break;
        }
        if segments >= spec.max_subdivisions {
            return Err(Error::ToleranceNotMet {
                estimate: total,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // Cannot split further in floating point.
            return Err(Error::ToleranceNotMet {
                estimate: total,
                error: total_err,
            });
        }
        let (v1, e1) = qk15(&f, worst.a, mid);
        let (v2, e2) = qk15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        segments += 1;
    }
    // Re-sum to shed the drift of the running updates.
    let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    Ok(Integral { value, error })
}

/// Adaptive integral of `f` over `[a, b]`.
pub fn integrate_1d<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Integral> {
    integrate_with_breaks(f, a, b, &[], spec)
}

/// Integral of `f` over `[a, inf)`.
///
/// For `a > 0` the substitution `x = a/(1-u)` maps the range onto `[0, 1)`,
/// which suits integrands decaying like a power of `x`; otherwise
/// `x = a + u/(1-u)` is used.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(f: F, a: f64, spec: &QuadratureSpec) -> Result<Integral> {
    if a > 0.0 {
        integrate_1d(
            |u| {
                let one_minus = 1.0 - u;
                if one_minus <= 0.0 {
                    return 0.0;
                }
                let x = a / one_minus;
                let v = f(x);
                if v == 0.0 {
                    0.0
                } else {
                    v * a / (one_minus * one_minus)
                }
            },
            0.0,
            1.0,
            spec,
        )
    } else {
        integrate_1d(
            |u| {
                let one_minus = 1.0 - u;
                if one_minus <= 0.0 {
                    return 0.0;
                }
                let v = f(a + u / one_minus);
                if v == 0.0 {
                    0.0
                } else {
                    v / (one_minus * one_minus)
                }
            },
            0.0,
            1.0,
            spec,
        )
    }
}

/// Integral of `f` over `[a, inf)` truncated at `spec.tail_cutoff` (default
/// `1e3 * a`), for integrands bounded by `bound * x^-p` with `p > 1`. The
/// discarded tail is bounded analytically and added to the error estimate.
pub fn integrate_power_tail<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    bound: f64,
    p: f64,
    spec: &QuadratureSpec,
) -> Result<Integral> {
    if p <= 1.0 {
        return Err(Error::Domain(format!("tail exponent p = {p} must exceed 1")));
    }
    let x_max = spec.tail_cutoff.unwrap_or(1e3 * a.abs().max(1.0));
    if x_max <= a {
        return Err(Error::Domain(format!(
            "tail cutoff {x_max} must exceed the lower limit {a}"
        )));
    }
    // Geometric breaks keep the power-law body well resolved.
    let mut breaks = Vec::new();
    if a > 0.0 {
        let mut x = 2.0 * a;
        while x < x_max {
            breaks.push(x);
            x *= 2.0;
        }
    }
    let body = integrate_with_breaks(f, a, x_max, &breaks, spec)?;
    let tail = bound * x_max.powf(1.0 - p) / (p - 1.0);
    Ok(Integral {
        value: body.value,
        error: body.error + tail,
    })
}
