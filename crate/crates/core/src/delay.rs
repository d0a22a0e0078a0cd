//! Mean local delay: the expected number of slots until the first success.
//!
//! When interferers move independently between slots the delay is the inverse
//! of the single-slot success probability. When they stay put, the delay is
//! `E{1/p(Phi)}` for the conditional success probability `p(Phi)`, which we
//! expand as
//!
//! ```text
//! sum_{T=0}^{T0} E{(1 - p)^T} = sum_{t=0}^{T0} (-1)^t C(T0+1, t+1) L_t,   L_t = E{p^t}.
//! ```
//!
//! `L_t` is the Laplace transform of the interference under gamma fading of
//! shape `t`. The binomials reach `2^(T0+1)`, so the sum is carried out in
//! arbitrary precision.

use std::io::Write;

use astro_float_num::{BigFloat, Consts, RoundingMode, Sign};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::fit_gamma;
use crate::model::{db_to_linear, LinkConfig, TrafficModel};
use crate::moments::{mean_interference, nakagami_moments};
use crate::outage::ppp_exponent;

const RM: RoundingMode = RoundingMode::ToEven;

/// Single-slot model used for the i.i.d. delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayModel {
    /// Exact Poisson transform at the same intensity.
    Ppp,
    /// Moment-matched gamma interference.
    GammaFit,
}

/// Source of the per-`t` transforms `L_t` in the static series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LtSource {
    /// `(1 + s beta(t))^-k(t)` from the gamma fit to the shape-`t` moments.
    GammaFit,
    /// Exact Poisson transform under shape-`t` fading.
    PppExact,
}

fn slot_s(theta: f64, pr: f64) -> Result<f64> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!(
            "theta = {theta} must be finite and non-negative"
        )));
    }
    Ok(theta / pr)
}

fn delay_from_log(log_delay: f64) -> Result<f64> {
    let d = log_delay.exp();
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::DivergentDelay {
            success: (-log_delay).exp(),
        })
    }
}

/// Mean delay when the interferer positions and fading are redrawn every slot.
pub fn mean_delay_iid(traffic: &TrafficModel, link: &LinkConfig, theta: f64, model: DelayModel) -> Result<f64> {
    let s = slot_s(theta, link.pr())?;
    if s == 0.0 {
        return Ok(1.0);
    }
    let log_delay = match model {
        DelayModel::Ppp => 2.0 * traffic.lambda() * ppp_exponent(link, s)?,
        DelayModel::GammaFit => {
            let g = fit_gamma(&nakagami_moments(traffic, link, 1)?)?;
            g.k * (s * g.beta).ln_1p()
        }
    };
    delay_from_log(log_delay)
}

/// Static Poisson field: `E{1/p} = exp(s E{I})`.
pub fn mean_delay_static_ppp(traffic: &TrafficModel, link: &LinkConfig, theta: f64) -> Result<f64> {
    let s = slot_s(theta, link.pr())?;
    delay_from_log(s * mean_interference(traffic, link))
}

/// Truncation, precision and convergence policy of the static series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesSpec {
    /// Largest power `T` of the failure probability kept.
    pub t0: usize,
    /// Working precision in decimal digits.
    pub digits: u32,
    /// Number of truncation points compared, `t0, t0 - stride, ...`.
    pub window: usize,
    pub stride: usize,
    /// Largest relative change allowed between neighbouring truncation points.
    pub tolerance: f64,
}

impl Default for SeriesSpec {
    fn default() -> Self {
        Self {
            t0: 2000,
            digits: 700,
            window: 3,
            stride: 250,
            tolerance: 1e-4,
        }
    }
}

impl SeriesSpec {
    /// Digits needed to absorb binomials of size `2^(t0+1)`, plus 50 guard digits.
    pub fn required_digits(t0: usize) -> u32 {
        ((t0 as f64 + 1.0) * std::f64::consts::LOG10_2).ceil() as u32 + 50
    }

    /// A spec with the given truncation and just enough precision for it.
    pub fn for_truncation(t0: usize) -> Self {
        Self {
            t0,
            digits: Self::required_digits(t0),
            stride: (t0 / 8).max(1),
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.t0 == 0 {
            return Err(Error::Domain("t0 must be positive".into()));
        }
        let required = Self::required_digits(self.t0);
        if self.digits < required {
            return Err(Error::PrecisionInsufficient {
                required,
                given: self.digits,
            });
        }
        if self.window < 2 || self.stride == 0 || (self.window - 1) * self.stride >= self.t0 {
            return Err(Error::Domain(format!(
                "window of {} points with stride {} does not fit below t0 = {}",
                self.window, self.stride, self.t0
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Domain("tolerance must be positive".into()));
        }
        Ok(())
    }

    fn bits(&self) -> usize {
        let bits = (f64::from(self.digits) * std::f64::consts::LOG2_10).ceil() as usize;
        bits.div_ceil(64) * 64
    }

    /// Truncation points in increasing order.
    pub fn truncation_points(&self) -> Vec<usize> {
        (0..self.window).rev().map(|i| self.t0 - i * self.stride).collect()
    }
}

/// Result of a converged static series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesOutcome {
    pub value: f64,
    /// `(T, partial sum)` at each truncation point of the window.
    pub window: Vec<(usize, f64)>,
}

/// Nearest f64 (up to truncation of the mantissa beyond 64 bits).
pub(crate) fn big_to_f64(x: &BigFloat) -> f64 {
    let Some((mantissa, _, sign, exponent, _)) = x.as_raw_parts() else {
        return if x.is_inf_pos() {
            f64::INFINITY
        } else if x.is_inf_neg() {
            f64::NEG_INFINITY
        } else {
            f64::NAN
        };
    };
    let top = match mantissa.last() {
        Some(&w) if w != 0 => w,
        _ => return 0.0,
    };
    // value = 0.m * 2^exponent with the top word holding the leading bits
    let mut v = top as f64 / 2f64.powi(64);
    let mut e = exponent;
    while e > 0 {
        let step = e.min(1000);
        v *= 2f64.powi(step);
        e -= step;
    }
    while e < 0 {
        let step = e.max(-1000);
        v *= 2f64.powi(step);
        e -= step;
        if v == 0.0 {
            break;
        }
    }
    if sign == Sign::Neg {
        -v
    } else {
        v
    }
}

struct Hp {
    p: usize,
    cc: Consts,
}

impl Hp {
    fn new(p: usize) -> Result<Self> {
        let cc = Consts::new().map_err(|e| Error::Domain(format!("high-precision constants: {e:?}")))?;
        Ok(Self { p, cc })
    }

    fn f(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, self.p)
    }

    fn int(&self, n: u64) -> BigFloat {
        BigFloat::from_u64(n, self.p)
    }

    fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, self.p, RM)
    }

    fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, self.p, RM)
    }

    fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, self.p, RM)
    }

    fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, self.p, RM)
    }

    fn ln(&mut self, a: &BigFloat) -> BigFloat {
        a.ln(self.p, RM, &mut self.cc)
    }

    fn exp(&mut self, a: &BigFloat) -> BigFloat {
        a.exp(self.p, RM, &mut self.cc)
    }
}

/// `L_0 ..= L_{t_max}` in working precision. Inputs are lifted from f64
/// exactly; all arithmetic after that is carried out at `hp.p` bits.
fn laplace_sequence(
    hp: &mut Hp,
    traffic: &TrafficModel,
    link: &LinkConfig,
    s: f64,
    t_max: usize,
    source: LtSource,
) -> Vec<BigFloat> {
    let one = hp.int(1);
    let lambda = hp.f(traffic.lambda());
    let r0 = hp.f(link.r0());
    let eta = hp.f(link.eta());
    let ln_r0 = hp.ln(&r0);
    let eta_ln_r0 = hp.mul(&eta, &ln_r0).neg();
    let r0_pow = hp.exp(&eta_ln_r0);
    let u0 = hp.mul(&hp.f(s), &r0_pow);
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(one.clone());
    if t_max == 0 {
        return out;
    }
    match source {
        LtSource::GammaFit => {
            // k(t) = 2 lambda t r0 (2 eta - 1) / ((eta - 1)^2 (1 + t a^2)),
            // s beta(t) = u0 (1 + t a^2) (eta - 1) / (2 eta - 1), a = 1 - lambda c.
            let a = hp.sub(&one, &hp.mul(&lambda, &hp.f(traffic.hardcore())));
            let a2 = hp.mul(&a, &a);
            let em1 = hp.sub(&eta, &one);
            let tem1 = hp.sub(&hp.add(&eta, &eta), &one);
            let k_unit = hp.div(
                &hp.mul(&hp.mul(&hp.int(2), &hp.mul(&lambda, &r0)), &tem1),
                &hp.mul(&em1, &em1),
            );
            let sb_unit = hp.div(&hp.mul(&u0, &em1), &tem1);
            for t in 1..=t_max {
                let tt = hp.int(t as u64);
                let spread = hp.add(&one, &hp.mul(&tt, &a2));
                let k = hp.div(&hp.mul(&k_unit, &tt), &spread);
                let sb = hp.mul(&sb_unit, &spread);
                let ln_l = hp.ln(&hp.add(&one, &sb));
                let log_l = hp.mul(&k, &ln_l);
                out.push(hp.exp(&log_l.neg()));
            }
        }
        LtSource::PppExact => {
            // int_{r0}^inf (1 - (1 + s x^-eta)^-t) dx = r0 (F_t - 1) with
            // F_t = (1+u0)^-t sum_n (t)_n / (1 - 1/eta)_n w^n,  w = u0 / (1 + u0).
            let one_u = hp.add(&one, &u0);
            let w = hp.div(&u0, &one_u);
            let inv_one_u = hp.div(&one, &one_u);
            let c0 = hp.sub(&one, &hp.div(&one, &eta));
            let scale = hp.mul(&hp.int(2), &hp.mul(&lambda, &r0));
            // w / (1 - 1/eta + n), shared by every t
            let mut ratios: Vec<BigFloat> = Vec::new();
            let cutoff_exp = -(hp.p as i64) - 8;
            let (w_f, c0_f) = (big_to_f64(&w), 1.0 - 1.0 / link.eta());
            let mut prefactor = one.clone();
            for t in 1..=t_max {
                prefactor = hp.mul(&prefactor, &inv_one_u);
                let mut term = one.clone();
                let mut sum = one.clone();
                let mut n = 0usize;
                loop {
                    if ratios.len() <= n {
                        let denom = hp.add(&c0, &hp.int(n as u64));
                        ratios.push(hp.div(&w, &denom));
                    }
                    term = hp.mul(&hp.mul(&term, &hp.int((t + n) as u64)), &ratios[n]);
                    n += 1;
                    let before = sum.clone();
                    sum = hp.add(&sum, &term);
                    let te = i64::from(term.exponent().unwrap_or(i32::MIN));
                    let se = i64::from(before.exponent().unwrap_or(0));
                    // past the peak and below the working precision
                    if te - se < cutoff_exp && (t + n) as f64 * w_f < c0_f + n as f64 {
                        break;
                    }
                }
                let f = hp.mul(&prefactor, &sum);
                let exponent = hp.mul(&scale, &hp.sub(&f, &one));
                out.push(hp.exp(&exponent.neg()));
            }
        }
    }
    out
}

/// Partial sums of the static series at each truncation point of `spec`,
/// without judging convergence.
pub fn static_series_partial_sums(
    traffic: &TrafficModel,
    link: &LinkConfig,
    theta: f64,
    spec: &SeriesSpec,
    source: LtSource,
) -> Result<Vec<(usize, f64)>> {
    spec.check()?;
    let s = slot_s(theta, link.pr())?;
    let points = spec.truncation_points();
    if s == 0.0 {
        return Ok(points.into_iter().map(|t| (t, 1.0)).collect());
    }
    let mut hp = Hp::new(spec.bits())?;
    let l = laplace_sequence(&mut hp, traffic, link, s, spec.t0, source);
    Ok(points
        .into_iter()
        .map(|t0| {
            // C(T0+1, t+1) from C(T0+1, 1) = T0 + 1 by C(n, j+1) = C(n, j) (n - j) / (j + 1)
            let n = t0 as u64 + 1;
            let mut binom = hp.int(n);
            let mut sum = hp.int(0);
            for (t, lt) in l.iter().enumerate().take(t0 + 1) {
                let term = hp.mul(&binom, lt);
                sum = if t % 2 == 0 {
                    hp.add(&sum, &term)
                } else {
                    hp.sub(&sum, &term)
                };
                let j = t as u64 + 1;
                binom = hp.div(&hp.mul(&binom, &hp.int(n - j)), &hp.int(j + 1));
            }
            (t0, big_to_f64(&sum))
        })
        .collect())
}

/// Mean delay with static interferers from the truncated alternating series.
pub fn mean_delay_static_series(
    traffic: &TrafficModel,
    link: &LinkConfig,
    theta: f64,
    spec: &SeriesSpec,
    source: LtSource,
) -> Result<SeriesOutcome> {
    let window = static_series_partial_sums(traffic, link, theta, spec, source)?;
    let (_, last) = window[window.len() - 1];
    for pair in window.windows(2) {
        let (a, b) = (pair[0].1, pair[1].1);
        if !(b.is_finite() && a.is_finite()) || (b - a).abs() > spec.tolerance * b.abs() {
            return Err(Error::NotConverged { last: b, previous: a });
        }
    }
    Ok(SeriesOutcome { value: last, window })
}

/// One row of a delay sweep; the static hardcore value is `None` when its
/// series did not converge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayRow {
    pub theta_db: f64,
    pub iid_ppp: f64,
    pub iid_hardcore: f64,
    pub static_ppp: f64,
    pub static_hardcore: Option<f64>,
    pub static_hardcore_window: Vec<(usize, f64)>,
}

/// The four delay curves at each threshold of `thetas_db`, grid points in
/// parallel.
pub fn delay_sweep(
    traffic: &TrafficModel,
    link: &LinkConfig,
    thetas_db: &[f64],
    spec: &SeriesSpec,
) -> Result<Vec<DelayRow>> {
    thetas_db
        .par_iter()
        .map(|&theta_db| {
            let l = *link;
            let theta = db_to_linear(theta_db);
            let poisson = traffic.poisson_equivalent();
            let series = static_series_partial_sums(traffic, &l, theta, spec, LtSource::GammaFit)?;
            let converged = mean_delay_static_series_from(&series, spec.tolerance);
            Ok(DelayRow {
                theta_db,
                iid_ppp: mean_delay_iid(&poisson, &l, theta, DelayModel::Ppp)?,
                iid_hardcore: mean_delay_iid(traffic, &l, theta, DelayModel::GammaFit)?,
                static_ppp: mean_delay_static_ppp(&poisson, &l, theta)?,
                static_hardcore: converged,
                static_hardcore_window: series,
            })
        })
        .collect()
}

fn mean_delay_static_series_from(window: &[(usize, f64)], tolerance: f64) -> Option<f64> {
    let ok = window
        .windows(2)
        .all(|p| p[1].1.is_finite() && (p[1].1 - p[0].1).abs() <= tolerance * p[1].1.abs());
    ok.then(|| window[window.len() - 1].1)
}

pub fn write_delay_csv<W: Write>(rows: &[DelayRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Domain(format!("csv output: {e}"));
    w.write_record([
        "theta_db",
        "delay_iid_ppp",
        "delay_iid_hc",
        "delay_static_ppp",
        "delay_static_hc",
        "static_hc_converged",
    ])
    .map_err(io)?;
    for r in rows {
        let last = r.static_hardcore_window.last().map_or(f64::NAN, |x| x.1);
        w.write_record([
            r.theta_db.to_string(),
            r.iid_ppp.to_string(),
            r.iid_hardcore.to_string(),
            r.static_ppp.to_string(),
            r.static_hardcore.unwrap_or(last).to_string(),
            r.static_hardcore.is_some().to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Domain(format!("csv output: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outage::outage_gamma;

    fn fig6(pr: f64) -> (TrafficModel, LinkConfig) {
        (
            TrafficModel::new(0.05, 8.0).unwrap(),
            LinkConfig::new(100.0, 4.0, pr).unwrap(),
        )
    }

    /// theta giving a prescribed s E{I}.
    fn theta_for(traffic: &TrafficModel, link: &LinkConfig, s_ei: f64) -> f64 {
        s_ei / mean_interference(traffic, link) * link.pr()
    }

    #[test]
    fn big_float_round_trip() {
        for x in [1.0, -3.25, 1.5e-300, 7.0e250, 0.1, 1.0 / 3.0] {
            assert_eq!(big_to_f64(&BigFloat::from_f64(x, 256)), x);
        }
        assert_eq!(big_to_f64(&BigFloat::from_f64(0.0, 128)), 0.0);
    }

    #[test]
    fn zero_threshold_means_one_slot() {
        let (tr, l) = fig6(8e-6);
        assert_eq!(mean_delay_iid(&tr, &l, 0.0, DelayModel::Ppp).unwrap(), 1.0);
        assert_eq!(mean_delay_iid(&tr, &l, 0.0, DelayModel::GammaFit).unwrap(), 1.0);
        assert_eq!(mean_delay_static_ppp(&tr, &l, 0.0).unwrap(), 1.0);
        let spec = SeriesSpec::for_truncation(40);
        let out = mean_delay_static_series(&tr, &l, 0.0, &spec, LtSource::GammaFit).unwrap();
        assert_eq!(out.value, 1.0);
    }

    #[test]
    fn gamma_delay_is_inverse_success() {
        let (tr, l) = fig6(8e-6);
        let g = fit_gamma(&nakagami_moments(&tr, &l, 1).unwrap()).unwrap();
        for theta in [0.5, 3.0, 10.0, 31.6] {
            let d = mean_delay_iid(&tr, &l, theta, DelayModel::GammaFit).unwrap();
            let p_out = outage_gamma(&g, theta, l.pr()).unwrap();
            assert!((d * (1.0 - p_out) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn static_ppp_closed_form() {
        let (tr, l) = fig6(8e-6);
        let theta = theta_for(&tr, &l, 0.5);
        let d = mean_delay_static_ppp(&tr, &l, theta).unwrap();
        assert!((d - 1.648_721_270_700_128).abs() < 1e-12);
    }

    #[test]
    fn static_ppp_dominates_iid_ppp() {
        let (tr, l) = fig6(8e-6);
        let poisson = tr.poisson_equivalent();
        for db in [0.0, 5.0, 10.0, 15.0, 20.0] {
            let theta = 10f64.powf(db / 10.0);
            let iid = mean_delay_iid(&poisson, &l, theta, DelayModel::Ppp).unwrap();
            let st = mean_delay_static_ppp(&poisson, &l, theta).unwrap();
            assert!(st >= iid, "{db} dB: static {st} < iid {iid}");
        }
    }

    #[test]
    fn divergent_delay_is_reported() {
        let (tr, l) = fig6(1e-30);
        let err = mean_delay_static_ppp(&tr, &l, 1e3).unwrap_err();
        assert!(matches!(err, Error::DivergentDelay { .. }));
    }

    #[test]
    fn precision_policy() {
        assert_eq!(SeriesSpec::required_digits(2000), 653);
        SeriesSpec::default().check().unwrap();
        let low = SeriesSpec {
            digits: 600,
            ..SeriesSpec::default()
        };
        assert_eq!(
            low.check().unwrap_err(),
            Error::PrecisionInsufficient {
                required: 653,
                given: 600
            }
        );
    }

    #[test]
    fn first_transform_matches_single_slot_fit() {
        let (tr, l) = fig6(8e-6);
        let s = 10.0 / l.pr();
        let mut hp = Hp::new(256).unwrap();
        let seq = laplace_sequence(&mut hp, &tr, &l, s, 3, LtSource::GammaFit);
        let g = fit_gamma(&nakagami_moments(&tr, &l, 1).unwrap()).unwrap();
        assert!((big_to_f64(&seq[1]) / g.laplace(s) - 1.0).abs() < 1e-12);
        for t in 2..=3 {
            let gt = fit_gamma(&nakagami_moments(&tr, &l, t).unwrap()).unwrap();
            assert!((big_to_f64(&seq[t as usize]) / gt.laplace(s) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ppp_transform_matches_quadrature() {
        use crate::specfun::{integrate_semi_infinite, QuadratureSpec};
        let (tr, l) = fig6(8e-6);
        let s = 20.0 / l.pr();
        let mut hp = Hp::new(256).unwrap();
        let seq = laplace_sequence(&mut hp, &tr, &l, s, 7, LtSource::PppExact);
        for t in [1, 2, 7] {
            let e = integrate_semi_infinite(
                |x| 1.0 - (1.0 + s * x.powf(-4.0)).powi(-t),
                100.0,
                &QuadratureSpec::default().with_rel_tol(1e-12),
            )
            .unwrap()
            .value;
            let direct = (-2.0 * tr.lambda() * e).exp();
            assert!((big_to_f64(&seq[t as usize]) / direct - 1.0).abs() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn short_series_is_sum_of_failure_powers() {
        // with T0 = 2 the series is 1 + E(1-p) + E(1-p)^2 = 3 - 3 L1 + L2
        let (tr, l) = fig6(8e-6);
        let s = 10.0 / l.pr();
        let spec = SeriesSpec {
            t0: 2,
            digits: 60,
            window: 2,
            stride: 1,
            tolerance: 1.0,
        };
        let sums = static_series_partial_sums(&tr, &l, 10.0, &spec, LtSource::GammaFit).unwrap();
        let l1 = fit_gamma(&nakagami_moments(&tr, &l, 1).unwrap()).unwrap().laplace(s);
        let l2 = fit_gamma(&nakagami_moments(&tr, &l, 2).unwrap()).unwrap().laplace(s);
        assert!((sums[0].1 - (2.0 - l1)).abs() < 1e-12);
        assert!((sums[1].1 - (3.0 - 3.0 * l1 + l2)).abs() < 1e-12);
    }

    #[test]
    fn ppp_series_reaches_closed_form_at_small_truncation() {
        let (tr, l) = fig6(8e-6);
        let poisson = tr.poisson_equivalent();
        let theta = theta_for(&poisson, &l, 0.1);
        let spec = SeriesSpec::for_truncation(200);
        let out = mean_delay_static_series(&poisson, &l, theta, &spec, LtSource::PppExact).unwrap();
        let exact = mean_delay_static_ppp(&poisson, &l, theta).unwrap();
        assert!((out.value / exact - 1.0).abs() < 1e-3, "{} vs {exact}", out.value);
    }
}
