//! The hardcore renewal process: correlation functions, nearest-interferer
//! distance laws and samplers.
//!
//! Headways are `c + Exp(mu)`. The pair correlation function is the renewal
//! density scaled by `lambda`, a sum of shifted Erlang densities.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{LinkConfig, TrafficModel};
use crate::specfun::{integrate_with_breaks, QuadratureSpec};

/// Pair correlation `rho2(d)` of the stationary process.
///
/// Zero below the hardcore distance, `lambda * mu` just above it, and tending
/// to `lambda^2` with damped oscillation. Each Erlang term is evaluated in log
/// space so large term counts do not overflow.
pub fn pcf(traffic: &TrafficModel, d: f64) -> f64 {
    let lambda = traffic.lambda();
    let c = traffic.hardcore();
    let d = d.abs();
    if c == 0.0 {
        return lambda * lambda;
    }
    if d < c {
        return 0.0;
    }
    let mu = traffic.mu();
    let ln_mu = mu.ln();
    let terms = (d / c).floor() as usize;
    let mut sum = 0.0;
    // ln((j-1)!) accumulated along the loop.
    let mut ln_fact = 0.0;
    for j in 1..=terms {
        if j > 1 {
            ln_fact += ((j - 1) as f64).ln();
        }
        let x = d - j as f64 * c;
        if x <= 0.0 {
            if j == 1 {
                sum += mu;
            }
            continue;
        }
        let jf = j as f64;
        sum += (jf * ln_mu + (jf - 1.0) * x.ln() - mu * x - ln_fact).exp();
    }
    lambda * sum
}

/// Third-order product density of an ordered triple with consecutive gaps
/// `d1` and `d2`.
pub fn third_order_intensity(traffic: &TrafficModel, d1: f64, d2: f64) -> f64 {
    pcf(traffic, d1) * pcf(traffic, d2) / traffic.lambda()
}

fn require_outside(link: &LinkConfig, x: f64) -> Result<()> {
    if x < link.r0() || x.is_nan() {
        return Err(Error::Domain(format!(
            "distance {x} is inside the guard zone r0 = {}",
            link.r0()
        )));
    }
    Ok(())
}

/// CDF of the distance to the nearest interferer outside the guard zone,
/// treating the two sides as independent.
pub fn nearest_distance_cdf(traffic: &TrafficModel, link: &LinkConfig, x: f64) -> Result<f64> {
    require_outside(link, x)?;
    let (lambda, c, mu) = (traffic.lambda(), traffic.hardcore(), traffic.mu());
    let y = x - link.r0();
    Ok(if y < c {
        let q = 1.0 - lambda * y;
        1.0 - q * q
    } else {
        let q = 1.0 - lambda * c;
        1.0 - q * q * (-2.0 * mu * (y - c)).exp()
    })
}

/// Density matching [`nearest_distance_cdf`].
pub fn nearest_distance_pdf(traffic: &TrafficModel, link: &LinkConfig, x: f64) -> Result<f64> {
    require_outside(link, x)?;
    let (lambda, c, mu) = (traffic.lambda(), traffic.hardcore(), traffic.mu());
    let y = x - link.r0();
    Ok(if y < c {
        2.0 * lambda * (1.0 - lambda * y)
    } else {
        2.0 * lambda * (1.0 - lambda * c) * (-2.0 * mu * (y - c)).exp()
    })
}

/// Nearest-neighbour distance CDF from a typical vehicle, with no guard zone.
pub fn nearest_distance_cdf_noguard(traffic: &TrafficModel, x: f64) -> f64 {
    let (lambda, c, mu) = (traffic.lambda(), traffic.hardcore(), traffic.mu());
    if x <= 0.0 {
        0.0
    } else if x < 0.5 * c {
        2.0 * lambda * x
    } else {
        1.0 - (1.0 - lambda * c) * (-mu * (2.0 * x - c)).exp()
    }
}

/// CDF of the nearest interferer on one half-axis, i.e. the forward
/// recurrence distance measured from `r0`.
pub fn one_sided_nearest_cdf(traffic: &TrafficModel, link: &LinkConfig, x: f64) -> Result<f64> {
    require_outside(link, x)?;
    Ok(forward_recurrence_cdf(traffic, x - link.r0()))
}

/// CDF of the distance from a fixed location to the next point.
pub fn forward_recurrence_cdf(traffic: &TrafficModel, y: f64) -> f64 {
    let (lambda, c, mu) = (traffic.lambda(), traffic.hardcore(), traffic.mu());
    if y <= 0.0 {
        0.0
    } else if y < c {
        lambda * y
    } else {
        1.0 - (1.0 - lambda * c) * (-mu * (y - c)).exp()
    }
}

/// Inverse of [`forward_recurrence_cdf`] for `u` in `[0, 1)`.
pub fn forward_recurrence_quantile(traffic: &TrafficModel, u: f64) -> f64 {
    let (lambda, c, mu) = (traffic.lambda(), traffic.hardcore(), traffic.mu());
    let occupancy = lambda * c;
    if u < occupancy {
        u / lambda
    } else {
        c - ((1.0 - u) / (1.0 - occupancy)).ln() / mu
    }
}

/// Coefficient of variation and skewness of the nearest-distance law,
/// by quadrature of its density.
pub fn nearest_distance_shape(traffic: &TrafficModel, link: &LinkConfig) -> Result<(f64, f64)> {
    let r0 = link.r0();
    let c = traffic.hardcore();
    let spec = QuadratureSpec::default().with_rel_tol(1e-12);
    // Work with y = x - r0 so the moments of the shape are well scaled.
    let pdf = |y: f64| nearest_distance_pdf(traffic, link, r0 + y).unwrap_or(0.0);
    // The density decays like exp(-2 mu y); 80 decay lengths is far beyond
    // double precision.
    let upper = c + 80.0 / (2.0 * traffic.mu());
    let breaks = [c];
    let moment = |n: i32| -> Result<f64> {
        Ok(integrate_with_breaks(|y| y.powi(n) * pdf(y), 0.0, upper, &breaks, &spec)?.value)
    };
    let m1 = moment(1)?;
    let m2 = moment(2)?;
    let m3 = moment(3)?;
    let var = m2 - m1 * m1;
    let third = m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3);
    let mean = r0 + m1;
    Ok((var.sqrt() / mean, third / var.powf(1.5)))
}

/// Points of one realization, in increasing order, drawn on `window`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointConfiguration {
    pub positions: Vec<f64>,
    pub window: (f64, f64),
}

impl PointConfiguration {
    /// One coordinate per row, headed by a `position` column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Domain(format!("csv output failed: {e}"));
        wtr.write_record(["position"]).map_err(io)?;
        for x in &self.positions {
            wtr.write_record([format!("{x}")]).map_err(io)?;
        }
        wtr.flush()
            .map_err(|e| Error::Domain(format!("csv output failed: {e}")))?;
        Ok(())
    }

    pub fn min_gap(&self) -> Option<f64> {
        self.positions.windows(2).map(|w| w[1] - w[0]).min_by(f64::total_cmp)
    }
}

/// Stationary draw of the process on `[a, b]`.
pub fn sample_configuration(traffic: &TrafficModel, window: (f64, f64), seed: u64) -> PointConfiguration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_on_window(traffic, window, &mut rng)
}

pub(crate) fn sample_on_window<R: Rng + ?Sized>(
    traffic: &TrafficModel,
    (a, b): (f64, f64),
    rng: &mut R,
) -> PointConfiguration {
    let mut positions = Vec::new();
    let mut x = a + forward_recurrence_quantile(traffic, rng.random::<f64>());
    while x <= b {
        positions.push(x);
        x += headway(traffic, rng);
    }
    PointConfiguration {
        positions,
        window: (a, b),
    }
}

#[inline]
pub(crate) fn headway<R: Rng + ?Sized>(traffic: &TrafficModel, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    traffic.hardcore() + e / traffic.mu()
}

/// How the two sides of the guard zone are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Each half-axis starts with an independent forward-recurrence draw
    /// measured from the guard-zone edge.
    #[default]
    MirroredHalves,
    /// One stationary realization of the whole line around the receiver,
    /// keeping the correlation between points on opposite sides.
    WholeLine,
}

/// Interferer positions with `r0 < |x| <= w`, right side first (increasing
/// distance), then left side (increasing distance, negative coordinates).
pub(crate) fn sample_interferers<R: Rng + ?Sized>(
    traffic: &TrafficModel,
    r0: f64,
    w: f64,
    mode: SamplingMode,
    rng: &mut R,
    out: &mut Vec<f64>,
) {
    out.clear();
    match mode {
        SamplingMode::MirroredHalves => {
            for sign in [1.0, -1.0] {
                let mut x = r0 + forward_recurrence_quantile(traffic, rng.random::<f64>());
                while x <= w {
                    out.push(sign * x);
                    x += headway(traffic, rng);
                }
            }
        }
        SamplingMode::WholeLine => {
            let (back, fwd) = straddling_gap(traffic, rng);
            let mut x = fwd;
            while x <= w {
                if x > r0 {
                    out.push(x);
                }
                x += headway(traffic, rng);
            }
            let mut x = back;
            while x <= w {
                if x > r0 {
                    out.push(-x);
                }
                x += headway(traffic, rng);
            }
        }
    }
}

/// The `k` nearest points beyond `r0` on each side, as unsigned distances.
pub(crate) fn nearest_per_side<R: Rng + ?Sized>(
    traffic: &TrafficModel,
    r0: f64,
    k: usize,
    mode: SamplingMode,
    rng: &mut R,
) -> ([f64; 8], [f64; 8]) {
    debug_assert!(k <= 8);
    let mut right = [0.0; 8];
    let mut left = [0.0; 8];
    match mode {
        SamplingMode::MirroredHalves => {
            for side in [&mut right, &mut left] {
                let mut x = r0 + forward_recurrence_quantile(traffic, rng.random::<f64>());
                for slot in side.iter_mut().take(k) {
                    *slot = x;
                    x += headway(traffic, rng);
                }
            }
        }
        SamplingMode::WholeLine => {
            let (back, fwd) = straddling_gap(traffic, rng);
            for (side, start) in [(&mut right, fwd), (&mut left, back)] {
                let mut x = start;
                while x <= r0 {
                    x += headway(traffic, rng);
                }
                for slot in side.iter_mut().take(k) {
                    *slot = x;
                    x += headway(traffic, rng);
                }
            }
        }
    }
    (right, left)
}

/// Distances from the origin to the points on either side of it in a
/// stationary realization: the straddling headway is length-biased and the
/// origin falls uniformly inside it.
fn straddling_gap<R: Rng + ?Sized>(traffic: &TrafficModel, rng: &mut R) -> (f64, f64) {
    let c = traffic.hardcore();
    let mu = traffic.mu();
    // Length-biased c + Exp(mu) is c + Exp(mu) w.p. lambda*c and
    // c + Gamma(2, mu) otherwise.
    let extra: f64 = if rng.random::<f64>() < traffic.occupancy() {
        Exp1.sample(rng)
    } else {
        Gamma::new(2.0, 1.0).expect("valid shape").sample(rng)
    };
    let span = c + extra / mu;
    let u: f64 = rng.random();
    (u * span, (1.0 - u) * span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hc(lambda: f64, c: f64) -> TrafficModel {
        TrafficModel::new(lambda, c).unwrap()
    }

    #[test]
    fn pcf_vanishes_inside_hardcore() {
        let t = hc(0.1, 4.0);
        assert_eq!(pcf(&t, 2.0), 0.0);
        assert_eq!(pcf(&t, 3.999), 0.0);
    }

    #[test]
    fn pcf_jump_at_hardcore() {
        let t = hc(0.1, 4.0);
        let v = pcf(&t, 4.0 * (1.0 + 1e-9));
        assert!((v - t.lambda() * t.mu()).abs() < 1e-9 * v);
    }

    #[test]
    fn pcf_tends_to_square_intensity() {
        let t = hc(0.1, 4.0);
        let v = pcf(&t, 160.0);
        assert!((v / 0.01 - 1.0).abs() < 0.01, "{v}");
        // Hundreds of terms, no overflow.
        let far = pcf(&t, 4000.5);
        assert!((far / 0.01 - 1.0).abs() < 1e-9, "{far}");
    }

    #[test]
    fn pcf_matches_renewal_convolution() {
        // The renewal density u(d) = sum_j f^{*j}(d) solves
        // u = f + f * u; check the identity at one point by quadrature.
        let t = hc(0.1, 4.0);
        let mu = t.mu();
        let c = 4.0;
        let f = |x: f64| if x > c { mu * (-mu * (x - c)).exp() } else { 0.0 };
        let u = |x: f64| pcf(&t, x) / t.lambda();
        let d = 17.3;
        let spec = QuadratureSpec::default().with_rel_tol(1e-11);
        let conv = integrate_with_breaks(|y| f(y) * u(d - y), 0.0, d, &[4.0, 8.0, 9.3, 13.3, 5.3], &spec)
            .unwrap()
            .value;
        assert!(((f(d) + conv) - u(d)).abs() < 1e-10, "{} vs {}", f(d) + conv, u(d));
    }

    #[test]
    fn third_order_factorises() {
        let t = hc(0.1, 4.0);
        assert_eq!(third_order_intensity(&t, 3.0, 10.0), 0.0);
        let v = third_order_intensity(&t, 160.0, 160.0);
        assert!((v / 1e-3 - 1.0).abs() < 0.02);
        let w = third_order_intensity(&t, 6.0, 10.0);
        assert_eq!(w, pcf(&t, 6.0) * pcf(&t, 10.0) / 0.1);
    }

    #[test]
    fn nearest_cdf_continuity() {
        let t = hc(0.1, 4.0);
        let link = LinkConfig::new(100.0, 3.0, 1.0).unwrap();
        assert_eq!(nearest_distance_cdf(&t, &link, 100.0).unwrap(), 0.0);
        let left = nearest_distance_cdf(&t, &link, 104.0 - 1e-12).unwrap();
        let right = nearest_distance_cdf(&t, &link, 104.0).unwrap();
        assert!((left - 0.64).abs() < 1e-9 && (right - 0.64).abs() < 1e-12);
        assert!(nearest_distance_cdf(&t, &link, 99.0).is_err());
        assert!(nearest_distance_pdf(&t, &link, 99.0).is_err());
        assert!((nearest_distance_pdf(&t, &link, 100.0).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn nearest_pdf_normalised() {
        let t = hc(0.1, 4.0);
        let link = LinkConfig::new(100.0, 3.0, 1.0).unwrap();
        let spec = QuadratureSpec::default().with_rel_tol(1e-12);
        let mass = integrate_with_breaks(
            |x| nearest_distance_pdf(&t, &link, x).unwrap(),
            100.0,
            104.0 + 300.0,
            &[104.0],
            &spec,
        )
        .unwrap()
        .value;
        assert!((mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn poisson_contact_distribution() {
        let t = TrafficModel::poisson(0.1).unwrap();
        let link = LinkConfig::new(100.0, 3.0, 1.0).unwrap();
        for x in [100.0, 101.0, 117.0] {
            let pdf = nearest_distance_pdf(&t, &link, x).unwrap();
            assert!((pdf - 0.2 * (-0.2 * (x - 100.0)).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn noguard_branches_meet() {
        let t = hc(0.1, 4.0);
        assert_eq!(nearest_distance_cdf_noguard(&t, 0.0), 0.0);
        let left = nearest_distance_cdf_noguard(&t, 2.0 - 1e-12);
        let right = nearest_distance_cdf_noguard(&t, 2.0);
        assert!((left - 0.4).abs() < 1e-10 && (right - 0.4).abs() < 1e-15);
        let v = nearest_distance_cdf_noguard(&t, 10.0);
        assert!((v - (1.0 - 0.6 * (-16.0f64 / 6.0).exp())).abs() < 1e-15);
    }

    #[test]
    fn one_sided_branches_meet() {
        let t = hc(0.1, 4.0);
        let link = LinkConfig::new(100.0, 3.0, 1.0).unwrap();
        assert_eq!(one_sided_nearest_cdf(&t, &link, 100.0).unwrap(), 0.0);
        let left = one_sided_nearest_cdf(&t, &link, 104.0 - 1e-12).unwrap();
        assert!((left - 0.4).abs() < 1e-10);
        assert!((one_sided_nearest_cdf(&t, &link, 104.0).unwrap() - 0.4).abs() < 1e-15);
        // Independent halves: the two-sided law is the square of the one-sided
        // survival.
        let x = 111.0;
        let one = one_sided_nearest_cdf(&t, &link, x).unwrap();
        let two = nearest_distance_cdf(&t, &link, x).unwrap();
        assert!((1.0 - (1.0 - one).powi(2) - two).abs() < 1e-15);
    }

    #[test]
    fn poisson_nearest_shape() {
        let t = TrafficModel::poisson(0.1).unwrap();
        let link = LinkConfig::new(100.0, 3.0, 1.0).unwrap();
        let (cov, skew) = nearest_distance_shape(&t, &link).unwrap();
        assert!((cov - 1.0 / 21.0).abs() < 1e-9, "{cov}");
        assert!((skew - 2.0).abs() < 1e-7, "{skew}");
    }

    #[test]
    fn hardcore_nearest_shape_below_poisson() {
        let link = LinkConfig::new(100.0, 3.0, 1.0).unwrap();
        for (lambda, c) in [(0.1, 4.0), (0.01, 70.0), (0.025, 16.0), (0.05, 1.0)] {
            let t = hc(lambda, c);
            let (cov, skew) = nearest_distance_shape(&t, &link).unwrap();
            assert!(cov < 1.0 / (1.0 + 2.0 * lambda * 100.0));
            assert!(skew < 2.0 && skew > 0.0);
        }
    }

    #[test]
    fn sampled_gaps_respect_hardcore() {
        let t = hc(0.1, 4.0);
        let cfg = sample_configuration(&t, (0.0, 1e4), 3);
        assert!(cfg.min_gap().unwrap() >= 4.0);
        assert!(cfg.positions.iter().all(|&x| (0.0..=1e4).contains(&x)));
        let mut buf = Vec::new();
        cfg.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), cfg.positions.len() + 1);
    }

    #[test]
    fn sampled_count_is_stationary() {
        let t = hc(0.1, 4.0);
        let n = 1000;
        let counts: Vec<f64> = (0..n)
            .map(|s| sample_configuration(&t, (0.0, 1e4), s).positions.len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1000.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn poisson_gaps_are_exponential() {
        let t = TrafficModel::poisson(0.1).unwrap();
        let cfg = sample_configuration(&t, (0.0, 1.2e6), 11);
        let mut gaps: Vec<f64> = cfg.positions.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.truncate(100_000);
        gaps.sort_by(f64::total_cmp);
        let n = gaps.len() as f64;
        let ks = gaps
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let f = 1.0 - (-0.1 * g).exp();
                ((i + 1) as f64 / n - f).max(f - i as f64 / n)
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "ks {ks}");
    }

    #[test]
    fn whole_line_mode_keeps_hardcore_across_origin() {
        let t = hc(0.1, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = Vec::new();
        for _ in 0..200 {
            sample_interferers(&t, 0.0, 500.0, SamplingMode::WholeLine, &mut rng, &mut pts);
            pts.sort_by(f64::total_cmp);
            assert!(pts.windows(2).all(|w| w[1] - w[0] >= 4.0 - 1e-12));
        }
    }

    proptest! {
        #[test]
        fn nearest_cdf_monotone(lambda in 0.001f64..0.5, frac in 0.0f64..0.9, a in 0.0f64..500.0, b in 0.0f64..500.0) {
            let t = TrafficModel::new(lambda, frac / lambda).unwrap();
            let link = LinkConfig::new(50.0, 4.0, 1.0).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let f_lo = nearest_distance_cdf(&t, &link, 50.0 + lo).unwrap();
            let f_hi = nearest_distance_cdf(&t, &link, 50.0 + hi).unwrap();
            prop_assert!(f_lo <= f_hi + 1e-15);
            prop_assert!((0.0..=1.0).contains(&f_lo) && (0.0..=1.0).contains(&f_hi));
        }

        #[test]
        fn quantile_inverts_cdf(lambda in 0.001f64..0.5, frac in 0.0f64..0.9, u in 0.0f64..0.999) {
            let t = TrafficModel::new(lambda, frac / lambda).unwrap();
            let y = forward_recurrence_quantile(&t, u);
            prop_assert!((forward_recurrence_cdf(&t, y) - u).abs() < 1e-10);
        }

        #[test]
        fn pcf_zero_below_hardcore(lambda in 0.001f64..0.5, frac in 0.01f64..0.9, r in 0.0f64..0.999) {
            let t = TrafficModel::new(lambda, frac / lambda).unwrap();
            prop_assert_eq!(pcf(&t, r * t.hardcore()), 0.0);
        }
    }
}
