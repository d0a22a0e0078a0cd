//! Moment-matched gamma-family models of the interference.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::MomentSummary;

/// Gamma law with shape `k` and scale `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaFit {
    pub k: f64,
    pub beta: f64,
}

/// Gamma law shifted by `epsilon`, matching the skewness as well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftedGammaFit {
    pub k: f64,
    pub beta: f64,
    pub epsilon: f64,
}

/// Bivariate gamma law with identical marginals and correlation `rho`,
/// defined by its joint Laplace transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BivariateGammaFit {
    pub k: f64,
    pub beta: f64,
    pub rho: f64,
}

fn check_mean_variance(m: &MomentSummary) -> Result<()> {
    if !(m.mean > 0.0 && m.mean.is_finite()) {
        return Err(Error::DegenerateMoments(format!(
            "mean must be positive, got {}",
            m.mean
        )));
    }
    if !(m.variance > 0.0 && m.variance.is_finite()) {
        return Err(Error::DegenerateMoments(format!(
            "variance must be positive, got {}",
            m.variance
        )));
    }
    Ok(())
}

pub fn fit_gamma(m: &MomentSummary) -> Result<GammaFit> {
    check_mean_variance(m)?;
    let k = m.mean * m.mean / m.variance;
    Ok(GammaFit {
        k,
        beta: m.variance / m.mean,
    })
}

/// Shape from the skewness, scale from the variance, shift from the mean.
/// A negative shift is returned as is; see [`ShiftedGammaFit::shift_is_negative`].
pub fn fit_shifted_gamma(m: &MomentSummary) -> Result<ShiftedGammaFit> {
    check_mean_variance(m)?;
    let s = match m.skewness {
        Some(s) if s > 0.0 && s.is_finite() => s,
        other => {
            return Err(Error::DegenerateMoments(format!(
                "skewness must be positive, got {other:?}"
            )))
        }
    };
    let k = 4.0 / (s * s);
    let beta = (m.variance / k).sqrt();
    Ok(ShiftedGammaFit {
        k,
        beta,
        epsilon: m.mean - k * beta,
    })
}

/// Marginal gamma fit with the given correlation coefficient.
pub fn fit_bivariate(m: &MomentSummary, rho: f64) -> Result<BivariateGammaFit> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho = {rho} must lie in [0, 1)")));
    }
    let g = fit_gamma(m)?;
    Ok(BivariateGammaFit {
        k: g.k,
        beta: g.beta,
        rho,
    })
}

impl GammaFit {
    pub fn mean(&self) -> f64 {
        self.k * self.beta
    }

    pub fn variance(&self) -> f64 {
        self.k * self.beta * self.beta
    }

    pub fn skewness(&self) -> f64 {
        2.0 / self.k.sqrt()
    }

    /// `E{exp(-s I)} = (1 + s beta)^-k`.
    pub fn laplace(&self, s: f64) -> f64 {
        (-self.k * (s * self.beta).ln_1p()).exp()
    }
}

impl ShiftedGammaFit {
    pub fn mean(&self) -> f64 {
        self.k * self.beta + self.epsilon
    }

    pub fn variance(&self) -> f64 {
        self.k * self.beta * self.beta
    }

    pub fn skewness(&self) -> f64 {
        2.0 / self.k.sqrt()
    }

    /// True outside the regime where the shift is a physical floor on the
    /// interference.
    pub fn shift_is_negative(&self) -> bool {
        self.epsilon < 0.0
    }

    pub fn unshifted(&self) -> GammaFit {
        GammaFit {
            k: self.k,
            beta: self.beta,
        }
    }

    pub fn laplace(&self, s: f64) -> f64 {
        (-s * self.epsilon - self.k * (s * self.beta).ln_1p()).exp()
    }
}

impl BivariateGammaFit {
    pub fn marginal(&self) -> GammaFit {
        GammaFit {
            k: self.k,
            beta: self.beta,
        }
    }

    /// `(1 + s1 beta + s2 beta + s1 s2 beta^2 (1 - rho))^-k`.
    pub fn joint_laplace(&self, s1: f64, s2: f64) -> f64 {
        let b = self.beta;
        let d = s1 * b + s2 * b + s1 * s2 * b * b * (1.0 - self.rho);
        (-self.k * d.ln_1p()).exp()
    }
}

/// Flat serializable view of any fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRow {
    pub family: &'static str,
    pub k: f64,
    pub beta: f64,
    pub epsilon: Option<f64>,
    pub rho: Option<f64>,
}

impl From<&GammaFit> for FitRow {
    fn from(f: &GammaFit) -> Self {
        Self {
            family: "gamma",
            k: f.k,
            beta: f.beta,
            epsilon: None,
            rho: None,
        }
    }
}

impl From<&ShiftedGammaFit> for FitRow {
    fn from(f: &ShiftedGammaFit) -> Self {
        Self {
            family: "shifted-gamma",
            k: f.k,
            beta: f.beta,
            epsilon: Some(f.epsilon),
            rho: None,
        }
    }
}

impl From<&BivariateGammaFit> for FitRow {
    fn from(f: &BivariateGammaFit) -> Self {
        Self {
            family: "bivariate-gamma",
            k: f.k,
            beta: f.beta,
            epsilon: None,
            rho: Some(f.rho),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinkConfig, TrafficModel};
    use crate::moments::Provenance;
    use proptest::prelude::*;

    fn summary(mean: f64, variance: f64, skewness: Option<f64>) -> MomentSummary {
        MomentSummary {
            mean,
            variance,
            skewness,
            provenance: Provenance::AnalyticApprox,
            nakagami_t: 1,
        }
    }

    fn table(lambda: f64, c: f64) -> MomentSummary {
        let t = TrafficModel::new(lambda, c).unwrap();
        let l = LinkConfig::new(100.0, 3.0, 1.0).unwrap();
        MomentSummary::analytic(&t, &l)
    }

    #[test]
    fn gamma_fit_reference_values() {
        let g = fit_gamma(&table(0.1, 4.0)).unwrap();
        assert!((g.k - 18.382).abs() < 1e-3, "{}", g.k);
        assert!((g.beta - 5.44e-7).abs() < 1e-12);
        assert!((g.skewness() - 0.4665).abs() < 1e-3);
        let g = fit_gamma(&table(0.025, 16.0)).unwrap();
        assert!((g.k - 4.596).abs() < 1e-3, "{}", g.k);
        assert!((g.skewness() - 0.933).abs() < 1e-3);
    }

    #[test]
    fn exponential_case() {
        let g = fit_gamma(&summary(1.0, 1.0, None)).unwrap();
        assert_eq!((g.k, g.beta), (1.0, 1.0));
    }

    #[test]
    fn shifted_fit_reference_values() {
        let f = fit_shifted_gamma(&table(0.1, 4.0)).unwrap();
        assert!((f.k - 14.22).abs() < 0.01, "{}", f.k);
        assert!((f.beta - 6.18e-7).abs() < 0.01e-7, "{}", f.beta);
        assert!((f.epsilon - 1.21e-6).abs() < 0.02e-6, "{}", f.epsilon);
        assert!(!f.shift_is_negative());
    }

    #[test]
    fn shifted_fit_collapses_to_gamma() {
        let m = summary(3.0, 2.0, Some(2.0 / (9.0f64 / 2.0).sqrt()));
        let f = fit_shifted_gamma(&m).unwrap();
        let g = fit_gamma(&m).unwrap();
        assert!(f.epsilon.abs() < 1e-14);
        assert!((f.k - g.k).abs() < 1e-12 && (f.beta - g.beta).abs() < 1e-14);
        assert!((f.laplace(0.7) - g.laplace(0.7)).abs() < 1e-14);
    }

    #[test]
    fn shift_non_negative_over_grid() {
        for eta in [2.0, 3.0, 4.0, 5.0, 6.0] {
            for lc in [0.05, 0.1, 0.2, 0.3, 0.4, 0.5] {
                for lambda in [0.01, 0.025, 0.1] {
                    let t = TrafficModel::new(lambda, lc / lambda).unwrap();
                    let l = LinkConfig::new(100.0, eta, 1.0).unwrap();
                    let f = fit_shifted_gamma(&MomentSummary::analytic(&t, &l)).unwrap();
                    assert!(f.epsilon >= 0.0, "eta {eta} lc {lc} lambda {lambda}");
                }
            }
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            fit_gamma(&summary(0.0, 1.0, None)),
            Err(Error::DegenerateMoments(_))
        ));
        assert!(matches!(
            fit_gamma(&summary(1.0, 0.0, None)),
            Err(Error::DegenerateMoments(_))
        ));
        assert!(matches!(
            fit_shifted_gamma(&summary(1.0, 1.0, Some(-0.1))),
            Err(Error::DegenerateMoments(_))
        ));
        assert!(matches!(
            fit_shifted_gamma(&summary(1.0, 1.0, None)),
            Err(Error::DegenerateMoments(_))
        ));
        assert!(matches!(
            fit_bivariate(&summary(1.0, 1.0, None), 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn bivariate_limits() {
        let m = summary(2.0, 1.5, None);
        let ind = fit_bivariate(&m, 0.0).unwrap();
        let g = ind.marginal();
        let (s1, s2) = (0.3, 1.1);
        assert!((ind.joint_laplace(s1, s2) - g.laplace(s1) * g.laplace(s2)).abs() < 1e-15);
        assert!((ind.joint_laplace(s1, 0.0) - g.laplace(s1)).abs() < 1e-15);
        let near = fit_bivariate(&m, 1.0 - 1e-12).unwrap();
        let s = 0.4;
        let full = (1.0 + 2.0 * s * g.beta).powf(-g.k);
        assert!((near.joint_laplace(s, s) - full).abs() < 1e-10);
    }

    #[test]
    fn rows_serialize() {
        let g = fit_gamma(&summary(2.0, 1.5, None)).unwrap();
        let json = serde_json::to_string(&FitRow::from(&g)).unwrap();
        assert!(json.contains("\"family\":\"gamma\""));
    }

    proptest! {
        #[test]
        fn fits_round_trip(mean in 1e-9f64..1e3, cov in 0.01f64..3.0, skew_factor in 1.0f64..4.0) {
            let variance = (cov * mean).powi(2);
            // At least the gamma skewness 2 cov, so the shift is non-negative.
            let skew = 2.0 * cov * skew_factor;
            let m = summary(mean, variance, Some(skew));
            let g = fit_gamma(&m).unwrap();
            prop_assert!(((g.mean() - mean) / mean).abs() < 1e-12);
            prop_assert!(((g.variance() - variance) / variance).abs() < 1e-12);
            let f = fit_shifted_gamma(&m).unwrap();
            prop_assert!(((f.mean() - mean) / mean).abs() < 1e-12);
            prop_assert!(((f.variance() - variance) / variance).abs() < 1e-12);
            prop_assert!(((f.skewness() - skew) / skew).abs() < 1e-12);
            prop_assert!(f.epsilon >= -1e-12 * mean);
        }

        #[test]
        fn laplace_ordering(k in 0.1f64..50.0, beta in 1e-3f64..10.0, eps in 0.0f64..5.0, s1 in 0.0f64..10.0, s2 in 0.0f64..10.0) {
            let g = GammaFit { k, beta };
            let sg = ShiftedGammaFit { k, beta, epsilon: eps };
            prop_assert_eq!(g.laplace(0.0), 1.0);
            let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
            prop_assume!(hi - lo > 1e-9);
            prop_assert!(g.laplace(hi) < g.laplace(lo));
            prop_assert!(sg.laplace(lo) <= g.laplace(lo));
        }
    }
}
