//! Outage probability under Rayleigh link fading.
//!
//! With `s = theta / pr`, a single-antenna link fails when `h < s I`, so the
//! outage is `1 - L_I(s)` for the Laplace transform `L_I` of the interference.
//! The Poisson field has an exact transform; the hardcore field is handled
//! through gamma-family fits, plus an upper bound from Jensen's inequality.

use std::cell::RefCell;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{BivariateGammaFit, GammaFit, ShiftedGammaFit};
use crate::model::{db_to_linear, LinkConfig, TrafficModel};
use crate::specfun::{hyp2f1, integrate_1d, integrate_semi_infinite, QuadratureSpec};

fn check_theta(theta: f64, pr: f64) -> Result<f64> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!(
            "theta = {theta} must be finite and non-negative"
        )));
    }
    if !(pr > 0.0 && pr.is_finite()) {
        return Err(Error::InvalidLink(format!("pr must be positive, got {pr}")));
    }
    Ok(theta / pr)
}

fn exponent_spec() -> QuadratureSpec {
    QuadratureSpec::default().with_rel_tol(1e-11)
}

/// `int_{r0}^inf s x^-eta / (1 + s x^-eta) dx` by quadrature.
pub fn ppp_exponent(link: &LinkConfig, s: f64) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    let eta = link.eta();
    Ok(integrate_semi_infinite(|x| 1.0 / (1.0 + x.powf(eta) / s), link.r0(), &exponent_spec())?.value)
}

/// The same integral as `s r0^(1-eta)/(eta-1) 2F1(1, 1-1/eta; 2-1/eta; -s r0^-eta)`,
/// valid while `s r0^-eta < 1`.
pub fn ppp_exponent_closed(link: &LinkConfig, s: f64) -> Result<f64> {
    let (r0, eta) = (link.r0(), link.eta());
    let u0 = s * r0.powf(-eta);
    let delta = 1.0 / eta;
    Ok(s * r0.powf(1.0 - eta) / (eta - 1.0) * hyp2f1(1.0, 1.0 - delta, 2.0 - delta, -u0)?)
}

/// `int_{r0}^inf ln(1 + s x^-eta) dx` by quadrature.
pub fn jensen_exponent(link: &LinkConfig, s: f64) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    let eta = link.eta();
    Ok(integrate_semi_infinite(|x| (s * x.powf(-eta)).ln_1p(), link.r0(), &exponent_spec())?.value)
}

/// Exact outage for Poisson traffic of intensity `lambda`, ignoring the
/// hardcore distance.
pub fn outage_ppp(traffic: &TrafficModel, link: &LinkConfig, theta: f64) -> Result<f64> {
    let s = check_theta(theta, link.pr())?;
    let e = 2.0 * traffic.lambda() * ppp_exponent(link, s)?;
    Ok(-(-e).exp_m1())
}

/// Upper bound on the outage from moving the expectation inside the
/// exponential; holds for any stationary field of intensity `lambda`.
pub fn outage_jensen(traffic: &TrafficModel, link: &LinkConfig, theta: f64) -> Result<f64> {
    let s = check_theta(theta, link.pr())?;
    let e = 2.0 * traffic.lambda() * jensen_exponent(link, s)?;
    Ok(-(-e).exp_m1())
}

pub fn outage_gamma(fit: &GammaFit, theta: f64, pr: f64) -> Result<f64> {
    let s = check_theta(theta, pr)?;
    Ok(1.0 - fit.laplace(s))
}

pub fn outage_shifted_gamma(fit: &ShiftedGammaFit, theta: f64, pr: f64) -> Result<f64> {
    let s = check_theta(theta, pr)?;
    Ok(1.0 - fit.laplace(s))
}

fn mrc_spec(spec: &QuadratureSpec) -> QuadratureSpec {
    QuadratureSpec {
        abs_tol: spec.abs_tol.max(1e-15),
        ..*spec
    }
}

/// Success probability of dual-branch maximum ratio combining when the two
/// branch interferences follow a bivariate gamma law.
///
/// Conditioning on the second branch SIR `w` and using the derivative of the
/// joint transform, with `a = s beta` and the substitution `w = theta x`:
/// `(1+a)^-k + k a int_0^1 (1 + a (1-x)(1-rho)) / D^(k+1) dx` where
/// `D = 1 + a + a^2 x (1-x) (1-rho)`.
pub fn mrc_success(fit: &BivariateGammaFit, theta: f64, pr: f64, spec: &QuadratureSpec) -> Result<f64> {
    let s = check_theta(theta, pr)?;
    mrc_success_core(fit.k, fit.beta, 0.0, fit.rho, s, spec)
}

/// As [`mrc_success`] with both marginals shifted by the same `epsilon`.
///
/// The joint transform picks up `exp(-(s1+s2) epsilon)`, and differentiating
/// it in `s2` adds a term `epsilon int_0^1 D^-k dx` to the bracket.
pub fn mrc_success_shifted(fit: &ShiftedGammaFit, rho: f64, theta: f64, pr: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho = {rho} must lie in [0, 1)")));
    }
    let s = check_theta(theta, pr)?;
    mrc_success_core(fit.k, fit.beta, fit.epsilon, rho, s, spec)
}

fn mrc_success_core(k: f64, beta: f64, epsilon: f64, rho: f64, s: f64, spec: &QuadratureSpec) -> Result<f64> {
    if s == 0.0 {
        return Ok(1.0);
    }
    let a = s * beta;
    let one_minus_rho = 1.0 - rho;
    let ln_d = |x: f64| (a + a * a * x * (1.0 - x) * one_minus_rho).ln_1p();
    let spec = mrc_spec(spec);
    let base = (-k * a.ln_1p()).exp();
    let diff = integrate_1d(
        |x| (1.0 + a * (1.0 - x) * one_minus_rho) * (-(k + 1.0) * ln_d(x)).exp(),
        0.0,
        1.0,
        &spec,
    )?
    .value;
    let shift = if epsilon != 0.0 {
        integrate_1d(|x| (-k * ln_d(x)).exp(), 0.0, 1.0, &spec)?.value
    } else {
        0.0
    };
    let bracket = base + s * epsilon * shift + k * a * diff;
    Ok(((-s * epsilon).exp() * bracket).min(1.0))
}

/// Exact dual-branch MRC success for Poisson traffic, from the joint
/// transform `L(s1, s2) = exp(-2 lambda int (1 - 1/((1+s1 g)(1+s2 g))))`.
pub fn mrc_success_ppp(traffic: &TrafficModel, link: &LinkConfig, theta: f64, spec: &QuadratureSpec) -> Result<f64> {
    let s = check_theta(theta, link.pr())?;
    if s == 0.0 {
        return Ok(1.0);
    }
    let lambda = traffic.lambda();
    let eta = link.eta();
    let inner = exponent_spec();
    let joint = |s1: f64, s2: f64| -> Result<(f64, f64)> {
        let exponent = integrate_semi_infinite(
            |x| {
                let g = x.powf(-eta);
                let (a, b) = (s1 * g, s2 * g);
                (a + b + a * b) / ((1.0 + a) * (1.0 + b))
            },
            link.r0(),
            &inner,
        )?
        .value;
        let deriv = integrate_semi_infinite(
            |x| {
                let g = x.powf(-eta);
                g / ((1.0 + s1 * g) * (1.0 + s2 * g).powi(2))
            },
            link.r0(),
            &inner,
        )?
        .value;
        Ok(((-2.0 * lambda * exponent).exp(), 2.0 * lambda * deriv))
    };
    let (base, _) = joint(0.0, s)?;
    let spec = mrc_spec(spec);
    let failure = RefCell::new(None);
    let integral = integrate_1d(
        |x| match joint(s * (1.0 - x), s * x) {
            Ok((l, d)) => l * d,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        0.0,
        1.0,
        &spec,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok((base + s * integral?.value).min(1.0))
}

/// `steps` thresholds evenly spaced in dB from `min_db` to `max_db`.
pub fn theta_grid_db(min_db: f64, max_db: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![min_db],
        n => (0..n)
            .map(|i| min_db + (max_db - min_db) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Which model produced a column of an [`OutageCurve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutageModel {
    Ppp,
    Jensen,
    Gamma,
    ShiftedGamma,
    MrcBivariate,
    MrcShiftedGamma,
    MrcPpp,
    Empirical,
    EmpiricalMrc,
}

impl OutageModel {
    pub fn label(&self) -> &'static str {
        match self {
            OutageModel::Ppp => "ppp",
            OutageModel::Jensen => "jensen",
            OutageModel::Gamma => "gamma",
            OutageModel::ShiftedGamma => "shifted-gamma",
            OutageModel::MrcBivariate => "mrc-bivariate",
            OutageModel::MrcShiftedGamma => "mrc-shifted-gamma",
            OutageModel::MrcPpp => "mrc-ppp",
            OutageModel::Empirical => "empirical",
            OutageModel::EmpiricalMrc => "empirical-mrc",
        }
    }
}

/// Outage values of several models on a common threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutageCurve {
    pub theta_db: Vec<f64>,
    pub columns: Vec<(OutageModel, Vec<f64>)>,
}

impl OutageCurve {
    pub fn new(theta_db: Vec<f64>) -> Self {
        Self {
            theta_db,
            columns: Vec::new(),
        }
    }

    pub fn theta_lin(&self) -> Vec<f64> {
        self.theta_db.iter().map(|&d| db_to_linear(d)).collect()
    }

    /// Evaluate `f` at every linear threshold and append the column.
    pub fn push_model<F: Fn(f64) -> Result<f64>>(&mut self, model: OutageModel, f: F) -> Result<()> {
        let values = self.theta_lin().into_iter().map(f).collect::<Result<Vec<_>>>()?;
        self.columns.push((model, values));
        Ok(())
    }

    pub fn push_column(&mut self, model: OutageModel, values: Vec<f64>) {
        assert_eq!(values.len(), self.theta_db.len(), "column length");
        self.columns.push((model, values));
    }

    pub fn column(&self, model: OutageModel) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(m, _)| *m == model)
            .map(|(_, v)| v.as_slice())
    }

    /// Columns `theta_db, theta_lin, <model>...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Domain(format!("csv output failed: {e}"));
        let mut header = vec!["theta_db".to_string(), "theta_lin".to_string()];
        header.extend(self.columns.iter().map(|(m, _)| m.label().to_string()));
        wtr.write_record(&header).map_err(io)?;
        let lin = self.theta_lin();
        for (i, db) in self.theta_db.iter().enumerate() {
            let mut row = vec![format!("{db}"), format!("{}", lin[i])];
            row.extend(self.columns.iter().map(|(_, v)| format!("{}", v[i])));
            wtr.write_record(&row).map_err(io)?;
        }
        wtr.flush()
            .map_err(|e| Error::Domain(format!("csv output failed: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{fit_bivariate, fit_gamma, fit_shifted_gamma};
    use crate::moments::{spatial_correlation, CorrelationForm, MomentSummary};
    use proptest::prelude::*;

    fn fig5() -> (TrafficModel, LinkConfig) {
        (
            TrafficModel::new(0.025, 20.0).unwrap(),
            LinkConfig::new(50.0, 4.0, 8e-7).unwrap(),
        )
    }

    #[test]
    fn exponent_routes_agree() {
        let link = LinkConfig::new(50.0, 4.0, 1.0).unwrap();
        for s in [1.0, 1e3, 1e5, 6e6] {
            let q = ppp_exponent(&link, s).unwrap();
            let c = ppp_exponent_closed(&link, s).unwrap();
            assert!(((q - c) / c).abs() < 1e-9, "s {s}: {q} vs {c}");
        }
        assert!(ppp_exponent_closed(&link, 1e7).is_err());
    }

    #[test]
    fn jensen_integration_by_parts() {
        // int ln(1 + s x^-eta) = eta int s x^-eta/(1 + s x^-eta) - r0 ln(1 + u0)
        let link = LinkConfig::new(50.0, 4.0, 1.0).unwrap();
        for s in [10.0, 1e5, 1e8] {
            let u0 = s * 50f64.powi(-4);
            let lhs = jensen_exponent(&link, s).unwrap();
            let rhs = 4.0 * ppp_exponent(&link, s).unwrap() - 50.0 * u0.ln_1p();
            assert!(((lhs - rhs) / lhs).abs() < 1e-9, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn endpoints() {
        let (t, l) = fig5();
        assert_eq!(outage_ppp(&t, &l, 0.0).unwrap(), 0.0);
        assert_eq!(outage_jensen(&t, &l, 0.0).unwrap(), 0.0);
        assert!(outage_ppp(&t, &l, 1e12).unwrap() > 1.0 - 1e-9);
        let g = fit_gamma(&MomentSummary::analytic(&t, &l)).unwrap();
        assert_eq!(outage_gamma(&g, 0.0, l.pr()).unwrap(), 0.0);
        assert!(outage_ppp(&t, &l, -1.0).is_err());
    }

    #[test]
    fn jensen_dominates_ppp() {
        let (t, l) = fig5();
        for db in theta_grid_db(-10.0, 30.0, 21) {
            let th = db_to_linear(db);
            assert!(outage_jensen(&t, &l, th).unwrap() >= outage_ppp(&t, &l, th).unwrap());
        }
    }

    #[test]
    fn zero_shift_matches_plain_gamma() {
        let f = ShiftedGammaFit {
            k: 3.0,
            beta: 0.2,
            epsilon: 0.0,
        };
        for th in [0.1, 1.0, 7.0] {
            let a = outage_shifted_gamma(&f, th, 1.0).unwrap();
            let b = outage_gamma(&f.unshifted(), th, 1.0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn poisson_gamma_fit_tracks_exact_outage() {
        // The Poisson outage example setting. At lambda = 0.025 the gap
        // reaches 0.023 near 14 dB.
        let (_, l) = fig5();
        let p = TrafficModel::poisson(0.05).unwrap();
        let g = fit_gamma(&MomentSummary::analytic(&p, &l)).unwrap();
        for db in theta_grid_db(-10.0, 30.0, 21) {
            let th = db_to_linear(db);
            let exact = outage_ppp(&p, &l, th).unwrap();
            let approx = outage_gamma(&g, th, l.pr()).unwrap();
            assert!((exact - approx).abs() < 0.02, "{db} dB: {exact} vs {approx}");
        }
    }

    #[test]
    fn mrc_at_zero_threshold() {
        let spec = QuadratureSpec::default();
        let f = BivariateGammaFit {
            k: 2.0,
            beta: 0.5,
            rho: 0.3,
        };
        assert_eq!(mrc_success(&f, 0.0, 1.0, &spec).unwrap(), 1.0);
        let sg = ShiftedGammaFit {
            k: 2.0,
            beta: 0.5,
            epsilon: 0.1,
        };
        assert_eq!(mrc_success_shifted(&sg, 0.3, 0.0, 1.0, &spec).unwrap(), 1.0);
        let (t, l) = fig5();
        assert_eq!(mrc_success_ppp(&t, &l, 0.0, &spec).unwrap(), 1.0);
    }

    #[test]
    fn mrc_full_correlation_is_second_order_fading() {
        // With rho -> 1 both branches see the same I ~ Gamma(k, beta) and the
        // combined link gain is Gamma(2, 1): success = E{exp(-sI)(1 + sI)}.
        let spec = QuadratureSpec::default().with_rel_tol(1e-12);
        let (k, beta) = (4.6, 0.3);
        let f = BivariateGammaFit {
            k,
            beta,
            rho: 1.0 - 1e-13,
        };
        let s = 2.3;
        let ln_norm = -k * beta.ln() - statrs::function::gamma::ln_gamma(k);
        let direct = integrate_semi_infinite(
            |i| {
                if i <= 0.0 {
                    0.0
                } else {
                    ((k - 1.0) * i.ln() - i / beta + ln_norm).exp() * (-s * i).exp() * (1.0 + s * i)
                }
            },
            0.0,
            &spec,
        )
        .unwrap()
        .value;
        let got = mrc_success(&f, s, 1.0, &spec).unwrap();
        assert!((got - direct).abs() < 1e-9, "{got} vs {direct}");
    }

    #[test]
    fn mrc_shifted_without_shift_matches_bivariate() {
        let spec = QuadratureSpec::default();
        let sg = ShiftedGammaFit {
            k: 5.0,
            beta: 0.2,
            epsilon: 0.0,
        };
        let f = BivariateGammaFit {
            k: 5.0,
            beta: 0.2,
            rho: 0.25,
        };
        for th in [0.3, 1.0, 4.0] {
            let a = mrc_success_shifted(&sg, 0.25, th, 1.0, &spec).unwrap();
            let b = mrc_success(&f, th, 1.0, &spec).unwrap();
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn mrc_beats_single_branch() {
        let (t, l) = fig5();
        let m = MomentSummary::analytic(&t, &l);
        let rho = spatial_correlation(&t, CorrelationForm::ExactRatio);
        let f = fit_bivariate(&m, rho).unwrap();
        let sg = fit_shifted_gamma(&m).unwrap();
        let spec = QuadratureSpec::default();
        for db in theta_grid_db(-10.0, 30.0, 9) {
            let th = db_to_linear(db);
            let single = 1.0 - outage_gamma(&f.marginal(), th, l.pr()).unwrap();
            assert!(mrc_success(&f, th, l.pr(), &spec).unwrap() >= single);
            let single = 1.0 - outage_shifted_gamma(&sg, th, l.pr()).unwrap();
            assert!(mrc_success_shifted(&sg, rho, th, l.pr(), &spec).unwrap() >= single);
            let single = 1.0 - outage_ppp(&t, &l, th).unwrap();
            assert!(mrc_success_ppp(&t, &l, th, &spec).unwrap() >= single - 1e-12);
        }
    }

    #[test]
    fn curve_csv_layout() {
        let (t, l) = fig5();
        let mut curve = OutageCurve::new(theta_grid_db(0.0, 10.0, 3));
        curve.push_model(OutageModel::Ppp, |th| outage_ppp(&t, &l, th)).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "theta_db,theta_lin,ppp");
        assert_eq!(lines.count(), 3);
    }

    proptest! {
        #[test]
        fn outage_monotone_and_bounded(db1 in -20.0f64..40.0, db2 in -20.0f64..40.0) {
            let (t, l) = fig5();
            let (lo, hi) = if db1 < db2 { (db1, db2) } else { (db2, db1) };
            let (a, b) = (db_to_linear(lo), db_to_linear(hi));
            let m = MomentSummary::analytic(&t, &l);
            let g = fit_gamma(&m).unwrap();
            let sg = fit_shifted_gamma(&m).unwrap();
            let pairs = [
                (outage_ppp(&t, &l, a).unwrap(), outage_ppp(&t, &l, b).unwrap()),
                (outage_jensen(&t, &l, a).unwrap(), outage_jensen(&t, &l, b).unwrap()),
                (outage_gamma(&g, a, l.pr()).unwrap(), outage_gamma(&g, b, l.pr()).unwrap()),
                (outage_shifted_gamma(&sg, a, l.pr()).unwrap(), outage_shifted_gamma(&sg, b, l.pr()).unwrap()),
            ];
            for (x, y) in pairs {
                prop_assert!(x <= y + 1e-12);
                prop_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
            }
        }
    }
}
