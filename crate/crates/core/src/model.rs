//! Domain parameters: the headway law of the interferers, the link geometry
//! and the SIR threshold.

use serde::Serialize;

use crate::error::{Error, Result};

/// Traffic on the road: intensity `lambda` (vehicles per meter) and hardcore
/// distance `c` (meters). Headways are `c + Exp(mu)` with
/// `1/lambda = c + 1/mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrafficModel {
    lambda: f64,
    hardcore: f64,
    mu: f64,
}

impl TrafficModel {
    pub fn new(lambda: f64, hardcore: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidTraffic(format!("lambda must be positive, got {lambda}")));
        }
        if !(hardcore.is_finite() && hardcore >= 0.0) {
            return Err(Error::InvalidTraffic(format!(
                "hardcore distance must be non-negative, got {hardcore}"
            )));
        }
        let occupancy = lambda * hardcore;
        if occupancy >= 1.0 {
            return Err(Error::InvalidTraffic(format!("lambda*c = {occupancy} must be below 1")));
        }
        Ok(Self {
            lambda,
            hardcore,
            mu: lambda / (1.0 - occupancy),
        })
    }

    /// Poisson traffic of the given intensity.
    pub fn poisson(lambda: f64) -> Result<Self> {
        Self::new(lambda, 0.0)
    }

    /// The Poisson process of equal intensity.
    pub fn poisson_equivalent(&self) -> Self {
        Self {
            lambda: self.lambda,
            hardcore: 0.0,
            mu: self.lambda,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn hardcore(&self) -> f64 {
        self.hardcore
    }

    /// Rate of the exponential part of the headway.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// The dimensionless product `lambda * c`.
    pub fn occupancy(&self) -> f64 {
        self.lambda * self.hardcore
    }

    pub fn is_poisson(&self) -> bool {
        self.hardcore == 0.0
    }
}

/// Link geometry: guard zone half-length `r0`, pathloss exponent `eta` and
/// received useful power `pr` (Watts). Interferer transmit power is unity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkConfig {
    r0: f64,
    eta: f64,
    pr: f64,
}

impl LinkConfig {
    pub fn new(r0: f64, eta: f64, pr: f64) -> Result<Self> {
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(Error::InvalidLink(format!("r0 must be positive, got {r0}")));
        }
        if !(eta.is_finite() && eta > 1.0) {
            return Err(Error::InvalidLink(format!("eta must exceed 1, got {eta}")));
        }
        if !(pr.is_finite() && pr > 0.0) {
            return Err(Error::InvalidLink(format!("pr must be positive, got {pr}")));
        }
        Ok(Self { r0, eta, pr })
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn pr(&self) -> f64 {
        self.pr
    }

    /// Same geometry with a different received power.
    pub fn with_pr(&self, pr: f64) -> Result<Self> {
        Self::new(self.r0, self.eta, pr)
    }

    /// `|r|^-eta` outside the guard zone, zero inside.
    pub fn pathloss(&self, r: f64) -> f64 {
        let r = r.abs();
        if r > self.r0 {
            r.powf(-self.eta)
        } else {
            0.0
        }
    }
}

/// SIR threshold in linear scale together with `s = theta / pr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SirThreshold {
    theta: f64,
    s: f64,
}

impl SirThreshold {
    pub fn new(theta: f64, pr: f64) -> Result<Self> {
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(Error::Domain(format!(
                "theta must be finite and non-negative, got {theta}"
            )));
        }
        if !(pr.is_finite() && pr > 0.0) {
            return Err(Error::InvalidLink(format!("pr must be positive, got {pr}")));
        }
        Ok(Self { theta, s: theta / pr })
    }

    pub fn from_db(theta_db: f64, pr: f64) -> Result<Self> {
        Self::new(db_to_linear(theta_db), pr)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn s(&self) -> f64 {
        self.s
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Non-fatal diagnostics attached to a parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub mu: f64,
    /// The two sides of the guard zone are not well decorrelated
    /// (`mu >= 2 r0 / c^2`), so the independent-halves distance law is rough.
    pub decorrelation_marginal: bool,
    pub warnings: Vec<String>,
}

pub fn validate(traffic: &TrafficModel, link: &LinkConfig) -> ValidationReport {
    let mut warnings = Vec::new();
    let c = traffic.hardcore();
    let decorrelation_marginal = c > 0.0 && traffic.mu() >= 2.0 * link.r0() / (c * c);
    if decorrelation_marginal {
        warnings.push(format!(
            "mu = {:.5} is not small against 2*r0/c^2 = {:.5}; guard-zone sides are correlated",
            traffic.mu(),
            2.0 * link.r0() / (c * c)
        ));
    }
    if traffic.occupancy() > 0.5 {
        warnings.push(format!(
            "lambda*c = {} is outside the small-occupancy regime of the moment approximations",
            traffic.occupancy()
        ));
    }
    ValidationReport {
        mu: traffic.mu(),
        decorrelation_marginal,
        warnings,
    }
}
