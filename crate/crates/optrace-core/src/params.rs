//! Model parameters shared by the analytic formulas and the simulator.

use crate::error::{Error, Result};

/// Parameters of one underlying position: log-volatility `sigma`, drift index
/// `mu` and spot `s0`. The drift index is the combination the weight densities
/// actually depend on; it relates to the hedge ratio `omega` of the short
/// position through `mu = 1 - 2 omega / sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    sigma: f64,
    mu: f64,
    s0: f64,
}

impl ModelParams {
    pub fn new(sigma: f64, mu: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("sigma", sigma, "must be finite and > 0"));
        }
        if !mu.is_finite() {
            return Err(Error::invalid("mu", mu, "must be finite"));
        }
        Ok(ModelParams { sigma, mu, s0: 1.0 })
    }

    /// Build from the hedge ratio instead of the drift index.
    pub fn from_hedge(sigma: f64, omega: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("sigma", sigma, "must be finite and > 0"));
        }
        if !omega.is_finite() {
            return Err(Error::invalid("omega", omega, "must be finite"));
        }
        Self::new(sigma, 1.0 - 2.0 * omega / (sigma * sigma))
    }

    pub fn with_spot(mut self, s0: f64) -> Result<Self> {
        if !(s0.is_finite() && s0 > 0.0) {
            return Err(Error::invalid("s0", s0, "must be finite and > 0"));
        }
        self.s0 = s0;
        Ok(self)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn omega(&self) -> f64 {
        0.5 * self.sigma_sq() * (1.0 - self.mu)
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }
}

/// Effective maturity `alpha = sigma^2 T / 2`, the only combination of
/// volatility and horizon the weight densities depend on.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EffectiveMaturity {
    alpha: f64,
}

impl EffectiveMaturity {
    pub fn from_alpha(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::invalid("alpha", alpha, "must be finite and >= 0"));
        }
        Ok(EffectiveMaturity { alpha })
    }

    pub fn from_time(sigma: f64, t: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("sigma", sigma, "must be finite and > 0"));
        }
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::invalid("t", t, "must be finite and >= 0"));
        }
        Ok(EffectiveMaturity {
            alpha: 0.5 * sigma * sigma * t,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn time(&self, sigma: f64) -> f64 {
        2.0 * self.alpha / (sigma * sigma)
    }
}

/// Strength of the market mode shared by the two positions.
///
/// The two log-prices are driven by a common mode `v` and a relative mode `u`
/// with variance rates 2 and `g^2 = 2 chi^2 / (2 + chi^2)` per unit time;
/// `chi` measures how much of the motion is idiosyncratic. `Independent` is
/// the `chi -> inf` limit (`g^2 = 2`) and is represented exactly rather than
/// through a large sentinel value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationScale {
    Independent,
    Coupled(f64),
}

impl CorrelationScale {
    pub fn from_chi(chi: f64) -> Result<Self> {
        if chi.is_nan() || chi <= 0.0 {
            return Err(Error::invalid("chi", chi, "must be > 0 (may be +inf)"));
        }
        if chi.is_infinite() {
            Ok(CorrelationScale::Independent)
        } else {
            Ok(CorrelationScale::Coupled(chi))
        }
    }

    /// Build from `1/chi`; zero maps to `Independent`.
    pub fn from_inv_chi(inv_chi: f64) -> Result<Self> {
        if !(inv_chi.is_finite() && inv_chi >= 0.0) {
            return Err(Error::invalid("inv_chi", inv_chi, "must be finite and >= 0"));
        }
        if inv_chi == 0.0 {
            Ok(CorrelationScale::Independent)
        } else {
            Ok(CorrelationScale::Coupled(1.0 / inv_chi))
        }
    }

    pub fn is_independent(&self) -> bool {
        matches!(self, CorrelationScale::Independent)
    }

    pub fn chi(&self) -> f64 {
        match self {
            CorrelationScale::Independent => f64::INFINITY,
            CorrelationScale::Coupled(chi) => *chi,
        }
    }

    pub fn inv_chi(&self) -> f64 {
        match self {
            CorrelationScale::Independent => 0.0,
            CorrelationScale::Coupled(chi) => 1.0 / chi,
        }
    }

    /// Variance rate `g^2 = 2 chi^2 / (2 + chi^2)` of the relative mode.
    pub fn relative_mode_rate(&self) -> f64 {
        match self {
            CorrelationScale::Independent => 2.0,
            CorrelationScale::Coupled(chi) => 2.0 * chi * chi / (2.0 + chi * chi),
        }
    }

    /// Variance rate `(1 + chi^2) / (2 + chi^2)` of each marginal log-price.
    pub fn marginal_rate(&self) -> f64 {
        match self {
            CorrelationScale::Independent => 1.0,
            CorrelationScale::Coupled(chi) => {
                let c2 = chi * chi;
                (1.0 + c2) / (2.0 + c2)
            }
        }
    }

    /// Correlation `1 / (1 + chi^2)` between the two log-price increments.
    pub fn increment_correlation(&self) -> f64 {
        match self {
            CorrelationScale::Independent => 0.0,
            CorrelationScale::Coupled(chi) => 1.0 / (1.0 + chi * chi),
        }
    }

    /// Variance of `logit W` for the fixed-horizon payoff race at effective
    /// maturity `alpha`: `2 g^2 alpha`.
    pub fn logit_variance(&self, alpha: f64) -> f64 {
        2.0 * self.relative_mode_rate() * alpha
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn drift_index_and_hedge_ratio_are_inverse() {
        let p = ModelParams::new(0.4, -1.3).unwrap();
        let q = ModelParams::from_hedge(0.4, p.omega()).unwrap();
        assert_relative_eq!(q.mu(), -1.3, max_relative = 1e-14);
        // omega = 0 is the unhedged writer: mu = 1.
        assert_relative_eq!(ModelParams::from_hedge(0.7, 0.0).unwrap().mu(), 1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ModelParams::new(0.0, 1.0).is_err());
        assert!(ModelParams::new(-0.2, 1.0).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0).is_err());
        assert!(ModelParams::new(0.3, f64::INFINITY).is_err());
        assert!(ModelParams::new(0.3, 0.0).unwrap().with_spot(-1.0).is_err());
        assert!(EffectiveMaturity::from_alpha(-0.5).is_err());
        assert!(CorrelationScale::from_chi(0.0).is_err());
        assert!(CorrelationScale::from_chi(-2.0).is_err());
        assert!(CorrelationScale::from_chi(f64::NAN).is_err());
    }

    #[test]
    fn effective_maturity_round_trip() {
        let m = EffectiveMaturity::from_time(0.25, 10.0).unwrap();
        assert_relative_eq!(m.alpha(), 0.5 * 0.0625 * 10.0);
        assert_relative_eq!(m.time(0.25), 10.0, max_relative = 1e-14);
    }

    #[test]
    fn correlation_limits() {
        let ind = CorrelationScale::from_chi(f64::INFINITY).unwrap();
        assert!(ind.is_independent());
        assert_eq!(ind.relative_mode_rate(), 2.0);
        assert_eq!(ind.marginal_rate(), 1.0);
        assert_eq!(ind.increment_correlation(), 0.0);
        assert_eq!(CorrelationScale::from_inv_chi(0.0).unwrap(), ind);

        let c = CorrelationScale::from_chi(1.0).unwrap();
        assert_relative_eq!(c.relative_mode_rate(), 2.0 / 3.0);
        assert_relative_eq!(c.marginal_rate(), 2.0 / 3.0);
        assert_relative_eq!(c.increment_correlation(), 0.5);
        assert_relative_eq!(c.logit_variance(1.0), 4.0 / 3.0, max_relative = 1e-14);

        // Large chi approaches the independent rates smoothly.
        let big = CorrelationScale::from_chi(1e8).unwrap();
        assert_relative_eq!(big.relative_mode_rate(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(big.marginal_rate(), 1.0, max_relative = 1e-15);
    }
}
