//! Stochastic-volatility jump models and their decorrelated reference form
//!
//! The engine prices under dynamics with square-root variance `Y` and,
//! optionally, compound Poisson jumps on the asset:
//!
//! ```text
//!     dS_t / S_t- = (r - q) dt + sqrt(Y_t) dW_t + d(sum of (exp(J_i) - 1))
//!     dY_t        = kappa (theta - Y_t) dt + sigma sqrt(Y_t) dZ_t,
//!     d<W, Z>_t   = rho dt.
//! ```
//!
//! The substitution `X = ln S - (rho / sigma) Y` removes the correlation:
//! `X` is driven by a Brownian motion independent of the one driving `Y`,
//!
//! ```text
//!     dX_t = mu_X(Y_t) dt + sqrt((1 - rho^2) Y_t) dB_t + gamma dJ_t,
//!     mu_X(y) = a + b y,
//!     a = r - q - c - (rho / sigma) kappa theta,
//!     b = (rho / sigma) kappa - 1/2,
//! ```
//!
//! where `c = lambda E[exp(J) - 1]` when the jump compensator is on (the
//! discounted asset is then a martingale) and `c = 0` otherwise. The jump
//! scale `gamma` is `1` when jumps are present and `0` otherwise.
//!
//! A terminal payoff `phi(S_T)` becomes `f(x, y) = phi(exp(x + (rho/sigma) y))`
//! on the transformed pair, optionally discounted by `exp(-r T)`.

use crate::cir_tree::CirParams;
use crate::error::{Error, Result};
use crate::levy::JumpLaw;

/// Market and model parameters in the original (correlated) coordinates.
#[derive(Debug, Clone, Copy)]
pub struct BatesParams {
    pub s0: f64,
    pub rate: f64,
    pub dividend: f64,
    /// Brownian correlation between asset and variance, in `(-1, 1)`.
    pub rho: f64,
    pub cir: CirParams,
    pub jumps: JumpLaw,
    /// Jump scale in the transformed coordinate: `1` with jumps, `0` without.
    pub gamma: f64,
    /// Subtract `lambda E[exp(J) - 1]` from the asset drift so the discounted
    /// asset stays a martingale.
    pub compensate: bool,
}

impl BatesParams {
    /// Jump-free model.
    pub fn heston(s0: f64, rate: f64, dividend: f64, rho: f64, cir: CirParams) -> BatesParams {
        BatesParams {
            s0,
            rate,
            dividend,
            rho,
            cir,
            jumps: JumpLaw::None,
            gamma: 0.0,
            compensate: true,
        }
    }

    /// Model with compound Poisson jumps on the asset, compensated by default.
    pub fn bates(
        s0: f64,
        rate: f64,
        dividend: f64,
        rho: f64,
        cir: CirParams,
        jumps: JumpLaw,
    ) -> BatesParams {
        let gamma = if jumps.lambda() > 0.0 { 1.0 } else { 0.0 };
        BatesParams {
            s0,
            rate,
            dividend,
            rho,
            cir,
            jumps,
            gamma,
            compensate: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.s0.is_finite() || self.s0 <= 0.0 {
            return Err(Error::invalid("market.s0", self.s0, "must be > 0"));
        }
        if !self.rate.is_finite() {
            return Err(Error::invalid("market.rate", self.rate, "must be finite"));
        }
        if !self.dividend.is_finite() {
            return Err(Error::invalid(
                "market.dividend",
                self.dividend,
                "must be finite",
            ));
        }
        if !self.rho.is_finite() || self.rho.abs() >= 1.0 {
            return Err(Error::invalid(
                "market.rho",
                self.rho,
                "must lie strictly inside (-1, 1)",
            ));
        }
        if self.gamma != 0.0 && self.gamma != 1.0 {
            return Err(Error::invalid(
                "market.gamma",
                self.gamma,
                "must be 0 (no jump channel) or 1",
            ));
        }
        if self.jumps.lambda() > 0.0 && self.gamma == 0.0 {
            return Err(Error::invalid(
                "market.gamma",
                self.gamma,
                "must be 1 when the jump intensity is positive",
            ));
        }
        self.jumps.validate()?;
        self.cir.validate()
    }
}

/// The model in decorrelated coordinates `(X, Y)`; see the module
/// documentation.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceModel {
    cir: CirParams,
    law: JumpLaw,
    gamma: f64,
    rho_over_sigma: f64,
    drift_const: f64,
    drift_slope: f64,
    one_minus_rho2: f64,
    x0: f64,
    s0: f64,
    rate: f64,
    dividend: f64,
}

/// Rewrites the model in the independent-driver coordinates.
pub fn to_reference(params: &BatesParams) -> Result<ReferenceModel> {
    params.validate()?;
    let rho_over_sigma = params.rho / params.cir.sigma;
    let compensator = if params.compensate {
        params.jumps.lambda() * params.jumps.mean_relative_jump()
    } else {
        0.0
    };
    let drift_const = params.rate - params.dividend - compensator
        - rho_over_sigma * params.cir.kappa * params.cir.theta;
    let drift_slope = rho_over_sigma * params.cir.kappa - 0.5;
    Ok(ReferenceModel {
        cir: params.cir,
        law: params.jumps,
        gamma: params.gamma,
        rho_over_sigma,
        drift_const,
        drift_slope,
        one_minus_rho2: 1.0 - params.rho * params.rho,
        x0: params.s0.ln() - rho_over_sigma * params.cir.y0,
        s0: params.s0,
        rate: params.rate,
        dividend: params.dividend,
    })
}

impl ReferenceModel {
    #[inline]
    pub fn cir(&self) -> &CirParams {
        &self.cir
    }

    #[inline]
    pub fn law(&self) -> &JumpLaw {
        &self.law
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn x0(&self) -> f64 {
        self.x0
    }

    #[inline]
    pub fn s0(&self) -> f64 {
        self.s0
    }

    #[inline]
    pub fn rate(&self) -> f64 {
        self.rate
    }

    #[inline]
    pub fn dividend(&self) -> f64 {
        self.dividend
    }

    #[inline]
    pub fn rho_over_sigma(&self) -> f64 {
        self.rho_over_sigma
    }

    /// Drift `mu_X(y) = a + b y` of the transformed log price.
    #[inline]
    pub fn mu_x(&self, y: f64) -> f64 {
        self.drift_const + self.drift_slope * y
    }

    /// Squared volatility `(1 - rho^2) y` of the transformed log price.
    #[inline]
    pub fn sigma_x2(&self, y: f64) -> f64 {
        self.one_minus_rho2 * y
    }

    /// Asset level recovered from the transformed pair.
    #[inline]
    pub fn spot(&self, x: f64, y: f64) -> f64 {
        (x + self.rho_over_sigma * y).exp()
    }
}

/// Lifts a terminal payoff `phi(S_T)` to the transformed coordinates,
/// discounting by `exp(-rate * maturity)` when `discount` is set.
pub fn transform_payoff<F>(
    phi: F,
    model: &ReferenceModel,
    maturity: f64,
    discount: bool,
) -> impl Fn(f64, f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let factor = if discount {
        (-model.rate() * maturity).exp()
    } else {
        1.0
    };
    let rho_over_sigma = model.rho_over_sigma();
    move |x: f64, y: f64| factor * phi((x + rho_over_sigma * y).exp())
}
