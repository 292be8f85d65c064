//! Jump-size laws, the scaled Lévy density and its trapezoidal quadrature
//!
//! The jump component contributes the integral term
//!
//! ```text
//!     (J v)(x) = integral of [ v(x + z) - v(x) ] nu_y(z) dz
//! ```
//!
//! where `nu(z) = lambda p(z)` is the Lévy density of the compound Poisson
//! part (`p` the jump-size density) and
//!
//! ```text
//!     nu_y(z) = nu(z / gamma) / |gamma|     (gamma != 0),
//!     nu_y(z) = 0                           (gamma == 0),
//! ```
//!
//! is its pushforward under the jump scale `gamma`. The quadrature collects
//! the weights
//!
//! ```text
//!     w_l = nu_y(l dx) dx,      l = -L ..= L,
//! ```
//!
//! on a symmetric window wide enough that the neglected tail mass stays below
//! a tolerance (default `1e-12 lambda`). Two derived quantities certify the
//! discretization:
//!
//! * `quadrature_error_bound() = dx^2 |nu''|_L1 / (12 gamma^2)` bounds
//!   `|sum_l w_l - lambda|` (Poisson summation remainder),
//! * `c_nu_bound() = 1 + dx^2 |nu''|_L1 / (12 gamma^2 lambda)` bounds the
//!   total mass ratio: `sum_l w_l <= lambda c_nu`.

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.3989422804014327;

/// Jump-size law of the compound Poisson component, including its intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpLaw {
    /// No jumps.
    None,
    /// Gaussian jump sizes `J ~ N(mean, std^2)` at rate `lambda`.
    Merton { lambda: f64, mean: f64, std: f64 },
    /// Asymmetric double-exponential jump sizes at rate `lambda`: with
    /// probability `up_prob` the jump is `+Exp(eta_up)`, otherwise
    /// `-Exp(eta_down)`. `eta_up > 1` keeps `E[exp(J)]` finite.
    Kou {
        lambda: f64,
        up_prob: f64,
        eta_up: f64,
        eta_down: f64,
    },
}

impl JumpLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            JumpLaw::None => Ok(()),
            JumpLaw::Merton { lambda, mean, std } => {
                if !lambda.is_finite() || lambda < 0.0 {
                    return Err(Error::invalid("jumps.lambda", lambda, "must be >= 0"));
                }
                if !mean.is_finite() {
                    return Err(Error::invalid("jumps.m", mean, "must be finite"));
                }
                if !std.is_finite() || std <= 0.0 {
                    return Err(Error::invalid("jumps.delta", std, "must be > 0"));
                }
                Ok(())
            }
            JumpLaw::Kou {
                lambda,
                up_prob,
                eta_up,
                eta_down,
            } => {
                if !lambda.is_finite() || lambda < 0.0 {
                    return Err(Error::invalid("jumps.lambda", lambda, "must be >= 0"));
                }
                if !up_prob.is_finite() || !(0.0..=1.0).contains(&up_prob) {
                    return Err(Error::invalid("jumps.p", up_prob, "must be in [0, 1]"));
                }
                if !eta_up.is_finite() || eta_up <= 1.0 {
                    return Err(Error::invalid(
                        "jumps.eta1",
                        eta_up,
                        "must be > 1 so that E[exp(J)] is finite",
                    ));
                }
                if !eta_down.is_finite() || eta_down <= 0.0 {
                    return Err(Error::invalid("jumps.eta2", eta_down, "must be > 0"));
                }
                Ok(())
            }
        }
    }

    /// Jump intensity `lambda`.
    pub fn lambda(&self) -> f64 {
        match *self {
            JumpLaw::None => 0.0,
            JumpLaw::Merton { lambda, .. } | JumpLaw::Kou { lambda, .. } => lambda,
        }
    }

    /// Density of a single jump size. The Kou density takes its right branch
    /// at `x = 0`: `density(0) = up_prob * eta_up`.
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            JumpLaw::None => 0.0,
            JumpLaw::Merton { mean, std, .. } => {
                let z = (x - mean) / std;
                INV_SQRT_2PI / std * (-0.5 * z * z).exp()
            }
            JumpLaw::Kou {
                up_prob,
                eta_up,
                eta_down,
                ..
            } => {
                if x >= 0.0 {
                    up_prob * eta_up * (-eta_up * x).exp()
                } else {
                    (1.0 - up_prob) * eta_down * (eta_down * x).exp()
                }
            }
        }
    }

    /// Lévy density `nu(x) = lambda * density(x)`.
    pub fn levy_density(&self, x: f64) -> f64 {
        self.lambda() * self.density(x)
    }

    /// `|nu''|_L1` in closed form.
    ///
    /// Merton: `4 lambda phi(1) / std^2` exactly. Kou: the density has a kink
    /// at zero, so the value is a heuristic: the piecewise-smooth part
    /// `lambda (p eta_up^2 + (1 - p) eta_down^2)` plus the first-derivative
    /// jump `|nu'(0+) - nu'(0-)|` of the same size; the delta' contribution of
    /// the density jump itself has no L1 counterpart and is omitted.
    pub fn second_derivative_l1(&self) -> f64 {
        match *self {
            JumpLaw::None => 0.0,
            JumpLaw::Merton { lambda, std, .. } => {
                let phi1 = INV_SQRT_2PI * (-0.5f64).exp();
                4.0 * lambda * phi1 / (std * std)
            }
            JumpLaw::Kou {
                lambda,
                up_prob,
                eta_up,
                eta_down,
                ..
            } => {
                let piecewise = up_prob * eta_up * eta_up + (1.0 - up_prob) * eta_down * eta_down;
                2.0 * lambda * piecewise
            }
        }
    }

    /// `E[exp(J) - 1]`, the compensator of a unit jump on the asset.
    pub fn mean_relative_jump(&self) -> f64 {
        match *self {
            JumpLaw::None => 0.0,
            JumpLaw::Merton { mean, std, .. } => (mean + 0.5 * std * std).exp() - 1.0,
            JumpLaw::Kou {
                up_prob,
                eta_up,
                eta_down,
                ..
            } => up_prob * eta_up / (eta_up - 1.0) + (1.0 - up_prob) * eta_down / (eta_down + 1.0) - 1.0,
        }
    }

    /// `E[J^2]`, used when sizing the spatial domain.
    pub fn second_moment(&self) -> f64 {
        match *self {
            JumpLaw::None => 0.0,
            JumpLaw::Merton { mean, std, .. } => mean * mean + std * std,
            JumpLaw::Kou {
                up_prob,
                eta_up,
                eta_down,
                ..
            } => up_prob * 2.0 / (eta_up * eta_up) + (1.0 - up_prob) * 2.0 / (eta_down * eta_down),
        }
    }

    /// Upper bound on `P(|J| > a)` for `a >= 0`; exact for Kou, a Mills-ratio
    /// bound for Merton. Used to size the quadrature window.
    pub fn tail_prob_bound(&self, a: f64) -> f64 {
        fn normal_upper_tail_bound(z: f64) -> f64 {
            if z <= 0.0 {
                1.0
            } else {
                // Q(z) <= phi(z) / z for z > 0.
                INV_SQRT_2PI * (-0.5 * z * z).exp() / z
            }
        }
        match *self {
            JumpLaw::None => 0.0,
            JumpLaw::Merton { mean, std, .. } => {
                let up = normal_upper_tail_bound((a - mean) / std);
                let down = normal_upper_tail_bound((a + mean) / std);
                (up + down).min(1.0)
            }
            JumpLaw::Kou {
                up_prob,
                eta_up,
                eta_down,
                ..
            } => up_prob * (-eta_up * a).exp() + (1.0 - up_prob) * (-eta_down * a).exp(),
        }
    }
}

/// Trapezoidal discretization of the scaled Lévy density on a symmetric
/// window; see the module documentation.
#[derive(Debug, Clone)]
pub struct LevyQuadrature {
    law: JumpLaw,
    dx: f64,
    gamma: f64,
    half_window: usize,
    /// `2 * half_window + 1` weights indexed by `l + half_window`; empty when
    /// the intensity is zero.
    weights: Vec<f64>,
    total_mass: f64,
    second_derivative_l1: f64,
}

/// Hard cap on the window half-width, as a number of cells.
const MAX_HALF_WINDOW: usize = 1 << 24;

/// Builds the quadrature of the law scaled by `gamma` on step `dx`.
///
/// `tail_tol` is the admissible neglected tail mass (default
/// `1e-12 * lambda`). A law with positive intensity requires `gamma != 0`.
pub fn build_quadrature(
    law: &JumpLaw,
    gamma: f64,
    dx: f64,
    tail_tol: Option<f64>,
) -> Result<LevyQuadrature> {
    law.validate()?;
    if !dx.is_finite() || dx <= 0.0 {
        return Err(Error::invalid("dx", dx, "must be finite and > 0"));
    }
    if !gamma.is_finite() {
        return Err(Error::invalid("gamma", gamma, "must be finite"));
    }
    let lambda = law.lambda();
    if lambda == 0.0 {
        return Ok(LevyQuadrature {
            law: *law,
            dx,
            gamma,
            half_window: 0,
            weights: Vec::new(),
            total_mass: 0.0,
            second_derivative_l1: 0.0,
        });
    }
    if gamma == 0.0 {
        return Err(Error::invalid(
            "gamma",
            gamma,
            "must be nonzero when the jump intensity is positive",
        ));
    }
    let tol = tail_tol.unwrap_or(1e-12 * lambda);
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::invalid("tail_tol", tol, "must be finite and > 0"));
    }

    let scale = gamma.abs();
    let mut half_window = 1usize;
    while lambda * law.tail_prob_bound(half_window as f64 * dx / scale) >= tol {
        half_window += 1 + half_window / 8;
        if half_window > MAX_HALF_WINDOW {
            return Err(Error::Numerical(format!(
                "quadrature window exceeded {MAX_HALF_WINDOW} cells; \
                 loosen tail_tol or coarsen dx"
            )));
        }
    }

    let mut weights = Vec::with_capacity(2 * half_window + 1);
    let mut total_mass = 0.0;
    for l in -(half_window as i64)..=half_window as i64 {
        let w = law.levy_density(l as f64 * dx / scale) / scale * dx;
        weights.push(w);
        total_mass += w;
    }

    Ok(LevyQuadrature {
        law: *law,
        dx,
        gamma,
        half_window,
        weights,
        total_mass,
        second_derivative_l1: law.second_derivative_l1(),
    })
}

impl LevyQuadrature {
    #[inline]
    pub fn law(&self) -> &JumpLaw {
        &self.law
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.dx
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn lambda(&self) -> f64 {
        self.law.lambda()
    }

    /// `true` when the law carries no jumps (empty weight window).
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Window half-width `L`: weights cover `l = -L ..= L`.
    #[inline]
    pub fn half_window(&self) -> usize {
        self.half_window
    }

    /// Weight `w_l`; zero outside the window.
    #[inline]
    pub fn weight(&self, l: i64) -> f64 {
        if self.weights.is_empty() || l.unsigned_abs() as usize > self.half_window {
            0.0
        } else {
            self.weights[(l + self.half_window as i64) as usize]
        }
    }

    /// All weights, `l = -L ..= L`.
    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sum_l w_l` over the window.
    #[inline]
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Scaled Lévy density `nu_y(x)`.
    pub fn scaled_density(&self, x: f64) -> f64 {
        if self.lambda() == 0.0 || self.gamma == 0.0 {
            return 0.0;
        }
        let scale = self.gamma.abs();
        self.law.levy_density(x / scale) / scale
    }

    /// `|nu''|_L1` used in the bounds (closed form, heuristic for Kou).
    #[inline]
    pub fn second_derivative_l1(&self) -> f64 {
        self.second_derivative_l1
    }

    /// Poisson-summation bound on the mass defect:
    /// `|total_mass - lambda| <= dx^2 |nu''|_L1 / (12 gamma^2)` up to the
    /// neglected tail.
    pub fn quadrature_error_bound(&self) -> f64 {
        if self.lambda() == 0.0 {
            return 0.0;
        }
        self.dx * self.dx * self.second_derivative_l1 / (12.0 * self.gamma * self.gamma)
    }

    /// Constant `c_nu >= 1` with `sum_l w_l <= lambda c_nu`.
    pub fn c_nu_bound(&self) -> f64 {
        let lambda = self.lambda();
        if lambda == 0.0 {
            return 1.0;
        }
        1.0 + self.dx * self.dx * self.second_derivative_l1
            / (12.0 * self.gamma * self.gamma * lambda)
    }
}
