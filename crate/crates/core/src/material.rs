//! Langevin magnetization law and the coefficients derived from it.
//!
//! With `y = gamma * x`:
//!
//! * `L(y) = coth(y) - 1/y`,
//! * `alpha(x) = 1 + (Ms / x) L(gamma x)`, the nonlinear diffusion coefficient of
//!   the potential equation,
//! * `beta(x) = (Ms / gamma) ln(sinh(gamma x) / x)`, the Kelvin-force potential.
//!
//! `coth(y) - 1/y` cancels catastrophically for small `y` and `sinh` overflows
//! for large `y`, so every function switches between a Taylor series, a
//! cancellation-free power series, the closed form and an asymptotic form.

use serde::{Deserialize, Serialize};

use crate::error::{FhdError, Result};

/// Below this `y` the truncated Taylor series is used.
pub const SERIES_THRESHOLD: f64 = 1e-4;
/// Up to this `y` the positive power series of the numerator is used.
pub const POWER_SERIES_LIMIT: f64 = 1.0;
/// Above this `y` the exponentially small tails are handled explicitly.
pub const ASYMPTOTIC_THRESHOLD: f64 = 30.0;

/// Physical constants of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub mu0: f64,
    pub ms: f64,
    pub chi0: f64,
    pub gamma: f64,
    pub rho: f64,
    pub eta: f64,
}

impl Default for MaterialParams {
    /// All constants equal to one (so `chi0 = 1/3`).
    fn default() -> Self {
        Self {
            mu0: 1.0,
            ms: 1.0,
            chi0: 1.0 / 3.0,
            gamma: 1.0,
            rho: 1.0,
            eta: 1.0,
        }
    }
}

impl MaterialParams {
    /// Builds parameters from the Langevin parameter; `chi0 = gamma Ms / 3`.
    pub fn new(mu0: f64, ms: f64, gamma: f64, rho: f64, eta: f64) -> Result<Self> {
        let p = Self {
            mu0,
            ms,
            chi0: gamma * ms / 3.0,
            gamma,
            rho,
            eta,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters from the initial susceptibility; `gamma = 3 chi0 / Ms`.
    pub fn from_susceptibility(mu0: f64, ms: f64, chi0: f64, rho: f64, eta: f64) -> Result<Self> {
        let p = Self {
            mu0,
            ms,
            chi0,
            gamma: 3.0 * chi0 / ms,
            rho,
            eta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("mu0", self.mu0),
            ("Ms", self.ms),
            ("chi0", self.chi0),
            ("gamma", self.gamma),
            ("rho", self.rho),
            ("eta", self.eta),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FhdError::Material(format!("{name} must be positive, got {v}")));
            }
        }
        let expected = 3.0 * self.chi0 / self.ms;
        if (self.gamma - expected).abs() > 1e-12 * self.gamma.max(expected) {
            return Err(FhdError::Material(format!(
                "gamma = {} is inconsistent with 3 chi0 / Ms = {expected}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Upper bound of `alpha`, attained in the limit `x -> 0`.
    pub fn alpha_max(&self) -> f64 {
        1.0 + self.gamma * self.ms / 3.0
    }
}

fn check_nonnegative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(FhdError::Material(format!("{name} needs a nonnegative argument, got {x}")))
    }
}

pub fn langevin(y: f64) -> Result<f64> {
    check_nonnegative("langevin", y)?;
    Ok(langevin_raw(y))
}

pub fn alpha(x: f64, p: &MaterialParams) -> Result<f64> {
    check_nonnegative("alpha", x)?;
    Ok(alpha_raw(x, p))
}

pub fn beta(x: f64, p: &MaterialParams) -> Result<f64> {
    check_nonnegative("beta", x)?;
    Ok(beta_raw(x, p))
}

/// `(alpha(|h|) - 1) h`; zero for `h = 0`.
pub fn magnetization(h: [f64; 2], p: &MaterialParams) -> [f64; 2] {
    let s = susceptibility_raw(h[0].hypot(h[1]), p);
    [s * h[0], s * h[1]]
}

/// Central finite-difference estimate of `alpha'`, for diagnostics only.
pub fn alpha_derivative_fd(x: f64, p: &MaterialParams) -> Result<f64> {
    check_nonnegative("alpha'", x)?;
    let h = 1e-6 * x.max(1e-3);
    let lo = (x - h).max(0.0);
    Ok((alpha_raw(x + h, p) - alpha_raw(lo, p)) / (x + h - lo))
}

pub(crate) fn langevin_raw(y: f64) -> f64 {
    if y < POWER_SERIES_LIMIT {
        y * langevin_over_y(y)
    } else if y <= ASYMPTOTIC_THRESHOLD {
        closed::langevin(y)
    } else {
        asymptotic::langevin(y)
    }
}

pub(crate) fn alpha_raw(x: f64, p: &MaterialParams) -> f64 {
    1.0 + susceptibility_raw(x, p)
}

/// `alpha(x) - 1` without the cancellation of forming `alpha` first.
pub(crate) fn susceptibility_raw(x: f64, p: &MaterialParams) -> f64 {
    p.ms * p.gamma * langevin_over_y(p.gamma * x)
}

pub(crate) fn beta_raw(x: f64, p: &MaterialParams) -> f64 {
    (p.ms / p.gamma) * (ln_sinhc(p.gamma * x) + p.gamma.ln())
}

/// `L(y) / y`, finite at zero with value 1/3.
pub(crate) fn langevin_over_y(y: f64) -> f64 {
    if y < SERIES_THRESHOLD {
        series::langevin_over_y(y)
    } else if y < POWER_SERIES_LIMIT {
        power::langevin_over_y(y)
    } else if y <= ASYMPTOTIC_THRESHOLD {
        closed::langevin(y) / y
    } else {
        asymptotic::langevin(y) / y
    }
}

/// `ln(sinh(y) / y)`.
pub(crate) fn ln_sinhc(y: f64) -> f64 {
    if y < SERIES_THRESHOLD {
        series::ln_sinhc(y)
    } else if y < POWER_SERIES_LIMIT {
        power::ln_sinhc(y)
    } else if y <= ASYMPTOTIC_THRESHOLD {
        closed::ln_sinhc(y)
    } else {
        asymptotic::ln_sinhc(y)
    }
}

mod series {
    pub fn langevin_over_y(y: f64) -> f64 {
        let y2 = y * y;
        1.0 / 3.0 - y2 / 45.0 + 2.0 * y2 * y2 / 945.0
    }

    pub fn ln_sinhc(y: f64) -> f64 {
        let y2 = y * y;
        y2 / 6.0 - y2 * y2 / 180.0
    }
}

// Power series with positive terms only:
//   y cosh y - sinh y = sum_{k>=1} 2k y^{2k+1} / (2k+1)!
//   sinh(y)/y - 1     = sum_{k>=1} y^{2k} / (2k+1)!
mod power {
    const TERMS: usize = 12;

    pub fn langevin_over_y(y: f64) -> f64 {
        let y2 = y * y;
        // running y^{2k-2} / (2k+1)!
        let mut term = 1.0 / 6.0;
        let mut num = 0.0;
        for k in 1..=TERMS {
            num += 2.0 * k as f64 * term;
            term *= y2 / ((2 * k + 2) as f64 * (2 * k + 3) as f64);
        }
        // L / y = (y cosh y - sinh y) / (y^2 sinh y)
        num * y / y.sinh()
    }

    pub fn ln_sinhc(y: f64) -> f64 {
        let y2 = y * y;
        let mut term = y2 / 6.0;
        let mut sum = 0.0;
        for k in 1..=TERMS {
            sum += term;
            term *= y2 / ((2 * k + 2) as f64 * (2 * k + 3) as f64);
        }
        sum.ln_1p()
    }
}

mod closed {
    pub fn langevin(y: f64) -> f64 {
        1.0 / y.tanh() - 1.0 / y
    }

    pub fn ln_sinhc(y: f64) -> f64 {
        (y.sinh() / y).ln()
    }
}

mod asymptotic {
    pub fn langevin(y: f64) -> f64 {
        let e = (-2.0 * y).exp();
        1.0 + 2.0 * e / (1.0 - e) - 1.0 / y
    }

    pub fn ln_sinhc(y: f64) -> f64 {
        y - std::f64::consts::LN_2 + (-(-2.0 * y).exp()).ln_1p() - y.ln()
    }
}
