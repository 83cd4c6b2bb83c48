//! Regularized incomplete beta function `I_x(a, b)`.
//!
//! Evaluated with the modified Lentz continued fraction, switching to the
//! reflected form `1 - I_{1-x}(b, a)` past the convergence crossover
//! `x > (a + 1) / (a + b + 2)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum BetaError {
    #[error("beta shape parameters must be positive and finite (a={a}, b={b})")]
    InvalidShape { a: f64, b: f64 },
    #[error("x={x} is outside [0, 1]")]
    Domain { x: f64 },
}

/// Shape parameters `(a, b)` of a beta law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    /// The shapes used by the strength schedule.
    pub const POLICY_DEFAULT: BetaParams = BetaParams { a: 0.6, b: 4.4 };

    pub fn new(a: f64, b: f64) -> Result<Self, BetaError> {
        let p = BetaParams { a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), BetaError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.a) && ok(self.b) {
            Ok(())
        } else {
            Err(BetaError::InvalidShape { a: self.a, b: self.b })
        }
    }
}

impl Default for BetaParams {
    fn default() -> Self {
        Self::POLICY_DEFAULT
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the series in its accurate half-plane.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `ln B(a, b)`.
pub fn log_beta(p: BetaParams) -> Result<f64, BetaError> {
    p.validate()?;
    Ok(ln_gamma(p.a) + ln_gamma(p.b) - ln_gamma(p.a + p.b))
}

const CF_MAX_ITER: usize = 300;
const CF_EPS: f64 = 1e-15;
const CF_TINY: f64 = 1e-300;

/// Continued fraction for `I_x(a, b)` without the prefactor, modified Lentz.
fn continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let guard = |v: f64| if v.abs() < CF_TINY { CF_TINY } else { v };

    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - qab * x / qap);
    let mut h = d;

    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let even = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / guard(1.0 + even * d);
        c = guard(1.0 + even / c);
        h *= d * c;

        let odd = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / guard(1.0 + odd * d);
        c = guard(1.0 + odd / c);
        let delta = d * c;
        h *= delta;

        if (delta - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`, the beta CDF at `x`.
pub fn reg_inc_beta(x: f64, p: BetaParams) -> Result<f64, BetaError> {
    p.validate()?;
    if !(0.0..=1.0).contains(&x) {
        return Err(BetaError::Domain { x });
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let BetaParams { a, b } = p;
    let ln_front = a * x.ln() + b * (-x).ln_1p() - log_beta(p)?;
    let value = if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * continued_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * continued_fraction(b, a, 1.0 - x) / b
    };
    Ok(value.clamp(0.0, 1.0))
}
