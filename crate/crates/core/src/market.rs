//! One period of the binomial market.
//!
//! The stock's gross return over a period is `u` with probability `p` and `d`
//! otherwise; the riskless rate is zero. Everything downstream works with the
//! derived quantities stored on [`PeriodParams`]: the risk-neutral probability
//! `q`, the functional-equation coefficients `a`, `b`, `c` and the two values
//! of the pricing kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|a - 1|` below this routes to the no-risk-premium branch.
pub const TRIVIAL_A_TOL: f64 = 1e-12;

/// Validated one-period market description with derived coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodParams {
    pub u: f64,
    pub d: f64,
    pub p: f64,
    pub q: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rho_u: f64,
    pub rho_d: f64,
}

impl PeriodParams {
    /// Validates `0 < d < 1 < u` and `0 < p < 1`, then derives `q`, `a`, `b`,
    /// `c` and the pricing kernel.
    pub fn derive(u: f64, d: f64, p: f64) -> Result<Self> {
        if !(u.is_finite() && d.is_finite() && d > 0.0 && d < 1.0 && u > 1.0) {
            return Err(Error::ArbitrageViolation { u, d });
        }
        if !(p.is_finite() && p > 0.0 && p < 1.0) {
            return Err(Error::ProbabilityOutOfRange { p });
        }
        let q = (1.0 - d) / (u - d);
        let b = (1.0 - q) / q;
        let a = ((1.0 - p) / p) * (q / (1.0 - q));
        let c = (1.0 - p) / (1.0 - q);
        Ok(PeriodParams {
            u,
            d,
            p,
            q,
            a,
            b,
            c,
            rho_u: q / p,
            rho_d: (1.0 - q) / (1.0 - p),
        })
    }

    /// `log_a b`, the critical exponent of the homogeneous equation
    /// `w(ay) = -b w(y)`. Undefined (NaN/inf) when `a = 1`.
    pub fn log_a_b(&self) -> f64 {
        self.b.ln() / self.a.ln()
    }

    /// True when `p = q` up to [`TRIVIAL_A_TOL`]: the kernel is constant and
    /// the forward utility does not move.
    pub fn is_trivial(&self) -> bool {
        (self.a - 1.0).abs() < TRIVIAL_A_TOL
    }

    /// Allocation bounds that keep wealth nonnegative in both states.
    pub fn admissible_range(&self, x: f64) -> Result<AdmissibleRange> {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::NonpositiveWealth { x });
        }
        Ok(AdmissibleRange {
            lo: -x / (self.u - 1.0),
            hi: x / (1.0 - self.d),
            x,
        })
    }

    /// Gross return in the given state.
    pub fn gross_return(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::Up => self.u,
            Outcome::Down => self.d,
        }
    }
}

/// Closed interval of stock allocations admissible at wealth `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibleRange {
    pub lo: f64,
    pub hi: f64,
    pub x: f64,
}

impl AdmissibleRange {
    pub fn contains(&self, pi: f64, tol: f64) -> bool {
        pi >= self.lo - tol && pi <= self.hi + tol
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Realized state of a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Up,
    Down,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Up => "up",
            Outcome::Down => "down",
        })
    }
}
