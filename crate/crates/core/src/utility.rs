//! Utility functions rebuilt from inverse marginals.
//!
//! A [`UtilityFn`] is pinned by one point `(anchor_x, anchor_v)` and its
//! inverse marginal `I`, so that `U(x) = anchor_v + ∫_{anchor_x}^x I^{-1}`.
//! Power inputs integrate in closed form. Everything else goes through the
//! convex-dual form of the same integral,
//!
//! ```text
//! ∫_{x0}^{x1} I^{-1}(ξ) dξ = x1 y1 - x0 y0 - ∫_{y0}^{y1} I(y) dy,   y_i = I^{-1}(x_i),
//! ```
//!
//! which needs a single inversion per evaluation and is first-order
//! insensitive to the error in that inversion. [`UtilityFn::value_direct`]
//! integrates `I^{-1}` itself and serves as a cross-check.

use std::io::Write;

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::marginal::MarginalFn;
use crate::market::PeriodParams;
use crate::numeric::integrate;

#[derive(Debug, Clone)]
pub struct UtilityFn {
    inv_marginal: MarginalFn,
    anchor_x: f64,
    anchor_v: f64,
    // U'(anchor_x), cached for the dual route.
    anchor_y: f64,
    cfg: SolverConfig,
}

impl UtilityFn {
    /// `U(x) = x^(1 - 1/theta) / (1 - 1/theta)`, with inverse marginal
    /// `y^(-theta)`.
    pub fn power(theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidTheta { theta });
        }
        if theta == 1.0 {
            return Err(Error::ThetaOne);
        }
        Self::new(
            MarginalFn::power(theta)?,
            1.0,
            1.0 / (1.0 - 1.0 / theta),
            SolverConfig::default(),
        )
    }

    /// `U(x) = ln x`.
    pub fn log() -> Self {
        Self::new(
            MarginalFn::power(1.0).expect("theta = 1 is valid"),
            1.0,
            0.0,
            SolverConfig::default(),
        )
        .expect("log utility construction cannot fail")
    }

    /// Utility with the given inverse marginal and `U(anchor_x) = anchor_v`.
    pub fn new(
        inv_marginal: MarginalFn,
        anchor_x: f64,
        anchor_v: f64,
        cfg: SolverConfig,
    ) -> Result<Self> {
        if !(anchor_x.is_finite() && anchor_x > 0.0) {
            return Err(Error::NonpositiveWealth { x: anchor_x });
        }
        if !anchor_v.is_finite() {
            return Err(Error::Domain {
                what: "anchor value",
                value: anchor_v,
            });
        }
        let anchor_y =
            inv_marginal.invert_with(anchor_x, cfg.tol_invert, cfg.max_bracket_expansions)?;
        Ok(UtilityFn {
            inv_marginal,
            anchor_x,
            anchor_v,
            anchor_y,
            cfg,
        })
    }

    /// Same function, different numerical settings.
    pub fn with_config(mut self, cfg: SolverConfig) -> Self {
        self.cfg = cfg;
        self
    }

    pub fn inv_marginal(&self) -> &MarginalFn {
        &self.inv_marginal
    }

    pub fn anchor(&self) -> (f64, f64) {
        (self.anchor_x, self.anchor_v)
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// `U'(x)`, the `y` with `I(y) = x`.
    pub fn marginal(&self, x: f64) -> Result<f64> {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::NonpositiveWealth { x });
        }
        self.inv_marginal
            .invert_with(x, self.cfg.tol_invert, self.cfg.max_bracket_expansions)
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::NonpositiveWealth { x });
        }
        if x == self.anchor_x {
            return Ok(self.anchor_v);
        }
        if let Some((theta, scale)) = self.inv_marginal.as_power() {
            let f = |x: f64| {
                if theta == 1.0 {
                    scale * x.ln()
                } else {
                    let e = 1.0 - 1.0 / theta;
                    scale.powf(1.0 / theta) * x.powf(e) / e
                }
            };
            return Ok(self.anchor_v + (f(x) - f(self.anchor_x)));
        }
        let y = self.marginal(x)?;
        Ok(self.anchor_v + dual_integral(&self.inv_marginal, self.anchor_x, self.anchor_y, x, y)?)
    }

    /// `U(x)` by integrating `I^{-1}` directly from the anchor.
    pub fn value_direct(&self, x: f64) -> Result<f64> {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::NonpositiveWealth { x });
        }
        let q = integrate(
            |t: f64| {
                let xi = t.exp();
                Ok::<_, Error>(self.marginal(xi)? * xi)
            },
            self.anchor_x.ln(),
            x.ln(),
            self.cfg.tol_quad,
            0.0,
            self.cfg.quad_budget,
        )?;
        if !q.converged {
            return Err(Error::QuadratureFailure {
                lo: self.anchor_x,
                hi: x,
                evals: q.evaluations,
            });
        }
        Ok(self.anchor_v + q.value)
    }

    /// Writes `(x, U(x), U'(x))` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W, grid: &[f64]) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["x", "U", "U_prime"])?;
        for &x in grid {
            w.write_record([
                format!("{x:e}"),
                format!("{:e}", self.value(x)?),
                format!("{:e}", self.marginal(x)?),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `∫_{x0}^{x1} I^{-1}` given `y0 = I^{-1}(x0)` and `y1 = I^{-1}(x1)`, by
/// integration by parts: `x1 y1 - x0 y0 - ∫_{y0}^{y1} I`.
fn dual_integral(i: &MarginalFn, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<f64> {
    Ok(x1 * y1 - x0 * y0 - i.integral(y0, y1)?)
}

/// Builds the next-period utility from its inverse marginal `i1`:
///
/// ```text
/// U1(x) = U0(1) + p ∫_{I1(ρu U0'(1))}^x I1^{-1} + (1-p) ∫_{I1(ρd U0'(1))}^x I1^{-1}
/// ```
pub fn reconstruct(i1: &MarginalFn, u0: &UtilityFn, params: &PeriodParams) -> Result<UtilityFn> {
    reconstruct_anchored(i1, u0, params, 1.0)
}

/// [`reconstruct`] with the lower limits taken at `anchor` instead of 1; the
/// resulting function does not depend on this choice.
pub fn reconstruct_anchored(
    i1: &MarginalFn,
    u0: &UtilityFn,
    params: &PeriodParams,
    anchor: f64,
) -> Result<UtilityFn> {
    let cfg = u0.cfg;
    let y0 = u0.marginal(anchor)?;
    let v0 = u0.value(anchor)?;
    let y_anchor = i1.invert_with(anchor, cfg.tol_invert, cfg.max_bracket_expansions)?;
    let mut v = v0;
    for (weight, rho) in [(params.p, params.rho_u), (1.0 - params.p, params.rho_d)] {
        let y_state = rho * y0;
        let x_state = i1.eval(y_state)?;
        if x_state != anchor {
            v += weight * dual_integral(i1, x_state, y_state, anchor, y_anchor)?;
        }
    }
    Ok(UtilityFn {
        inv_marginal: i1.clone(),
        anchor_x: anchor,
        anchor_v: v,
        anchor_y: y_anchor,
        cfg,
    })
}
