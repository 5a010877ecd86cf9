use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical settings shared by every period of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative next-term cutoff for the alternating series.
    pub tol_series: f64,
    /// Hard cap on series terms.
    pub max_series_terms: usize,
    /// Relative tolerance of the adaptive quadrature.
    pub tol_quad: f64,
    /// Integrand evaluations allowed per integral.
    pub quad_budget: usize,
    /// Relative tolerance on `|I(y) - z| / z` when inverting.
    pub tol_invert: f64,
    /// Geometric bracket expansions allowed when inverting.
    pub max_bracket_expansions: usize,
    /// Points on the sampling grid used for classification and export.
    pub grid_points: usize,
    pub y_min: f64,
    pub y_max: f64,
    /// Threshold below which a sampled decade supremum counts as zero.
    pub limit_eps: f64,
    /// Inada proxy threshold: `I(y_max) < eps` and `I(y_min) > 1/eps`.
    pub inada_eps: f64,
    /// Probe points for the Inada proxy.
    pub inada_y_min: f64,
    pub inada_y_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_series: 1e-12,
            max_series_terms: 10_000,
            tol_quad: 1e-10,
            quad_budget: 1_000_000,
            tol_invert: 1e-10,
            max_bracket_expansions: 64,
            grid_points: 512,
            y_min: 1e-8,
            y_max: 1e8,
            limit_eps: 1e-4,
            inada_eps: 1e-6,
            inada_y_min: 1e-20,
            inada_y_max: 1e20,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let tols = [
            ("tol_series", self.tol_series),
            ("tol_quad", self.tol_quad),
            ("tol_invert", self.tol_invert),
            ("limit_eps", self.limit_eps),
            ("inada_eps", self.inada_eps),
        ];
        for (name, t) in tols {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {t} must lie in (0, 1)"
                )));
            }
        }
        if !(self.y_min > 0.0 && self.y_min < self.y_max && self.y_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < y_min < y_max, got [{}, {}]",
                self.y_min, self.y_max
            )));
        }
        if !(self.inada_y_min > 0.0 && self.inada_y_min < self.inada_y_max) {
            return Err(Error::InvalidConfig(
                "need 0 < inada_y_min < inada_y_max".into(),
            ));
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidConfig(
                "grid_points must be at least 2".into(),
            ));
        }
        if self.max_series_terms == 0 || self.quad_budget < 15 {
            return Err(Error::InvalidConfig(
                "series/quadrature budgets too small".into(),
            ));
        }
        Ok(())
    }
}
