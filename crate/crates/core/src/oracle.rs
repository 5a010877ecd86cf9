//! Brute-force check of a solved period.
//!
//! Given the terminal utility `U1`, maximize `E[U1(x + π(R - 1))]` over the
//! admissible allocations by direct search and compare with `U0(x)` and the
//! analytic `π*(x)`. Nothing here touches the functional-equation solver; the
//! only shared code is `UtilityFn::value`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::PeriodParams;
use crate::numeric::golden_max;
use crate::utility::UtilityFn;

/// Points in the coarse scan that precedes golden-section refinement.
pub const GRID_RESOLUTION: usize = 1001;
/// Relative tolerance for [`verify_pair`].
pub const PAIR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleResult {
    pub value: f64,
    pub argmax_pi: f64,
    pub grid_resolution: usize,
    pub refinement_passes: usize,
}

/// `p U1(x + π(u-1)) + (1-p) U1(x + π(d-1))`.
pub fn objective(u1: &UtilityFn, params: &PeriodParams, x: f64, pi: f64) -> Result<f64> {
    let up = x + pi * (params.u - 1.0);
    let down = x + pi * (params.d - 1.0);
    Ok(params.p * u1.value(up)? + (1.0 - params.p) * u1.value(down)?)
}

/// Maximizes the one-period expected utility of `u1` at wealth `x`.
pub fn maximize(u1: &UtilityFn, params: &PeriodParams, x: f64) -> Result<OracleResult> {
    let range = params.admissible_range(x)?;
    let eps = 1e-12 * x;
    let (lo, hi) = (range.lo + eps, range.hi - eps);
    search(|pi| objective(u1, params, x, pi), lo, hi, 1e-10 * x)
}

// Coarse scan, unimodality check, golden-section refinement around the best
// grid point.
fn search<F>(f: F, lo: f64, hi: f64, width_tol: f64) -> Result<OracleResult>
where
    F: Fn(f64) -> Result<f64>,
{
    let step = (hi - lo) / (GRID_RESOLUTION - 1) as f64;
    let grid: Vec<f64> = (0..GRID_RESOLUTION).map(|i| lo + step * i as f64).collect();
    let values = grid.iter().map(|&pi| f(pi)).collect::<Result<Vec<_>>>()?;

    let k = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("grid is non-empty");
    // Nondecreasing up to k, nonincreasing after, up to rounding.
    for i in 0..GRID_RESOLUTION - 1 {
        let slack = 1e-12 * (values[i].abs() + values[i + 1].abs());
        let bad = if i < k {
            values[i + 1] < values[i] - slack
        } else {
            values[i + 1] > values[i] + slack
        };
        if bad {
            return Err(Error::NonConcaveDetected);
        }
    }

    let a = grid[k.saturating_sub(1)];
    let b = grid[(k + 1).min(GRID_RESOLUTION - 1)];
    let g = golden_max(&f, a, b, width_tol, 500)?;
    if !g.unimodal {
        return Err(Error::NonConcaveDetected);
    }
    let (value, argmax_pi) = if g.fx >= values[k] {
        (g.fx, g.x)
    } else {
        (values[k], grid[k])
    };
    Ok(OracleResult {
        value,
        argmax_pi,
        grid_resolution: GRID_RESOLUTION,
        refinement_passes: g.iterations,
    })
}

/// Analytic optimal allocation for the pair `(u0, u1)`:
/// `(I1(ρu U0'(x)) - I1(ρd U0'(x))) / (u - d)`.
pub fn analytic_allocation(
    u0: &UtilityFn,
    u1: &UtilityFn,
    params: &PeriodParams,
    x: f64,
) -> Result<f64> {
    let y = u0.marginal(x)?;
    let i1 = u1.inv_marginal();
    Ok((i1.eval(params.rho_u * y)? - i1.eval(params.rho_d * y)?) / (params.u - params.d))
}

/// One wealth level of [`verify_pair`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRow {
    pub x: f64,
    pub u0: f64,
    pub oracle_value: f64,
    pub pi_star: f64,
    pub oracle_pi: f64,
    /// `|oracle value - U0(x)| / max(|U0(x)|, x U0'(x))`.
    pub value_gap: f64,
    /// `|oracle argmax - π*| / max(|π*|, x)`.
    pub pi_gap: f64,
    /// `oracle value - objective(π*)`, scaled like `value_gap`.
    pub optimality_gap: f64,
    pub error: Option<String>,
}

impl PairRow {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.value_gap <= PAIR_TOL && self.pi_gap <= PAIR_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub rows: Vec<PairRow>,
}

impl PairReport {
    pub fn passed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(PairRow::passed)
    }

    pub fn max_value_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.value_gap).fold(0.0, f64::max)
    }

    pub fn max_pi_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.pi_gap).fold(0.0, f64::max)
    }
}

/// Checks that `u0` is the value function of `u1` with optimizer `π*` at each
/// grid point. Always returns a report; failures are recorded per row.
pub fn verify_pair(
    u0: &UtilityFn,
    u1: &UtilityFn,
    params: &PeriodParams,
    grid: &[f64],
) -> PairReport {
    let rows = grid
        .iter()
        .map(|&x| match verify_point(u0, u1, params, x) {
            Ok(row) => row,
            Err(e) => PairRow {
                x,
                u0: f64::NAN,
                oracle_value: f64::NAN,
                pi_star: f64::NAN,
                oracle_pi: f64::NAN,
                value_gap: f64::INFINITY,
                pi_gap: f64::INFINITY,
                optimality_gap: f64::INFINITY,
                error: Some(e.to_string()),
            },
        })
        .collect();
    PairReport { rows }
}

fn verify_point(u0: &UtilityFn, u1: &UtilityFn, params: &PeriodParams, x: f64) -> Result<PairRow> {
    let res = maximize(u1, params, x)?;
    let v0 = u0.value(x)?;
    let scale = v0.abs().max(x * u0.marginal(x)?);
    let pi_star = analytic_allocation(u0, u1, params, x)?;
    let at_star = objective(u1, params, x, pi_star)?;
    Ok(PairRow {
        x,
        u0: v0,
        oracle_value: res.value,
        pi_star,
        oracle_pi: res.argmax_pi,
        value_gap: (res.value - v0).abs() / scale,
        pi_gap: (res.argmax_pi - pi_star).abs() / pi_star.abs().max(x),
        optimality_gap: (res.value - at_star) / scale,
        error: None,
    })
}
