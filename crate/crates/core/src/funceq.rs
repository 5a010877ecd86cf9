//! The single-period functional equation for inverse marginals,
//!
//! ```text
//! I1(a y) + b I1(y) = (1 + b) I0(c y),    y > 0,
//! ```
//!
//! where `a`, `b`, `c` come from [`PeriodParams`]. Given `I0`, the solver
//! decides which constructive branch applies by sampling
//!
//! ```text
//! Phi0(y) = I0(a c y) - b I0(c y)      Psi0(y) = y^(-log_a b) I0(c y)
//! ```
//!
//! and then sums one of two alternating series:
//!
//! ```text
//! (I)   I1(y) = (1+b)/b * sum_m (-1)^m b^(-m) I0(a^m c y)
//! (II)  I1(y) = (1+b)   * sum_m (-1)^m b^m    I0(a^-(m+1) c y)
//! ```
//!
//! Under the branch conditions the term magnitudes decrease monotonically, so
//! truncating at the first term below `tol * |partial sum|` bounds the error
//! by that omitted term.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::marginal::{LogPeriodic, MarginalFn};
use crate::market::PeriodParams;
use crate::numeric::log_grid;

/// `|theta + log_a b|` below this is the non-unique power case.
pub const PATHOLOGICAL_TOL: f64 = 1e-9;
/// Classification always samples at least this many points.
/// `max |Phi0(y)| / (b I0(c y))` below which the input is taken to sit in
/// the critical class `I0(a y) = b I0(y)`.
pub const CRITICAL_PHI_TOL: f64 = 1e-8;
/// Lower bound on the classification grid size.
pub const MIN_CLASSIFY_POINTS: usize = 256;
const SAMPLES_PER_DECADE: usize = 33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PhiDirection {
    StrictlyIncreasing,
    StrictlyDecreasing,
    NonMonotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    SeriesI,
    SeriesII,
    TrivialAEq1,
    /// Power input whose series conditions could not be confirmed on the
    /// sampling grid; the closed form still applies.
    PowerClosedForm,
    Unsolvable,
}

impl fmt::Display for PhiDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhiDirection::StrictlyIncreasing => "increasing",
            PhiDirection::StrictlyDecreasing => "decreasing",
            PhiDirection::NonMonotone => "non-monotone",
        })
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::SeriesI => "series-i",
            Branch::SeriesII => "series-ii",
            Branch::TrivialAEq1 => "trivial",
            Branch::PowerClosedForm => "power-closed-form",
            Branch::Unsolvable => "unsolvable",
        })
    }
}

/// Outcome of [`classify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    pub phi_direction: PhiDirection,
    /// Supremum of `Psi0` over the lowest sampled decade.
    pub psi_limit_at_zero: f64,
    /// Supremum of `Psi0` over the highest sampled decade.
    pub psi_limit_at_infinity: f64,
    /// `Psi0 -> 0` accepted at `0+`.
    pub psi_vanishes_at_zero: bool,
    /// `Psi0 -> 0` accepted at infinity.
    pub psi_vanishes_at_infinity: bool,
    pub log_a_b: f64,
    pub branch: Branch,
}

/// Decides which constructive branch applies to `(i0, params)`.
///
/// Monotonicity of `Phi0` is read off the signs of successive differences on
/// a log grid. A limit `Psi0 -> 0` is accepted when the supremum over the
/// extreme decade is below `cfg.limit_eps`, or when the last three decade
/// suprema shrink geometrically toward that end.
pub fn classify(
    i0: &MarginalFn,
    params: &PeriodParams,
    cfg: &SolverConfig,
) -> Result<ConditionReport> {
    let k = params.log_a_b();
    if let Some((theta, _)) = i0.as_power() {
        if !params.is_trivial() && (theta + k).abs() < PATHOLOGICAL_TOL {
            return Err(Error::PathologicalTheta {
                theta,
                critical: -k,
            });
        }
    }

    let (a, b, c) = (params.a, params.b, params.c);
    let grid = log_grid(
        cfg.y_min,
        cfg.y_max,
        cfg.grid_points.max(MIN_CLASSIFY_POINTS),
    );
    let phi = grid
        .iter()
        .map(|&y| Ok(i0.eval(a * c * y)? - b * i0.eval(c * y)?))
        .collect::<Result<Vec<f64>>>()?;
    if !params.is_trivial() {
        // Phi0 vanishes identically exactly when I0(a y) = b I0(y), the
        // critical exponent class where solutions are not unique.
        let mut worst = 0.0_f64;
        for (&y, f) in grid.iter().zip(&phi) {
            worst = worst.max(f.abs() / (b * i0.eval(c * y)?));
        }
        if worst < CRITICAL_PHI_TOL {
            let (lo, hi) = (grid[0], grid[grid.len() - 1]);
            let theta = -(i0.eval(c * hi)?.ln() - i0.eval(c * lo)?.ln()) / (hi.ln() - lo.ln());
            return Err(Error::PathologicalTheta {
                theta,
                critical: -k,
            });
        }
    }
    let phi_direction = if phi.windows(2).all(|w| w[1] > w[0]) {
        PhiDirection::StrictlyIncreasing
    } else if phi.windows(2).all(|w| w[1] < w[0]) {
        PhiDirection::StrictlyDecreasing
    } else {
        PhiDirection::NonMonotone
    };

    let (psi_limit_at_zero, psi_limit_at_infinity, zero_ok, inf_ok) = if params.is_trivial() {
        (f64::NAN, f64::NAN, false, false)
    } else {
        let sups = decade_sups(|y| Ok(y.powf(-k) * i0.eval(c * y)?), cfg.y_min, cfg.y_max)?;
        let n = sups.len();
        let zero_ok = n >= 3 && vanishes(sups[0], sups[1], sups[2], cfg.limit_eps);
        let inf_ok = n >= 3 && vanishes(sups[n - 1], sups[n - 2], sups[n - 3], cfg.limit_eps);
        (sups[0], sups[n - 1], zero_ok, inf_ok)
    };

    let branch = if params.is_trivial() {
        Branch::TrivialAEq1
    } else {
        let a_gt_1 = a > 1.0;
        let series_i = phi_direction == PhiDirection::StrictlyIncreasing
            && if a_gt_1 { inf_ok } else { zero_ok };
        let series_ii = phi_direction == PhiDirection::StrictlyDecreasing
            && if a_gt_1 { zero_ok } else { inf_ok };
        if series_i {
            Branch::SeriesI
        } else if series_ii {
            Branch::SeriesII
        } else if i0.as_power().is_some() {
            Branch::PowerClosedForm
        } else {
            Branch::Unsolvable
        }
    };

    Ok(ConditionReport {
        phi_direction,
        psi_limit_at_zero,
        psi_limit_at_infinity,
        psi_vanishes_at_zero: zero_ok,
        psi_vanishes_at_infinity: inf_ok,
        log_a_b: k,
        branch,
    })
}

/// Per-decade shrink factor below which a decaying sequence of suprema is
/// taken to reach zero.
pub const GEOMETRIC_DECAY: f64 = 0.9;

// `s0` is the extreme decade, `s2` the one two decades in.
fn vanishes(s0: f64, s1: f64, s2: f64, eps: f64) -> bool {
    (s0 < eps && s0 < s1 && s1 < s2) || (s0 < GEOMETRIC_DECAY * s1 && s1 < GEOMETRIC_DECAY * s2)
}

/// Suprema of `f` over consecutive decades covering `[lo, hi]`.
fn decade_sups<F>(f: F, lo: f64, hi: f64) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64>,
{
    let decades = (hi / lo).log10().ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(decades);
    for j in 0..decades {
        let a = lo * 10f64.powi(j as i32);
        let b = (a * 10.0).min(hi);
        let mut sup = f64::NEG_INFINITY;
        for y in log_grid(a, b.max(a * (1.0 + 1e-12)), SAMPLES_PER_DECADE) {
            sup = sup.max(f(y)?.abs());
        }
        out.push(sup);
    }
    Ok(out)
}

/// Which of the two series a [`SeriesSolution`] sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SeriesKind {
    I,
    II,
}

/// A lazily evaluated series solution.
#[derive(Debug)]
pub struct SeriesSolution {
    base: MarginalFn,
    a: f64,
    b: f64,
    c: f64,
    kind: SeriesKind,
    tol: f64,
    max_terms: usize,
}

/// One series evaluation with its truncation data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesEval {
    pub value: f64,
    /// Number of terms summed.
    pub terms: usize,
    /// Magnitude (in units of `I1`) of the first term left out.
    pub first_omitted: f64,
}

impl SeriesSolution {
    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn base(&self) -> &MarginalFn {
        &self.base
    }

    pub fn eval(&self, y: f64) -> Result<f64> {
        Ok(self.eval_detail(y)?.value)
    }

    /// Sums the series at `y`, checking at every step that term magnitudes
    /// strictly decrease.
    pub fn eval_detail(&self, y: f64) -> Result<SeriesEval> {
        let (prefactor, ratio, weight_step, mut arg) = match self.kind {
            SeriesKind::I => ((1.0 + self.b) / self.b, self.a, 1.0 / self.b, self.c * y),
            SeriesKind::II => (1.0 + self.b, 1.0 / self.a, self.b, self.c * y / self.a),
        };
        let mut weight = 1.0;
        let mut sum = 0.0_f64;
        let mut prev = f64::INFINITY;
        for m in 0..self.max_terms {
            let term = if arg.is_infinite() {
                0.0
            } else if arg == 0.0 {
                return Err(Error::DivergenceDetected { y, terms: m });
            } else {
                weight * self.base.eval(arg)?
            };
            if !term.is_finite() {
                return Err(Error::DivergenceDetected { y, terms: m });
            }
            if m > 0 && (term == 0.0 || term < self.tol * sum.abs()) {
                return Ok(SeriesEval {
                    value: prefactor * sum,
                    terms: m,
                    first_omitted: prefactor * term,
                });
            }
            if term >= prev {
                return Err(Error::DivergenceDetected { y, terms: m });
            }
            sum += if m % 2 == 0 { term } else { -term };
            prev = term;
            arg *= ratio;
            weight *= weight_step;
        }
        Err(Error::DivergenceDetected {
            y,
            terms: self.max_terms,
        })
    }
}

impl SeriesSolution {
    /// `∫_{y0}^{y1} I1`, integrating the series term by term. Each term is
    /// `w_m ∫ I0(λ_m y) dy = (w_m / λ_m) ∫_{λ_m y0}^{λ_m y1} I0`.
    pub fn integral(&self, y0: f64, y1: f64) -> Result<f64> {
        let (prefactor, ratio, weight_step, mut scale) = match self.kind {
            SeriesKind::I => ((1.0 + self.b) / self.b, self.a, 1.0 / self.b, self.c),
            SeriesKind::II => (1.0 + self.b, 1.0 / self.a, self.b, self.c / self.a),
        };
        let mut weight = 1.0;
        let mut sum = 0.0_f64;
        for m in 0..self.max_terms {
            let (lo, hi) = (scale * y0, scale * y1);
            let term = if lo.is_infinite() || hi.is_infinite() {
                0.0
            } else if lo == 0.0 || hi == 0.0 {
                return Err(Error::DivergenceDetected { y: y0, terms: m });
            } else {
                weight / scale * self.base.integral(lo, hi)?
            };
            if !term.is_finite() {
                return Err(Error::DivergenceDetected { y: y0, terms: m });
            }
            if m > 0 && (term == 0.0 || term.abs() < self.tol * sum.abs()) {
                return Ok(prefactor * sum);
            }
            sum += if m % 2 == 0 { term } else { -term };
            scale *= ratio;
            weight *= weight_step;
        }
        Err(Error::DivergenceDetected {
            y: y0,
            terms: self.max_terms,
        })
    }
}

fn series(
    i0: &MarginalFn,
    params: &PeriodParams,
    cfg: &SolverConfig,
    kind: SeriesKind,
) -> Result<MarginalFn> {
    let sol = SeriesSolution {
        base: i0.clone(),
        a: params.a,
        b: params.b,
        c: params.c,
        kind,
        tol: cfg.tol_series,
        max_terms: cfg.max_series_terms,
    };
    // Probe the grid ends so a misapplied branch fails here, not mid-run.
    for y in [cfg.y_min, 1.0, cfg.y_max] {
        sol.eval(y)?;
    }
    Ok(MarginalFn::Series(Arc::new(sol)))
}

/// Series (I): valid when `Phi0` increases and `Psi0` vanishes at the end
/// matching `a`.
pub fn solve_series_i(
    i0: &MarginalFn,
    params: &PeriodParams,
    cfg: &SolverConfig,
) -> Result<MarginalFn> {
    series(i0, params, cfg, SeriesKind::I)
}

/// Series (II): valid when `Phi0` decreases and `Psi0` vanishes at the
/// opposite end.
pub fn solve_series_ii(
    i0: &MarginalFn,
    params: &PeriodParams,
    cfg: &SolverConfig,
) -> Result<MarginalFn> {
    series(i0, params, cfg, SeriesKind::II)
}

/// The closed-form multiplier for a power input `y^(-theta)`:
/// `(1 + b) / (c^theta (a^(-theta) + b))`.
pub fn power_delta(theta: f64, params: &PeriodParams) -> f64 {
    (1.0 + params.b) / (params.c.powf(theta) * (params.a.powf(-theta) + params.b))
}

fn power_closed_form(theta: f64, scale: f64, params: &PeriodParams) -> Result<MarginalFn> {
    let k = params.log_a_b();
    if !params.is_trivial() && (theta + k).abs() < PATHOLOGICAL_TOL {
        return Err(Error::PathologicalTheta {
            theta,
            critical: -k,
        });
    }
    MarginalFn::scaled_power(theta, scale * power_delta(theta, params))
}

/// Closed-form solution `delta * y^(-theta)` for the power input `y^(-theta)`.
pub fn solve_power(theta: f64, params: &PeriodParams) -> Result<MarginalFn> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::InvalidTheta { theta });
    }
    if theta == 1.0 {
        return Err(Error::ThetaOne);
    }
    power_closed_form(theta, 1.0, params)
}

/// How [`solve`] produced its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveMethod {
    Identity,
    ClosedForm,
    SeriesI,
    SeriesII,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::Identity => "identity",
            SolveMethod::ClosedForm => "closed-form",
            SolveMethod::SeriesI => "series-i",
            SolveMethod::SeriesII => "series-ii",
        })
    }
}

/// Solution of one period's functional equation.
#[derive(Debug, Clone)]
pub struct Solution {
    pub marginal: MarginalFn,
    pub method: SolveMethod,
    pub report: ConditionReport,
}

/// Classifies and dispatches: identity when `p = q`, the closed form for
/// power inputs (except `theta = 1`, which goes through the series), the
/// matching series otherwise.
pub fn solve(i0: &MarginalFn, params: &PeriodParams, cfg: &SolverConfig) -> Result<Solution> {
    let report = classify(i0, params, cfg)?;
    let power = i0.as_power();
    let (marginal, method) = match (report.branch, power) {
        (Branch::TrivialAEq1, _) => (i0.clone(), SolveMethod::Identity),
        (Branch::Unsolvable, _) => {
            return Err(Error::NoConstructiveBranch {
                phi: report.phi_direction.to_string(),
                branch: report.branch.to_string(),
            })
        }
        (Branch::PowerClosedForm, Some((theta, scale))) => (
            power_closed_form(theta, scale, params)?,
            SolveMethod::ClosedForm,
        ),
        (_, Some((theta, scale))) if theta != 1.0 => (
            power_closed_form(theta, scale, params)?,
            SolveMethod::ClosedForm,
        ),
        (Branch::SeriesI, _) => (solve_series_i(i0, params, cfg)?, SolveMethod::SeriesI),
        (Branch::SeriesII, _) => (solve_series_ii(i0, params, cfg)?, SolveMethod::SeriesII),
        (Branch::PowerClosedForm, None) => {
            unreachable!("closed-form branch requires a power input")
        }
    };
    Ok(Solution {
        marginal,
        method,
        report,
    })
}

/// `I1(a y) + b I1(y) - (1 + b) I0(c y)`.
pub fn residual(i1: &MarginalFn, i0: &MarginalFn, params: &PeriodParams, y: f64) -> Result<f64> {
    Ok(i1.eval(params.a * y)? + params.b * i1.eval(y)?
        - (1.0 + params.b) * i0.eval(params.c * y)?)
}

/// [`residual`] divided by `(1 + b) I0(c y)`.
pub fn relative_residual(
    i1: &MarginalFn,
    i0: &MarginalFn,
    params: &PeriodParams,
    y: f64,
) -> Result<f64> {
    Ok(residual(i1, i0, params, y)? / ((1.0 + params.b) * i0.eval(params.c * y)?))
}

/// Two distinct inverse marginals solving the same equation.
#[derive(Debug, Clone)]
pub struct NonUniquePair {
    /// The power input `y^(log_a b)` both functions solve against.
    pub input: MarginalFn,
    /// `delta * y^(log_a b)`.
    pub principal: MarginalFn,
    /// `y^(log_a b) (delta + M sin(pi ln y / ln a))`.
    pub perturbed: MarginalFn,
    pub delta: f64,
    /// Amplitude `M` actually used.
    pub amplitude: f64,
    /// Strict upper bound on `sup(|Theta|, |Theta'|)`.
    pub amplitude_bound: f64,
    pub log_a_b: f64,
}

impl NonUniquePair {
    pub fn oscillation(&self) -> LogPeriodic {
        match &self.perturbed {
            MarginalFn::LogPeriodic(l) => *l,
            _ => unreachable!("perturbed member is always log-periodic"),
        }
    }
}

/// Builds the counterexample to uniqueness for the input `y^(log_a b)`.
///
/// The amplitude is half the bound; if `|Theta'| = M pi / |ln a|` would then
/// reach the bound it is shrunk so that the derivative also stays below half
/// of it, which keeps the perturbed function strictly decreasing.
pub fn make_nonunique_pair(params: &PeriodParams) -> Result<NonUniquePair> {
    let k = params.log_a_b();
    if !(k.is_finite() && k < 0.0) {
        return Err(Error::WrongSignRegime { log_a_b: k });
    }
    let b = params.b;
    let delta = (1.0 + b) / (2.0 * b * params.c.powf(-k));
    let bound = delta * (-k) / (1.0 - k);
    let log_period = params.a.ln();
    let freq = PI / log_period.abs();
    let mut amplitude = 0.5 * bound;
    if amplitude * freq >= bound {
        amplitude = 0.5 * bound / freq;
    }
    Ok(NonUniquePair {
        input: MarginalFn::power(-k)?,
        principal: MarginalFn::scaled_power(-k, delta)?,
        perturbed: MarginalFn::LogPeriodic(LogPeriodic {
            exponent: k,
            delta,
            amplitude,
            log_period,
        }),
        delta,
        amplitude,
        amplitude_bound: bound,
        log_a_b: k,
    })
}

/// Sampled proxies for the two uniqueness conditions on `y^(-log_a b) I(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniquenessProbe {
    /// Supremum over the lowest decade of the grid.
    pub at_zero: f64,
    /// Supremum over the highest decade of the grid.
    pub at_infinity: f64,
    pub vanishes_at_zero: bool,
    pub vanishes_at_infinity: bool,
}

impl UniquenessProbe {
    /// At least one of the two limits is zero.
    pub fn either(&self) -> bool {
        self.vanishes_at_zero || self.vanishes_at_infinity
    }
}

/// Evaluates the uniqueness proxies with the same decade criterion that
/// [`classify`] applies to `Psi0`.
pub fn uniqueness_limit(
    i: &MarginalFn,
    params: &PeriodParams,
    cfg: &SolverConfig,
) -> Result<UniquenessProbe> {
    let k = params.log_a_b();
    let s = decade_sups(|y| Ok(y.powf(-k) * i.eval(y)?), cfg.y_min, cfg.y_max)?;
    let n = s.len();
    Ok(UniquenessProbe {
        at_zero: s[0],
        at_infinity: s[n - 1],
        vanishes_at_zero: n >= 3 && vanishes(s[0], s[1], s[2], cfg.limit_eps),
        vanishes_at_infinity: n >= 3 && vanishes(s[n - 1], s[n - 2], s[n - 3], cfg.limit_eps),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::Tabulated;
    use approx::assert_relative_eq;

    // 3 / (0.36 * 11), from the closed-form multiplier at theta = 2.
    const DELTA: f64 = 0.757_575_757_575_757_6;

    fn fixture() -> PeriodParams {
        PeriodParams::derive(1.2, 0.9, 0.6).unwrap()
    }

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn fixture_classifies_as_series_ii() {
        let r = classify(&MarginalFn::power(2.0).unwrap(), &fixture(), &cfg()).unwrap();
        assert_eq!(r.phi_direction, PhiDirection::StrictlyDecreasing);
        assert!(r.psi_vanishes_at_infinity);
        assert_eq!(r.branch, Branch::SeriesII);
    }

    #[test]
    fn risk_neutral_classifies_trivial() {
        let m = PeriodParams::derive(1.2, 0.9, 1.0 / 3.0).unwrap();
        let r = classify(&MarginalFn::power(2.0).unwrap(), &m, &cfg()).unwrap();
        assert_eq!(r.branch, Branch::TrivialAEq1);
    }

    #[test]
    fn pathological_theta_rejected() {
        let m = PeriodParams::derive(1.1, 0.5, 0.2).unwrap();
        let theta = -m.log_a_b();
        let err = classify(&MarginalFn::power(theta).unwrap(), &m, &cfg()).unwrap_err();
        assert!(matches!(err, Error::PathologicalTheta { .. }));
        assert!(matches!(
            solve_power(theta, &m),
            Err(Error::PathologicalTheta { .. })
        ));
    }

    #[test]
    fn solve_power_fixture_delta() {
        let i1 = solve_power(2.0, &fixture()).unwrap();
        let (theta, scale) = i1.as_power().unwrap();
        assert_eq!(theta, 2.0);
        assert_relative_eq!(scale, DELTA, max_relative = 1e-14);
        for y in log_grid(1e-4, 1e4, 50) {
            let r =
                relative_residual(&i1, &MarginalFn::power(2.0).unwrap(), &fixture(), y).unwrap();
            assert!(r.abs() < 1e-12, "{y}: {r}");
        }
    }

    #[test]
    fn solve_power_trivial_is_identity_scale() {
        let m = PeriodParams::derive(1.2, 0.9, 1.0 / 3.0).unwrap();
        let (_, scale) = solve_power(2.0, &m).unwrap().as_power().unwrap();
        assert_relative_eq!(scale, 1.0, max_relative = 1e-12);
        assert!(matches!(solve_power(1.0, &m), Err(Error::ThetaOne)));
    }

    #[test]
    fn series_integral_matches_closed_form() {
        let m = fixture();
        let i1 = solve_series_ii(&MarginalFn::power(2.0).unwrap(), &m, &cfg()).unwrap();
        let closed = MarginalFn::scaled_power(2.0, DELTA).unwrap();
        for (y0, y1) in [(0.3, 0.31), (0.1, 10.0), (1e-3, 2.0)] {
            let a = i1.integral(y0, y1).unwrap();
            let b = closed.integral(y0, y1).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-11);
        }
        // Nested: a series whose base is a series.
        let t = Tabulated::from_fn(|y| y.powf(-3.0), 1e-9, 1e9, 300).unwrap();
        let i1 = solve_series_ii(&MarginalFn::tabulated(t), &m, &cfg()).unwrap();
        let i2 = solve_series_ii(&i1, &m, &cfg()).unwrap();
        let q = crate::numeric::integrate(
            |t: f64| Ok::<_, Error>(i2.eval(t.exp())? * t.exp()),
            0.2f64.ln(),
            5f64.ln(),
            1e-13,
            0.0,
            100_000,
        )
        .unwrap();
        assert_relative_eq!(
            i2.integral(0.2, 5.0).unwrap(),
            q.value,
            max_relative = 1e-10
        );
    }

    #[test]
    fn series_ii_matches_closed_form() {
        let i0 = MarginalFn::power(2.0).unwrap();
        let s = solve_series_ii(&i0, &fixture(), &cfg()).unwrap();
        for y in log_grid(1e-4, 1e4, 100) {
            assert_relative_eq!(s.eval(y).unwrap(), DELTA * y.powi(-2), max_relative = 1e-10);
            assert!(relative_residual(&s, &i0, &fixture(), y).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn series_truncation_bounded_by_first_omitted_term() {
        let i0 = MarginalFn::power(2.0).unwrap();
        let MarginalFn::Series(s) = solve_series_ii(&i0, &fixture(), &cfg()).unwrap() else {
            panic!("expected series");
        };
        for y in [1e-3, 0.7, 42.0] {
            let e = s.eval_detail(y).unwrap();
            let exact = DELTA * y.powi(-2);
            assert!((e.value - exact).abs() <= e.first_omitted + 4.0 * f64::EPSILON * exact);
            assert!(e.terms > 1);
        }
    }

    #[test]
    fn series_i_branch_for_a_above_one() {
        // a = 20 > 1 and theta = 2 > -log_a b: Phi0 increasing, series (I).
        let m = PeriodParams::derive(1.1, 0.5, 0.2).unwrap();
        let i0 = MarginalFn::power(2.0).unwrap();
        let r = classify(&i0, &m, &cfg()).unwrap();
        assert_eq!(r.phi_direction, PhiDirection::StrictlyIncreasing);
        assert_eq!(r.branch, Branch::SeriesI);
        let s = solve_series_i(&i0, &m, &cfg()).unwrap();
        let delta = power_delta(2.0, &m);
        for y in log_grid(1e-4, 1e4, 100) {
            assert_relative_eq!(s.eval(y).unwrap(), delta * y.powi(-2), max_relative = 1e-10);
        }
    }

    #[test]
    fn wrong_series_diverges() {
        let i0 = MarginalFn::power(2.0).unwrap();
        let err = solve_series_i(&i0, &fixture(), &cfg()).unwrap_err();
        assert!(matches!(err, Error::DivergenceDetected { .. }), "{err:?}");
    }

    #[test]
    fn log_utility_goes_through_series() {
        let i0 = MarginalFn::power(1.0).unwrap();
        let sol = solve(&i0, &fixture(), &cfg()).unwrap();
        assert_eq!(sol.method, SolveMethod::SeriesII);
        let delta = power_delta(1.0, &fixture());
        assert_relative_eq!(
            sol.marginal.eval(3.0).unwrap(),
            delta / 3.0,
            max_relative = 1e-10
        );
    }

    #[test]
    fn dispatch() {
        let i0 = MarginalFn::power(2.0).unwrap();
        let sol = solve(&i0, &fixture(), &cfg()).unwrap();
        assert_eq!(sol.method, SolveMethod::ClosedForm);
        assert_eq!(sol.report.branch, Branch::SeriesII);
        let m = PeriodParams::derive(1.2, 0.9, 1.0 / 3.0).unwrap();
        let sol = solve(&i0, &m, &cfg()).unwrap();
        assert_eq!(sol.method, SolveMethod::Identity);
        assert_eq!(sol.marginal.as_power(), Some((2.0, 1.0)));
    }

    #[test]
    fn non_monotone_phi_is_unsolvable() {
        // Two powers on either side of -log_a b: Phi0 falls, then rises near y = 15.
        let m = fixture();
        let t = Tabulated::from_fn(|y| y.powf(-0.3) + y.powf(-3.0), 1e-10, 1e10, 600).unwrap();
        let i0 = MarginalFn::tabulated(t);
        let r = classify(&i0, &m, &cfg()).unwrap();
        assert_eq!(r.phi_direction, PhiDirection::NonMonotone);
        assert_eq!(r.branch, Branch::Unsolvable);
        assert!(matches!(
            solve(&i0, &m, &cfg()),
            Err(Error::NoConstructiveBranch { .. })
        ));
    }

    #[test]
    fn residual_negative_control() {
        let i0 = MarginalFn::power(2.0).unwrap();
        let r = relative_residual(&i0, &i0, &fixture(), 1.0).unwrap();
        assert!(r.abs() > 1e-3);
    }

    #[test]
    fn nonunique_pair_values() {
        let m = PeriodParams::derive(1.1, 0.5, 0.2).unwrap();
        let pair = make_nonunique_pair(&m).unwrap();
        assert!((pair.log_a_b + 0.537_243_573_680_481_7).abs() < 1e-12);
        assert!((pair.delta - 1.291_602_205_142_817).abs() < 1e-12);
        assert!((pair.amplitude_bound - 0.451_395_599_464_543_2).abs() < 1e-12);
        assert!((pair.amplitude - 0.225_697_799_732_271_6).abs() < 1e-12);
        let osc = pair.oscillation();
        for z in [-3.0, -0.4, 0.0, 1.3, 7.9] {
            assert!((osc.theta(z + m.a.ln()) + osc.theta(z)).abs() < 1e-12);
        }
        for y in log_grid(1e-4, 1e4, 60) {
            assert!(
                relative_residual(&pair.principal, &pair.input, &m, y)
                    .unwrap()
                    .abs()
                    < 1e-12
            );
            assert!(
                relative_residual(&pair.perturbed, &pair.input, &m, y)
                    .unwrap()
                    .abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn nonunique_requires_negative_log() {
        // a < 1 and b < 1 give log_a b > 0.
        let m = PeriodParams::derive(1.1, 0.5, 0.9).unwrap();
        assert!(m.a < 1.0 && m.b < 1.0);
        assert!(matches!(
            make_nonunique_pair(&m),
            Err(Error::WrongSignRegime { .. })
        ));
    }

    #[test]
    fn amplitude_shrinks_when_oscillation_is_fast() {
        // a slightly below 1 with b = 2 makes pi / |ln a| large.
        let m = PeriodParams::derive(1.2, 0.9, 0.35).unwrap();
        assert!(m.log_a_b() < 0.0);
        let pair = make_nonunique_pair(&m).unwrap();
        let freq = PI / m.a.ln().abs();
        assert!(freq > 1.0);
        assert!(pair.amplitude * freq < pair.amplitude_bound);
        assert!(pair.amplitude < pair.amplitude_bound);
    }

    #[test]
    fn tabulated_critical_input_rejected() {
        let m = PeriodParams::derive(1.1, 0.5, 0.2).unwrap();
        let theta = -m.log_a_b();
        let t = Tabulated::from_fn(|y| y.powf(-theta), 1e-12, 1e12, 512).unwrap();
        match classify(&MarginalFn::tabulated(t), &m, &cfg()) {
            Err(Error::PathologicalTheta {
                theta: est,
                critical,
            }) => {
                assert_relative_eq!(est, theta, max_relative = 1e-9);
                assert_relative_eq!(critical, theta, max_relative = 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uniqueness_limits() {
        let m = fixture();
        let c = SolverConfig {
            y_min: 1e-4,
            y_max: 1e4,
            ..cfg()
        };
        let i1 = solve_power(2.0, &m).unwrap();
        let probe = uniqueness_limit(&i1, &m, &c).unwrap();
        assert!(probe.at_infinity < 1e-4);
        assert!(probe.vanishes_at_infinity && !probe.vanishes_at_zero);

        let k = m.log_a_b();
        let flat = MarginalFn::scaled_power(-k, 0.01).unwrap();
        let probe = uniqueness_limit(&flat, &m, &c).unwrap();
        assert_relative_eq!(probe.at_zero, 0.01, max_relative = 1e-9);
        assert_relative_eq!(probe.at_infinity, 0.01, max_relative = 1e-9);
        assert!(!probe.either());
    }
}
