//! Period-by-period construction of the forward performance process.
//!
//! At the start of each period the parameters `(u, d, p)` for that period are
//! fixed, the functional equation is solved for the next inverse marginal,
//! and the next utility is rebuilt from it. The optimal allocation at the
//! current wealth follows from the two state-contingent optimal wealths:
//!
//! ```text
//! X^u(x) = I_{n+1}(ρu U_n'(x)),   X^d(x) = I_{n+1}(ρd U_n'(x)),   π* = (X^u - X^d) / (u - d)
//! ```
//!
//! `U_{n+1}` depends only on `U_n` and the period parameters, never on the
//! realized outcome.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::funceq::{solve, ConditionReport, SolveMethod};
use crate::marginal::{MarginalFn, Tabulated};
use crate::market::{Outcome, PeriodParams};
use crate::utility::{reconstruct, UtilityFn};

/// How the initial utility is specified in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialUtility {
    Power {
        theta: f64,
    },
    Log,
    /// Inverse marginal read from a `y,I` CSV, anchored at `U(1) = anchor_value`.
    Tabulated {
        file: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        anchor_value: Option<f64>,
    },
}

impl InitialUtility {
    /// Builds `U_0`. Relative tabulation paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path, cfg: &SolverConfig) -> Result<UtilityFn> {
        match self {
            InitialUtility::Power { theta } => Ok(UtilityFn::power(*theta)?.with_config(*cfg)),
            InitialUtility::Log => Ok(UtilityFn::log().with_config(*cfg)),
            InitialUtility::Tabulated { file, anchor_value } => {
                let path = if file.is_absolute() {
                    file.clone()
                } else {
                    base_dir.join(file)
                };
                let table = Tabulated::load(&path)?;
                UtilityFn::new(
                    MarginalFn::tabulated(table),
                    1.0,
                    anchor_value.unwrap_or(0.0),
                    *cfg,
                )
            }
        }
    }
}

/// One period as written in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodInput {
    pub u: f64,
    pub d: f64,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realized: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub initial_utility: InitialUtility,
    pub initial_wealth: f64,
    #[serde(default)]
    pub periods: Vec<PeriodInput>,
}

impl Scenario {
    /// Checks every period against the market constraints and that realized
    /// outcomes form a prefix. Returns the derived parameters.
    pub fn validate(&self) -> Result<Vec<PeriodParams>> {
        if !(self.initial_wealth.is_finite() && self.initial_wealth > 0.0) {
            return Err(Error::Validation(format!(
                "initial_wealth must be positive, got {}",
                self.initial_wealth
            )));
        }
        match &self.initial_utility {
            InitialUtility::Power { theta }
                if !(theta.is_finite() && *theta > 0.0) || *theta == 1.0 =>
            {
                return Err(Error::Validation(format!(
                    "initial_utility: power theta must be positive and != 1 (use kind \"log\"), got {theta}"
                )));
            }
            InitialUtility::Tabulated {
                anchor_value: Some(v),
                ..
            } if !v.is_finite() => {
                return Err(Error::Validation(
                    "initial_utility: anchor_value must be finite".into(),
                ));
            }
            _ => {}
        }
        let mut seen_unrealized = false;
        let mut out = Vec::with_capacity(self.periods.len());
        for (i, period) in self.periods.iter().enumerate() {
            let n = i + 1;
            let params = PeriodParams::derive(period.u, period.d, period.p)
                .map_err(|e| Error::Validation(format!("period {n}: {e}")))?;
            match period.realized {
                None => seen_unrealized = true,
                Some(_) if seen_unrealized => {
                    return Err(Error::Validation(format!(
                        "period {n}: realized outcome after an unrealized period"
                    )));
                }
                Some(_) => {}
            }
            out.push(params);
        }
        Ok(out)
    }
}

/// One solved period.
#[derive(Debug, Clone)]
pub struct ForwardStep {
    /// 1-based period number `n + 1`.
    pub index: usize,
    pub params: PeriodParams,
    pub method: SolveMethod,
    pub report: ConditionReport,
    /// `I_{n+1}`.
    pub inv_marginal: MarginalFn,
    /// `U_{n+1}`.
    pub utility: UtilityFn,
    /// `U_n`.
    pub prev_utility: UtilityFn,
    /// Wealth `X_n*` at the start of the period, when known.
    pub wealth: Option<f64>,
    /// `π*` at `wealth`.
    pub allocation: Option<f64>,
    pub wealth_up: Option<f64>,
    pub wealth_down: Option<f64>,
    pub outcome: Option<Outcome>,
    /// `X_{n+1}* = X_n* + π*(R - 1)`.
    pub realized_wealth: Option<f64>,
}

impl ForwardStep {
    /// `X^u(x) = I_{n+1}(ρu U_n'(x))`.
    pub fn wealth_up_fn(&self, x: f64) -> Result<f64> {
        self.inv_marginal
            .eval(self.params.rho_u * self.prev_utility.marginal(x)?)
    }

    /// `X^d(x) = I_{n+1}(ρd U_n'(x))`.
    pub fn wealth_down_fn(&self, x: f64) -> Result<f64> {
        self.inv_marginal
            .eval(self.params.rho_d * self.prev_utility.marginal(x)?)
    }

    /// `π*(x)`.
    pub fn allocation_fn(&self, x: f64) -> Result<f64> {
        let y = self.prev_utility.marginal(x)?;
        let up = self.inv_marginal.eval(self.params.rho_u * y)?;
        let down = self.inv_marginal.eval(self.params.rho_d * y)?;
        Ok((up - down) / (self.params.u - self.params.d))
    }
}

/// Solves one period without a wealth level: policy functions only.
pub fn solve_period(u_n: &UtilityFn, params: &PeriodParams, index: usize) -> Result<ForwardStep> {
    let sol = solve(u_n.inv_marginal(), params, u_n.config())?;
    let utility = reconstruct(&sol.marginal, u_n, params)?;
    Ok(ForwardStep {
        index,
        params: *params,
        method: sol.method,
        report: sol.report,
        inv_marginal: sol.marginal,
        utility,
        prev_utility: u_n.clone(),
        wealth: None,
        allocation: None,
        wealth_up: None,
        wealth_down: None,
        outcome: None,
        realized_wealth: None,
    })
}

/// Solves one period at wealth `x_n` and, if the outcome is given, moves the
/// wealth forward.
pub fn step(
    u_n: &UtilityFn,
    params: &PeriodParams,
    x_n: f64,
    outcome: Option<Outcome>,
) -> Result<ForwardStep> {
    if !(x_n.is_finite() && x_n > 0.0) {
        return Err(Error::NonpositiveWealth { x: x_n });
    }
    let mut s = solve_period(u_n, params, 1)?;
    apply_wealth(&mut s, x_n, outcome)?;
    Ok(s)
}

fn apply_wealth(s: &mut ForwardStep, x: f64, outcome: Option<Outcome>) -> Result<()> {
    let up = s.wealth_up_fn(x)?;
    let down = s.wealth_down_fn(x)?;
    let pi = (up - down) / (s.params.u - s.params.d);
    let range = s.params.admissible_range(x)?;
    if !range.contains(pi, 1e-9 * x) {
        return Err(Error::AdmissibilityViolation {
            pi,
            lo: range.lo,
            hi: range.hi,
        });
    }
    s.wealth = Some(x);
    s.allocation = Some(pi);
    s.wealth_up = Some(up);
    s.wealth_down = Some(down);
    s.outcome = outcome;
    s.realized_wealth = outcome.map(|o| x + pi * (s.params.gross_return(o) - 1.0));
    Ok(())
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct Run {
    pub initial_utility: UtilityFn,
    pub initial_wealth: f64,
    pub steps: Vec<ForwardStep>,
}

impl Run {
    /// `U_n` for `n = 0..=steps.len()`.
    pub fn utilities(&self) -> impl Iterator<Item = &UtilityFn> {
        std::iter::once(&self.initial_utility).chain(self.steps.iter().map(|s| &s.utility))
    }

    /// Realized wealth path `X_0*, X_1*, ...` as far as outcomes are known.
    pub fn wealth_path(&self) -> Vec<f64> {
        let mut path = vec![self.initial_wealth];
        path.extend(self.steps.iter().map_while(|s| s.realized_wealth));
        path
    }
}

/// Runs a scenario whose initial utility is already built.
pub fn run_with(
    initial: UtilityFn,
    initial_wealth: f64,
    periods: &[(PeriodParams, Option<Outcome>)],
) -> Result<Run> {
    let mut steps: Vec<ForwardStep> = Vec::with_capacity(periods.len());
    let mut wealth = Some(initial_wealth);
    for (i, (params, outcome)) in periods.iter().enumerate() {
        let index = i + 1;
        let u_n = steps.last().map(|s| &s.utility).unwrap_or(&initial);
        let wrap = |e| Error::Step {
            index,
            source: Box::new(e),
        };
        let mut s = solve_period(u_n, params, index).map_err(wrap)?;
        if let Some(x) = wealth {
            apply_wealth(&mut s, x, *outcome).map_err(wrap)?;
        }
        wealth = s.realized_wealth;
        steps.push(s);
    }
    Ok(Run {
        initial_utility: initial,
        initial_wealth,
        steps,
    })
}

/// Validates and runs a scenario. Relative file references resolve against
/// `base_dir`.
pub fn run(scenario: &Scenario, base_dir: &Path, cfg: &SolverConfig) -> Result<Run> {
    cfg.validate()?;
    let params = scenario.validate()?;
    let u0 = scenario.initial_utility.build(base_dir, cfg)?;
    let periods: Vec<_> = params
        .into_iter()
        .zip(scenario.periods.iter().map(|p| p.realized))
        .collect();
    run_with(u0, scenario.initial_wealth, &periods)
}
