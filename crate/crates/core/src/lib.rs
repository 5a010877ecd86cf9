//! Forward performance processes in a binomial market.
//!
//! Each period the investor's utility for the end of the period is chosen so
//! that the optimal expected utility reproduces the utility at the start of
//! the period. In inverse-marginal form this reduces to a linear functional
//! equation, solved here by alternating series, with a closed form for power
//! utilities.
//!
//! ```
//! use forward_perf::{funceq, market::PeriodParams, marginal::MarginalFn, SolverConfig};
//!
//! let params = PeriodParams::derive(1.2, 0.9, 0.6)?;
//! let sol = funceq::solve(&MarginalFn::power(2.0)?, &params, &SolverConfig::default())?;
//! let (_, delta) = sol.marginal.as_power().unwrap();
//! assert!((delta - 0.757_575_757_575_757_6).abs() < 1e-12);
//! # Ok::<(), forward_perf::Error>(())
//! ```

pub mod cli;
pub mod config;
pub mod error;
pub mod forward;
pub mod funceq;
pub mod io;
pub mod marginal;
pub mod market;
pub mod numeric;
pub mod oracle;
pub mod utility;
pub mod verify;

pub use config::SolverConfig;
pub use error::{Error, Result};
pub use forward::{run, step, ForwardStep, InitialUtility, PeriodInput, Run, Scenario};
pub use funceq::{classify, solve, Branch, ConditionReport, SolveMethod};
pub use marginal::{MarginalFn, Tabulated};
pub use market::{Outcome, PeriodParams};
pub use oracle::{maximize, verify_pair, OracleResult};
pub use utility::{reconstruct, UtilityFn};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/market.md")]
    mod market {}
    #[doc = include_str!("../../../book/src/marginal.md")]
    mod marginal {}
    #[doc = include_str!("../../../book/src/equation.md")]
    mod equation {}
    #[doc = include_str!("../../../book/src/utility.md")]
    mod utility {}
    #[doc = include_str!("../../../book/src/forward.md")]
    mod forward {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
