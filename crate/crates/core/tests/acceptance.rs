//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints one PASS/FAIL line, then exits non-zero if any failed.

#![allow(clippy::excessive_precision)]

use std::process::ExitCode;
use std::time::{Duration, Instant};

use forward_perf::forward::{run_with, step};
use forward_perf::funceq::{
    classify, make_nonunique_pair, relative_residual, solve, solve_series_ii, uniqueness_limit,
    Branch, SolveMethod,
};
use forward_perf::marginal::{MarginalFn, Tabulated};
use forward_perf::market::{Outcome, PeriodParams};
use forward_perf::numeric::log_grid;
use forward_perf::oracle::{maximize, objective};
use forward_perf::utility::{reconstruct, UtilityFn};
use forward_perf::verify::{budget_gap, martingale_gap, verify_run};
use forward_perf::{Error, SolverConfig};

// Reference values, computed independently in 50-digit arithmetic.
const DELTA: f64 = 0.757_575_757_575_757_576;
const SQRT_DELTA: f64 = 0.870_388_279_778_489_191;
const PI_PER_X: f64 = 7.272_727_272_727_272_73;
const X_UP: f64 = 2.454_545_454_545_454_55;
const X_DOWN: f64 = 0.272_727_272_727_272_727;
const EX4_LOG_A_B: f64 = -0.537_243_573_680_481_651;
const EX4_DELTA: f64 = 1.291_602_205_142_817_10;
const EX4_BOUND: f64 = 0.451_395_599_464_543_158;
const EX4_AMPLITUDE: f64 = 0.225_697_799_732_271_579;

type Verdict = Result<String, String>;

fn fixture() -> PeriodParams {
    PeriodParams::derive(1.2, 0.9, 0.6).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Verdict) -> Verdict {
    let t = Instant::now();
    let r = f()?;
    let el = t.elapsed();
    ensure(el < limit, || {
        format!("{r}; took {el:.2?}, limit {limit:?}")
    })?;
    Ok(format!("{r}; {el:.2?}"))
}

fn max_residual(i1: &MarginalFn, i0: &MarginalFn, m: &PeriodParams) -> Result<f64, String> {
    let mut worst = 0.0_f64;
    for y in log_grid(1e-4, 1e4, 200) {
        worst = worst.max(
            relative_residual(i1, i0, m, y)
                .map_err(|e| e.to_string())?
                .abs(),
        );
    }
    Ok(worst)
}

fn e2s(e: Error) -> String {
    e.to_string()
}

/// Residual, closed form, oracle and martingale checks for an initial
/// utility equal to `2 sqrt(x)`, at tolerance `tol`.
fn fixture_suite(
    u0: &UtilityFn,
    tol_residual: f64,
    tol: f64,
    expect: Option<SolveMethod>,
) -> Verdict {
    let m = fixture();
    let cfg = u0.config();
    let sol = solve(u0.inv_marginal(), &m, cfg).map_err(e2s)?;
    if let Some(method) = expect {
        ensure(sol.method == method, || {
            format!("method {} instead of {method}", sol.method)
        })?;
    }
    let res = max_residual(&sol.marginal, u0.inv_marginal(), &m)?;
    ensure(res < tol_residual, || format!("residual {res:e}"))?;

    let mut d_gap = 0.0_f64;
    for y in [1e-3, 0.5, 1.0, 7.0, 1e3] {
        let ratio = sol.marginal.eval(y).map_err(e2s)? / u0.inv_marginal().eval(y).map_err(e2s)?;
        d_gap = d_gap.max(rel(ratio, DELTA));
    }
    ensure(d_gap < tol, || format!("delta gap {d_gap:e}"))?;

    let u1 = reconstruct(&sol.marginal, u0, &m).map_err(e2s)?;
    let mut u_gap = 0.0_f64;
    for x in log_grid(0.1, 10.0, 41) {
        u_gap = u_gap.max(rel(u1.value(x).map_err(e2s)?, SQRT_DELTA * 2.0 * x.sqrt()));
    }
    ensure(u_gap < tol, || format!("U1 gap {u_gap:e}"))?;

    let (mut v_gap, mut p_gap) = (0.0_f64, 0.0_f64);
    for x in [0.5, 1.0, 2.0, 5.0] {
        let r = maximize(&u1, &m, x).map_err(e2s)?;
        v_gap = v_gap.max(rel(r.value, 2.0 * x.sqrt()));
        p_gap = p_gap.max(rel(r.argmax_pi, PI_PER_X * x));
    }
    ensure(v_gap < tol && p_gap < tol, || {
        format!("oracle value gap {v_gap:e}, argmax gap {p_gap:e}")
    })?;

    let s = step(u0, &m, 1.0, None).map_err(e2s)?;
    let mart = martingale_gap(&s, 1.0).map_err(e2s)?;
    let budget = budget_gap(&s, 1.0).map_err(e2s)?;
    ensure(mart < tol && budget < tol, || {
        format!("martingale {mart:e}, budget {budget:e}")
    })?;
    Ok(format!(
        "method {}, residual {res:.1e}, delta {d_gap:.1e}, U1 {u_gap:.1e}, oracle {v_gap:.1e}/{p_gap:.1e}, martingale {mart:.1e}, budget {budget:.1e}",
        sol.method
    ))
}

fn c1() -> Verdict {
    timed(Duration::from_secs(1), || {
        let m = fixture();
        let i0 = MarginalFn::power(2.0).map_err(e2s)?;
        let sol = solve(&i0, &m, &SolverConfig::default()).map_err(e2s)?;
        let r_solve = max_residual(&sol.marginal, &i0, &m)?;
        let series = solve_series_ii(&i0, &m, &SolverConfig::default()).map_err(e2s)?;
        let r_series = max_residual(&series, &i0, &m)?;
        ensure(r_solve < 1e-8 && r_series < 1e-8, || {
            format!("residuals {r_solve:e} / {r_series:e}")
        })?;
        Ok(format!(
            "max relative residual {r_solve:.1e} ({}), {r_series:.1e} (series II)",
            sol.method
        ))
    })
}

fn c2() -> Verdict {
    let m = fixture();
    let u0 = UtilityFn::power(2.0).map_err(e2s)?;
    let series = solve_series_ii(u0.inv_marginal(), &m, u0.config()).map_err(e2s)?;
    let mut d_gap = 0.0_f64;
    for y in log_grid(1e-3, 1e3, 25) {
        d_gap = d_gap.max(rel(series.eval(y).map_err(e2s)? * y * y, DELTA));
    }
    ensure(d_gap < 1e-10, || format!("series delta gap {d_gap:e}"))?;
    let u1 = reconstruct(&series, &u0, &m).map_err(e2s)?;
    let mut u_gap = 0.0_f64;
    for x in log_grid(0.1, 10.0, 41) {
        u_gap = u_gap.max(rel(
            u1.value(x).map_err(e2s)?,
            SQRT_DELTA * u0.value(x).map_err(e2s)?,
        ));
    }
    ensure(u_gap < 1e-6, || format!("U1 / U0 gap {u_gap:e}"))?;
    Ok(format!(
        "delta gap {d_gap:.1e}, U1 vs delta^(1/2) U0 gap {u_gap:.1e}"
    ))
}

fn c3() -> Verdict {
    timed(Duration::from_secs(5), || {
        let m = fixture();
        let u0 = UtilityFn::power(2.0).map_err(e2s)?;
        let s = step(&u0, &m, 1.0, None).map_err(e2s)?;
        let (mut v_gap, mut p_gap) = (0.0_f64, 0.0_f64);
        for x in [0.5, 1.0, 2.0, 5.0] {
            let r = maximize(&s.utility, &m, x).map_err(e2s)?;
            v_gap = v_gap.max(rel(r.value, u0.value(x).map_err(e2s)?));
            p_gap = p_gap.max(rel(r.argmax_pi, PI_PER_X * x));
            let analytic = s.allocation_fn(x).map_err(e2s)?;
            p_gap = p_gap.max(rel(analytic, PI_PER_X * x));
        }
        ensure(v_gap < 1e-6 && p_gap < 1e-6, || {
            format!("value gap {v_gap:e}, argmax gap {p_gap:e}")
        })?;
        Ok(format!("value gap {v_gap:.1e}, argmax gap {p_gap:.1e}"))
    })
}

fn c4() -> Verdict {
    let m = fixture();
    let u0 = UtilityFn::power(2.0).map_err(e2s)?;
    let s = step(&u0, &m, 1.0, None).map_err(e2s)?;
    let (xu, xd) = (s.wealth_up.unwrap(), s.wealth_down.unwrap());
    ensure(rel(xu, X_UP) < 1e-12 && rel(xd, X_DOWN) < 1e-12, || {
        format!("X^u {xu}, X^d {xd}")
    })?;
    let mart =
        m.p * s.utility.value(xu).map_err(e2s)? + (1.0 - m.p) * s.utility.value(xd).map_err(e2s)?;
    let budget = m.p * m.rho_u * xu + (1.0 - m.p) * m.rho_d * xd;
    ensure((mart - 2.0).abs() < 1e-6, || {
        format!("expected U1 = {mart}")
    })?;
    ensure((budget - 1.0).abs() < 1e-9, || format!("budget = {budget}"))?;
    Ok(format!("E[U1] = {mart:.12}, E[rho X] = {budget:.15}"))
}

fn c5() -> Verdict {
    let m = fixture();
    let u0 = UtilityFn::power(2.0).map_err(e2s)?;
    let s = step(&u0, &m, 1.0, None).map_err(e2s)?;
    let mut worst = f64::NEG_INFINITY;
    let mut far_worst = f64::NEG_INFINITY;
    for x in [0.5, 1.0, 2.0, 5.0] {
        let range = m.admissible_range(x).map_err(e2s)?;
        let (lo, hi) = (range.lo + 1e-12 * x, range.hi - 1e-12 * x);
        let h = (hi - lo) / 100.0;
        let v0 = u0.value(x).map_err(e2s)?;
        let pi_star = s.allocation_fn(x).map_err(e2s)?;
        for i in 0..101 {
            let pi = lo + h * i as f64;
            let gap = objective(&s.utility, &m, x, pi).map_err(e2s)? - v0;
            worst = worst.max(gap);
            if (pi - pi_star).abs() > 2.0 * h {
                far_worst = far_worst.max(gap);
            }
        }
    }
    ensure(worst <= 1e-7, || format!("E[U1] exceeds U0 by {worst:e}"))?;
    // Away from π* the inequality is strict.
    ensure(far_worst < -1e-7, || {
        format!("near-equality away from the optimum: {far_worst:e}")
    })?;
    Ok(format!(
        "max E[U1] - U0 = {worst:.1e}; beyond two sweep steps of pi*: {far_worst:.1e}"
    ))
}

fn c6() -> Verdict {
    let m = PeriodParams::derive(1.2, 0.9, 1.0 / 3.0).unwrap();
    ensure(m.is_trivial(), || format!("a = {}", m.a))?;
    let tab = Tabulated::from_fn(|y| y.powf(-3.0), 1e-8, 1e8, 256).map_err(e2s)?;
    let inputs = vec![
        ("power 2", UtilityFn::power(2.0).map_err(e2s)?),
        ("power 0.5", UtilityFn::power(0.5).map_err(e2s)?),
        ("log", UtilityFn::log()),
        (
            "tabulated",
            UtilityFn::new(
                MarginalFn::tabulated(tab),
                1.0,
                -0.3,
                SolverConfig::default(),
            )
            .map_err(e2s)?,
        ),
    ];
    let mut worst_u = 0.0_f64;
    for (name, u0) in &inputs {
        let s = step(u0, &m, 1.7, Some(Outcome::Up)).map_err(e2s)?;
        ensure(s.method == SolveMethod::Identity, || {
            format!("{name}: method {}", s.method)
        })?;
        for y in log_grid(1e-6, 1e6, 50) {
            let (a, b) = (
                s.inv_marginal.eval(y).map_err(e2s)?,
                u0.inv_marginal().eval(y).map_err(e2s)?,
            );
            ensure(a == b, || format!("{name}: I1({y}) = {a} != {b}"))?;
        }
        let pi = s.allocation.unwrap();
        ensure(pi.abs() <= 1e-12, || format!("{name}: pi* = {pi:e}"))?;
        for x in log_grid(0.1, 10.0, 21) {
            let (a, b) = (s.utility.value(x).map_err(e2s)?, u0.value(x).map_err(e2s)?);
            worst_u = worst_u.max((a - b).abs() / b.abs().max(x * u0.marginal(x).map_err(e2s)?));
        }
    }
    ensure(worst_u < 1e-9, || format!("U1 vs U0 gap {worst_u:e}"))?;
    Ok(format!(
        "identity on 4 inputs, pi* = 0, U1 vs U0 gap {worst_u:.1e}"
    ))
}

fn c7() -> Verdict {
    let m = PeriodParams::derive(1.1, 0.5, 0.2).unwrap();
    let cfg = SolverConfig::default();
    let pair = make_nonunique_pair(&m).map_err(e2s)?;
    ensure(rel(pair.log_a_b, EX4_LOG_A_B) < 1e-12, || {
        format!("log_a b = {}", pair.log_a_b)
    })?;
    ensure(rel(pair.delta, EX4_DELTA) < 1e-12, || {
        format!("delta = {}", pair.delta)
    })?;
    ensure(rel(pair.amplitude_bound, EX4_BOUND) < 1e-12, || {
        format!("bound = {}", pair.amplitude_bound)
    })?;
    ensure(rel(pair.amplitude, EX4_AMPLITUDE) < 1e-12, || {
        format!("M = {}", pair.amplitude)
    })?;

    let r_p = max_residual(&pair.principal, &pair.input, &m)?;
    let r_q = max_residual(&pair.perturbed, &pair.input, &m)?;
    ensure(r_p < 1e-8 && r_q < 1e-8, || {
        format!("residuals {r_p:e} / {r_q:e}")
    })?;
    for (name, f) in [
        ("principal", &pair.principal),
        ("perturbed", &pair.perturbed),
    ] {
        let rep = f.check_inada(cfg.inada_y_min, cfg.inada_y_max, 4001);
        ensure(rep.passes(cfg.inada_eps), || {
            format!("{name} fails inverse-marginal checks: {rep:?}")
        })?;
    }
    let mut spread = 0.0_f64;
    for y in log_grid(1e-2, 1e2, 101) {
        spread = spread.max(rel(
            pair.perturbed.eval(y).map_err(e2s)?,
            pair.principal.eval(y).map_err(e2s)?,
        ));
    }
    ensure(spread > 0.1, || {
        format!("solutions barely differ: {spread:e}")
    })?;
    let probe = uniqueness_limit(&pair.perturbed, &m, &cfg).map_err(e2s)?;
    ensure(
        !probe.vanishes_at_zero && !probe.vanishes_at_infinity,
        || format!("perturbed probe {probe:?}"),
    )?;
    Ok(format!(
        "residuals {r_p:.1e} / {r_q:.1e}, both inverse marginals, max relative spread {spread:.3}, perturbed sup near 0 {:.4}, near inf {:.4}",
        probe.at_zero, probe.at_infinity
    ))
}

fn c8() -> Verdict {
    timed(Duration::from_secs(10), || {
        let m = fixture();
        let periods = [
            (m, Some(Outcome::Up)),
            (m, Some(Outcome::Up)),
            (m, Some(Outcome::Down)),
        ];
        let run = run_with(UtilityFn::power(2.0).map_err(e2s)?, 1.0, &periods).map_err(e2s)?;
        let rep = verify_run(&run);
        ensure(rep.passed(), || rep.table())?;
        ensure(
            rep.checks.iter().any(|c| c.name == "power-preservation"),
            || "power check missing".into(),
        )?;
        // X1 = 27/11, X2 = X1^2, X3 = X2 * 3/11.
        let expect = [1.0, 27.0 / 11.0, 729.0 / 121.0, 2187.0 / 1331.0];
        let path = run.wealth_path();
        ensure(path.len() == 4, || format!("path {path:?}"))?;
        let mut p_gap = 0.0_f64;
        for (a, b) in path.iter().zip(expect) {
            p_gap = p_gap.max(rel(*a, b));
        }
        ensure(p_gap < 1e-12, || format!("wealth path {path:?}"))?;
        let mut r_gap = 0.0_f64;
        for (n, u) in run.utilities().enumerate() {
            for x in log_grid(0.1, 10.0, 21) {
                r_gap = r_gap.max(rel(
                    u.value(x).map_err(e2s)?,
                    DELTA.powf(n as f64 / 2.0) * 2.0 * x.sqrt(),
                ));
            }
        }
        ensure(r_gap < 1e-8, || {
            format!("U_n vs delta^(n/2) U0 gap {r_gap:e}")
        })?;
        Ok(format!(
            "{} checks pass, path gap {p_gap:.1e}, U_n gap {r_gap:.1e}",
            rep.checks.len()
        ))
    })
}

fn c9() -> Verdict {
    let cfg = SolverConfig::default();
    let tab = Tabulated::from_fn(|y| y.powi(-2), cfg.y_min, cfg.y_max, 512).map_err(e2s)?;
    ensure(tab.len() == 512, || format!("{} knots", tab.len()))?;
    let u0 = UtilityFn::new(MarginalFn::tabulated(tab), 1.0, 2.0, cfg).map_err(e2s)?;
    let report = classify(u0.inv_marginal(), &fixture(), &cfg).map_err(e2s)?;
    ensure(report.branch == Branch::SeriesII, || {
        format!("branch {}", report.branch)
    })?;
    fixture_suite(&u0, 1e-4, 1e-4, Some(SolveMethod::SeriesII))
}

fn c10() -> Verdict {
    let m = PeriodParams::derive(1.1, 0.5, 0.2).unwrap();
    let cfg = SolverConfig::default();
    let theta = -m.log_a_b();
    let patho = |r: Result<(), Error>| matches!(r, Err(Error::PathologicalTheta { .. }));

    let power = MarginalFn::power(theta).map_err(e2s)?;
    ensure(patho(classify(&power, &m, &cfg).map(|_| ())), || {
        "classify accepted critical power".into()
    })?;
    ensure(patho(solve(&power, &m, &cfg).map(|_| ())), || {
        "solve accepted critical power".into()
    })?;
    let u0 = UtilityFn::power(theta).map_err(e2s)?;
    ensure(patho(step(&u0, &m, 1.0, None).map(|_| ())), || {
        "step accepted critical power".into()
    })?;
    let tab = Tabulated::from_fn(|y| y.powf(-theta), 1e-12, 1e12, 512).map_err(e2s)?;
    ensure(
        patho(solve(&MarginalFn::tabulated(tab), &m, &cfg).map(|_| ())),
        || "solve accepted critical tabulation".into(),
    )?;
    // Nearby exponents are still solved.
    let near = UtilityFn::power(theta + 1e-3).map_err(e2s)?;
    step(&near, &m, 1.0, None).map_err(|e| format!("theta + 1e-3 rejected: {e}"))?;
    Ok(format!(
        "critical theta {theta:.15} rejected by classify, solve, step and tabulated input"
    ))
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("functional-equation residual", c1),
        ("closed-form agreement", c2),
        ("oracle equivalence", c3),
        ("martingale and budget identities", c4),
        ("supermartingale sweep", c5),
        ("trivial branch", c6),
        ("non-uniqueness demo", c7),
        ("multi-period run", c8),
        ("tabulated input", c9),
        ("pathological guard", c10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
