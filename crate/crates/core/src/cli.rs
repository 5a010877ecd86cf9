//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid input (bad flags, bad scenario,
//! unreadable files), 2 when the solver fails or a verification check does
//! not pass.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::SolverConfig;
use crate::error::Result;
use crate::forward::{run, step};
use crate::funceq::{make_nonunique_pair, relative_residual, uniqueness_limit, SolveMethod};
use crate::io::{load_scenario, scenario_dir, write_grids, write_path, RunConfig};
use crate::market::PeriodParams;
use crate::numeric::log_grid;
use crate::utility::UtilityFn;
use crate::verify::verify_run;

#[derive(Debug, Parser)]
#[command(
    name = "forward-perf",
    version,
    about = "Forward performance processes in a binomial market"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Relative cutoff for series terms.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Points on the sampling and export grids.
    #[arg(long, global = true)]
    pub grid_points: Option<usize>,
    #[arg(long, global = true)]
    pub ymin: Option<f64>,
    #[arg(long, global = true)]
    pub ymax: Option<f64>,
    /// Directory for CSV outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
}

impl GlobalArgs {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut solver = SolverConfig::default();
        if let Some(t) = self.tol {
            solver.tol_series = t;
        }
        if let Some(n) = self.grid_points {
            solver.grid_points = n;
        }
        if let Some(y) = self.ymin {
            solver.y_min = y;
        }
        if let Some(y) = self.ymax {
            solver.y_max = y;
        }
        let cfg = RunConfig {
            solver,
            output_dir: self.out.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct MarketArgs {
    #[arg(long)]
    pub u: f64,
    #[arg(long)]
    pub d: f64,
    #[arg(long)]
    pub p: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one period for a power or log initial utility.
    Solve {
        #[command(flatten)]
        market: MarketArgs,
        /// Power exponent: U0'(x) = x^(-1/theta).
        #[arg(long, required_unless_present = "log", conflicts_with = "log")]
        theta: Option<f64>,
        /// Use U0 = ln x.
        #[arg(long)]
        log: bool,
        /// Wealth at which to report the allocation.
        #[arg(long, default_value_t = 1.0)]
        x: f64,
    },
    /// Run a scenario and write path.csv.
    Run {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run a scenario and check every invariant.
    Verify {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Write two distinct solutions of the same equation to nonunique.csv.
    NonuniqueDemo {
        #[command(flatten)]
        market: MarketArgs,
    },
    /// Run a scenario and write utility_n.csv and marginal_n.csv.
    ExportGrid {
        #[arg(long)]
        scenario: PathBuf,
    },
}

/// Parses `args` (including the program name) and runs the command, writing
/// to stdout and stderr. Returns the process exit code.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_command_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run_command`] with explicit output streams.
pub fn run_command_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let cfg = cli.global.run_config()?;
    match &cli.command {
        Command::Solve {
            market,
            theta,
            log,
            x,
        } => {
            let params = PeriodParams::derive(market.u, market.d, market.p)?;
            let u0 = match theta {
                Some(t) if !*log => UtilityFn::power(*t)?,
                _ => UtilityFn::log(),
            }
            .with_config(cfg.solver);
            cmd_solve(&u0, &params, *x, out)
        }
        Command::Run { scenario } => {
            let s = load_scenario(scenario)?;
            let r = run(&s, &scenario_dir(scenario), &cfg.solver)?;
            let p = write_path(&cfg.output_dir, &r)?;
            writeln!(out, "periods={}", r.steps.len())?;
            for (n, x) in r.wealth_path().iter().enumerate() {
                writeln!(out, "X_{n}={x:e}")?;
            }
            writeln!(out, "wrote {}", p.display())?;
            Ok(0)
        }
        Command::Verify { scenario } => {
            let s = load_scenario(scenario)?;
            let r = run(&s, &scenario_dir(scenario), &cfg.solver)?;
            let rep = verify_run(&r);
            write!(out, "{}", rep.table())?;
            Ok(if rep.passed() { 0 } else { 2 })
        }
        Command::NonuniqueDemo { market } => {
            let params = PeriodParams::derive(market.u, market.d, market.p)?;
            cmd_nonunique(&params, &cfg, out)
        }
        Command::ExportGrid { scenario } => {
            let s = load_scenario(scenario)?;
            let r = run(&s, &scenario_dir(scenario), &cfg.solver)?;
            let files = write_grids(&cfg.output_dir, &r, &cfg.solver)?;
            for f in files {
                writeln!(out, "wrote {}", f.display())?;
            }
            Ok(0)
        }
    }
}

fn cmd_solve(u0: &UtilityFn, params: &PeriodParams, x: f64, out: &mut dyn Write) -> Result<i32> {
    let s = step(u0, params, x, None)?;
    let m = params;
    writeln!(
        out,
        "params: u={} d={} p={} q={} a={} b={} c={} rho_u={} rho_d={}",
        m.u, m.d, m.p, m.q, m.a, m.b, m.c, m.rho_u, m.rho_d
    )?;
    writeln!(out, "log_a_b={}", m.log_a_b())?;
    writeln!(out, "branch={}", s.report.branch)?;
    writeln!(out, "method={}", s.method)?;
    match (s.method, s.inv_marginal.as_power()) {
        (SolveMethod::ClosedForm | SolveMethod::Identity, Some((_, delta))) => {
            writeln!(out, "delta={delta}")?
        }
        _ => writeln!(
            out,
            "I1(1)/I0(1)={}",
            s.inv_marginal.eval(1.0)? / u0.inv_marginal().eval(1.0)?
        )?,
    }
    let pi = s.allocation.unwrap_or(f64::NAN);
    writeln!(out, "x={x}")?;
    writeln!(out, "pi_star/x={}", pi / x)?;
    writeln!(out, "X_up={}", s.wealth_up.unwrap_or(f64::NAN))?;
    writeln!(out, "X_down={}", s.wealth_down.unwrap_or(f64::NAN))?;
    writeln!(out, "U1(x)={}", s.utility.value(x)?)?;
    Ok(0)
}

fn cmd_nonunique(params: &PeriodParams, cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let pair = make_nonunique_pair(params)?;
    let s = &cfg.solver;
    let ys = log_grid(s.y_min, s.y_max, s.grid_points);
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("nonunique.csv");
    let mut w = std::io::BufWriter::new(File::create(&path)?);
    writeln!(
        w,
        "y,principal,perturbed,residual_principal,residual_perturbed"
    )?;
    let (mut worst_p, mut worst_q) = (0.0_f64, 0.0_f64);
    for &y in &ys {
        let rp = relative_residual(&pair.principal, &pair.input, params, y)?;
        let rq = relative_residual(&pair.perturbed, &pair.input, params, y)?;
        worst_p = worst_p.max(rp.abs());
        worst_q = worst_q.max(rq.abs());
        writeln!(
            w,
            "{y:e},{:e},{:e},{rp:e},{rq:e}",
            pair.principal.eval(y)?,
            pair.perturbed.eval(y)?
        )?;
    }
    w.flush()?;

    let inada = |f: &crate::marginal::MarginalFn| {
        f.check_inada(s.inada_y_min, s.inada_y_max, 2001)
            .passes(s.inada_eps)
    };
    let probe_p = uniqueness_limit(&pair.principal, params, s)?;
    let probe_q = uniqueness_limit(&pair.perturbed, params, s)?;
    writeln!(out, "log_a_b={}", pair.log_a_b)?;
    writeln!(out, "delta={}", pair.delta)?;
    writeln!(
        out,
        "amplitude={} (bound {})",
        pair.amplitude, pair.amplitude_bound
    )?;
    writeln!(
        out,
        "{:<10} {:>13} {:>8} {:>13} {:>6} {:>13} {:>6}",
        "solution", "max_residual", "inverse", "sup_near_0", "to_0", "sup_near_inf", "to_0"
    )?;
    let yes_no = |b: bool| if b { "yes" } else { "no" };
    for (name, f, r, pr) in [
        ("principal", &pair.principal, worst_p, probe_p),
        ("perturbed", &pair.perturbed, worst_q, probe_q),
    ] {
        writeln!(
            out,
            "{:<10} {:>13.3e} {:>8} {:>13.6e} {:>6} {:>13.6e} {:>6}",
            name,
            r,
            if inada(f) { "ok" } else { "FAIL" },
            pr.at_zero,
            yes_no(pr.vanishes_at_zero),
            pr.at_infinity,
            yes_no(pr.vanishes_at_infinity)
        )?;
    }
    writeln!(out, "wrote {}", path.display())?;
    Ok(0)
}
