//! Scenario files, run configuration and CSV outputs.
//!
//! All CSV files are UTF-8 with a header row and LF line endings. Numbers are
//! written in the shortest form that parses back to the same `f64`, in
//! exponent notation (`7.272727272727273e0`). Missing values are empty
//! fields.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::forward::{Run, Scenario};
use crate::numeric::log_grid;

/// Wealth range of `utility_n.csv`.
pub const EXPORT_X_MIN: f64 = 1e-2;
pub const EXPORT_X_MAX: f64 = 1e2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            solver: SolverConfig::default(),
            output_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("output_dir is empty".into()));
        }
        Ok(())
    }
}

/// Parses a scenario from JSON text and validates it.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("{origin}: line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    parse_scenario(&text, &path.display().to_string())
}

pub fn save_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(scenario).map_err(|e| Error::Validation(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Directory against which relative paths inside `scenario_path` resolve.
pub fn scenario_dir(scenario_path: &Path) -> PathBuf {
    scenario_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// `n,pi_star,X_star,realized`: one row per date with known wealth. Row `n`
/// holds the wealth at date `n`, the position taken over the next period and
/// that period's outcome.
pub fn write_path_csv<W: Write>(out: W, run: &Run) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "n,pi_star,X_star,realized")?;
    let path = run.wealth_path();
    for (n, &x) in path.iter().enumerate() {
        let step = run.steps.get(n);
        let pi = step.and_then(|s| s.allocation);
        let realized = step
            .and_then(|s| s.outcome)
            .map(|o| o.to_string())
            .unwrap_or_default();
        writeln!(w, "{n},{},{x:e},{realized}", fmt_opt(pi))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `path.csv` into `dir`.
pub fn write_path(dir: &Path, run: &Run) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join("path.csv");
    write_path_csv(File::create(&p)?, run)?;
    Ok(p)
}

/// Writes `utility_n.csv` and `marginal_n.csv` for every `U_n` in the run.
pub fn write_grids(dir: &Path, run: &Run, cfg: &SolverConfig) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let xs = log_grid(EXPORT_X_MIN, EXPORT_X_MAX, cfg.grid_points);
    let ys = log_grid(cfg.y_min, cfg.y_max, cfg.grid_points);
    let mut written = Vec::new();
    for (n, u) in run.utilities().enumerate() {
        let p = dir.join(format!("utility_{n}.csv"));
        u.write_csv(File::create(&p)?, &xs)?;
        written.push(p);
        let p = dir.join(format!("marginal_{n}.csv"));
        u.inv_marginal().write_csv(File::create(&p)?, &ys)?;
        written.push(p);
    }
    Ok(written)
}
