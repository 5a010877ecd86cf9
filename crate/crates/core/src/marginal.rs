//! Inverse marginal functions.
//!
//! An inverse marginal `I = (U')^{-1}` is positive and strictly decreasing on
//! `(0, ∞)`, with `I(0+) = ∞` and `I(∞) = 0`. [`MarginalFn`] covers the
//! representations the solver produces or consumes: closed-form powers,
//! log-log tabulations, series solutions of the functional equation, and the
//! log-periodic family used to exhibit non-uniqueness.

// Negated comparisons below are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::funceq::SeriesSolution;
use crate::numeric::{brent_root, gauss7, integrate, log_grid};

/// Default relative tolerance on `|I(y) - z| / z` for [`MarginalFn::invert`].
pub const DEFAULT_TOL_INVERT: f64 = 1e-10;
/// Default cap on bracket doublings (in log space) for [`MarginalFn::invert`].
pub const DEFAULT_MAX_EXPANSIONS: usize = 64;

/// A strictly decreasing positive function on the positive reals.
#[derive(Clone)]
pub enum MarginalFn {
    /// `scale * y^(-theta)`.
    Power { theta: f64, scale: f64 },
    /// Monotone cubic interpolation in log-log space with power-law tails.
    Tabulated(Arc<Tabulated>),
    /// Lazily summed series solution of the functional equation.
    Series(Arc<SeriesSolution>),
    /// `y^exponent * (delta + amplitude * sin(pi * ln y / log_period))`.
    LogPeriodic(LogPeriodic),
}

impl fmt::Debug for MarginalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarginalFn::Power { theta, scale } => write!(f, "Power(theta={theta}, scale={scale})"),
            MarginalFn::Tabulated(t) => write!(f, "Tabulated({} knots)", t.len()),
            MarginalFn::Series(s) => write!(f, "Series({:?}, base={:?})", s.kind(), s.base()),
            MarginalFn::LogPeriodic(l) => write!(f, "{l:?}"),
        }
    }
}

impl MarginalFn {
    /// `y^(-theta)`.
    pub fn power(theta: f64) -> Result<Self> {
        Self::scaled_power(theta, 1.0)
    }

    /// `scale * y^(-theta)`.
    pub fn scaled_power(theta: f64, scale: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidTheta { theta });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Domain {
                what: "power scale",
                value: scale,
            });
        }
        Ok(MarginalFn::Power { theta, scale })
    }

    pub fn tabulated(table: Tabulated) -> Self {
        MarginalFn::Tabulated(Arc::new(table))
    }

    /// Short name of the representation.
    pub fn kind(&self) -> &'static str {
        match self {
            MarginalFn::Power { scale, .. } if *scale == 1.0 => "power",
            MarginalFn::Power { .. } => "scaled",
            MarginalFn::Tabulated(_) => "tabulated",
            MarginalFn::Series(_) => "series",
            MarginalFn::LogPeriodic(_) => "log-periodic",
        }
    }

    /// `(theta, scale)` when the function is a closed-form power.
    pub fn as_power(&self) -> Option<(f64, f64)> {
        match self {
            MarginalFn::Power { theta, scale } => Some((*theta, *scale)),
            _ => None,
        }
    }

    pub fn eval(&self, y: f64) -> Result<f64> {
        if !(y.is_finite() && y > 0.0) {
            return Err(Error::Domain {
                what: "inverse marginal",
                value: y,
            });
        }
        match self {
            MarginalFn::Power { theta, scale } => Ok(scale * y.powf(-theta)),
            MarginalFn::Tabulated(t) => Ok(t.eval(y)),
            MarginalFn::Series(s) => s.eval(y),
            MarginalFn::LogPeriodic(l) => Ok(l.eval(y)),
        }
    }

    /// `∫_{y0}^{y1} I(y) dy`, in closed form where available and term by
    /// term for series.
    pub fn integral(&self, y0: f64, y1: f64) -> Result<f64> {
        for y in [y0, y1] {
            if !(y.is_finite() && y > 0.0) {
                return Err(Error::Domain {
                    what: "inverse marginal",
                    value: y,
                });
            }
        }
        if y0 == y1 {
            return Ok(0.0);
        }
        match self {
            MarginalFn::Power { theta, scale } => Ok(power_integral(
                -theta,
                scale * y0.powf(1.0 - theta),
                0.0,
                (y1 / y0).ln(),
            )),
            MarginalFn::Tabulated(t) => t.integral(y0, y1),
            MarginalFn::Series(s) => s.integral(y0, y1),
            MarginalFn::LogPeriodic(l) => Ok(l.integral(y0, y1)),
        }
    }

    /// Solves `I(y) = z` with the default tolerance.
    pub fn invert(&self, z: f64) -> Result<f64> {
        self.invert_with(z, DEFAULT_TOL_INVERT, DEFAULT_MAX_EXPANSIONS)
    }

    /// Solves `I(y) = z` for `y`, guaranteeing `|I(y) - z| <= tol * z`.
    ///
    /// Non-power functions are bracketed from the seed `y = 1` by doubling the
    /// offset in `ln y`, then refined with Brent's method on
    /// `ln I(e^t) - ln z`, which is close to linear for near-power functions.
    pub fn invert_with(&self, z: f64, tol: f64, max_expansions: usize) -> Result<f64> {
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::Domain {
                what: "inverse of inverse marginal",
                value: z,
            });
        }
        if let MarginalFn::Power { theta, scale } = self {
            return Ok((z / scale).powf(-1.0 / theta));
        }
        let ln_z = z.ln();
        let g = |t: f64| -> Result<f64> {
            let y = t.exp();
            if y == 0.0 {
                return Ok(f64::INFINITY);
            }
            if !y.is_finite() {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(self.eval(y)?.ln() - ln_z)
        };

        let g0 = g(0.0)?;
        if g0 == 0.0 {
            return Ok(1.0);
        }
        // I decreasing: g > 0 means y is too small.
        let dir = if g0 > 0.0 { 1.0 } else { -1.0 };
        let (mut t_near, mut g_near) = (0.0, g0);
        let mut offset = 1.0_f64;
        let mut bracket = None;
        for _ in 0..max_expansions {
            let t = dir * offset;
            if t.abs() > 745.0 {
                break;
            }
            let gt = g(t)?;
            if gt.is_nan() {
                break;
            }
            if (gt > 0.0) != (g0 > 0.0) || gt == 0.0 {
                bracket = Some((t_near, g_near, t, gt));
                break;
            }
            t_near = t;
            g_near = gt;
            offset *= 2.0;
        }
        let Some((ta, ga, tb, gb)) = bracket else {
            return Err(Error::BracketFailure {
                target: z,
                expansions: max_expansions,
            });
        };

        let mut err = None;
        let t = brent_root(
            |t| match g(t) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            },
            ta,
            tb,
            ga,
            gb,
            300,
        );
        if let Some(e) = err {
            return Err(e);
        }
        let y = t.exp();
        let residual = (self.eval(y)? - z).abs() / z;
        if residual > tol {
            return Err(Error::InversionFailure {
                target: z,
                residual,
            });
        }
        Ok(y)
    }

    /// Samples `I` on `n` log-spaced points of `[y_min, y_max]` and reports
    /// the Inada proxies and any monotonicity violations.
    pub fn check_inada(&self, y_min: f64, y_max: f64, n: usize) -> InadaReport {
        let grid = log_grid(y_min, y_max, n.max(2));
        let values: Vec<f64> = grid
            .iter()
            .map(|&y| self.eval(y).unwrap_or(f64::NAN))
            .collect();
        let violations = values.windows(2).filter(|w| !(w[1] < w[0])).count();
        let nonpositive = values.iter().filter(|v| !(**v > 0.0)).count();
        InadaReport {
            y_min,
            y_max,
            at_min: values[0],
            at_max: values[values.len() - 1],
            samples: values.len(),
            violations,
            nonpositive,
        }
    }

    /// Tabulates this function on `n` log-spaced knots.
    pub fn tabulate(&self, y_min: f64, y_max: f64, n: usize) -> Result<Tabulated> {
        let ys = log_grid(y_min, y_max, n);
        let is = ys
            .iter()
            .map(|&y| self.eval(y))
            .collect::<Result<Vec<_>>>()?;
        Tabulated::from_points(&ys, &is)
    }

    /// Writes `(y, I(y))` rows on the given grid as CSV with a header.
    pub fn write_csv<W: Write>(&self, out: W, grid: &[f64]) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["y", "I"])?;
        for &y in grid {
            w.write_record([format!("{y:e}"), format!("{:e}", self.eval(y)?)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Diagnostic record from [`MarginalFn::check_inada`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InadaReport {
    pub y_min: f64,
    pub y_max: f64,
    pub at_min: f64,
    pub at_max: f64,
    pub samples: usize,
    /// Adjacent sample pairs where the function failed to strictly decrease.
    pub violations: usize,
    pub nonpositive: usize,
}

impl InadaReport {
    pub fn passes(&self, eps: f64) -> bool {
        self.violations == 0
            && self.nonpositive == 0
            && self.at_max < eps
            && self.at_min > 1.0 / eps
    }
}

// Knot spacing in ln y up to which a fixed 7-point Gauss rule integrates a
// Hermite piece to rounding accuracy.
const NARROW_INTERVAL: f64 = 0.25;

/// Knots in `(ln y, ln I)` with Fritsch–Carlson slopes and linear (power-law)
/// extrapolation beyond both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    log_y: Vec<f64>,
    log_i: Vec<f64>,
    slopes: Vec<f64>,
    left_tail_exponent: f64,
    right_tail_exponent: f64,
    // ∫ I dy over each knot interval.
    seg_int: Vec<f64>,
}

impl Tabulated {
    /// Builds a table from strictly increasing `ys` and strictly decreasing
    /// positive `is`.
    pub fn from_points(ys: &[f64], is: &[f64]) -> Result<Self> {
        if ys.len() != is.len() {
            return Err(Error::InvalidTable(format!(
                "{} abscissae vs {} values",
                ys.len(),
                is.len()
            )));
        }
        if ys.len() < 2 {
            return Err(Error::InvalidTable("need at least two knots".into()));
        }
        for (k, (&y, &i)) in ys.iter().zip(is).enumerate() {
            if !(y.is_finite() && y > 0.0 && i.is_finite() && i > 0.0) {
                return Err(Error::InvalidTable(format!(
                    "knot {k}: ({y}, {i}) must be positive and finite"
                )));
            }
        }
        let log_y: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
        let log_i: Vec<f64> = is.iter().map(|i| i.ln()).collect();
        for k in 1..log_y.len() {
            if !(log_y[k] > log_y[k - 1]) {
                return Err(Error::InvalidTable(format!(
                    "y not strictly increasing at knot {k}"
                )));
            }
            if !(log_i[k] < log_i[k - 1]) {
                return Err(Error::InvalidTable(format!(
                    "I not strictly decreasing at knot {k}"
                )));
            }
        }
        let secants: Vec<f64> = (0..log_y.len() - 1)
            .map(|k| (log_i[k + 1] - log_i[k]) / (log_y[k + 1] - log_y[k]))
            .collect();
        let slopes = pchip_slopes(&log_y, &secants);
        let mut t = Tabulated {
            left_tail_exponent: secants[0],
            right_tail_exponent: secants[secants.len() - 1],
            log_y,
            log_i,
            slopes,
            seg_int: Vec::new(),
        };
        t.seg_int = (0..t.len() - 1)
            .map(|k| t.interior_integral(k, t.log_y[k], t.log_y[k + 1]))
            .collect::<Result<_>>()?;
        Ok(t)
    }

    /// Samples `f` on `n` log-spaced knots in `[y_min, y_max]`.
    pub fn from_fn<F: Fn(f64) -> f64>(f: F, y_min: f64, y_max: f64, n: usize) -> Result<Self> {
        let ys = log_grid(y_min, y_max, n);
        let is: Vec<f64> = ys.iter().map(|&y| f(y)).collect();
        Self::from_points(&ys, &is)
    }

    pub fn len(&self) -> usize {
        self.log_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_y.is_empty()
    }

    /// Knots as `(ln y, ln I)` pairs.
    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.log_y.iter().copied().zip(self.log_i.iter().copied())
    }

    pub fn left_tail_exponent(&self) -> f64 {
        self.left_tail_exponent
    }

    pub fn right_tail_exponent(&self) -> f64 {
        self.right_tail_exponent
    }

    pub fn eval(&self, y: f64) -> f64 {
        let t = y.ln();
        let n = self.log_y.len();
        if t <= self.log_y[0] {
            return (self.log_i[0] + self.left_tail_exponent * (t - self.log_y[0])).exp();
        }
        if t >= self.log_y[n - 1] {
            return (self.log_i[n - 1] + self.right_tail_exponent * (t - self.log_y[n - 1])).exp();
        }
        let k = self.log_y.partition_point(|&x| x <= t) - 1;
        self.hermite(k, t).exp()
    }

    // ln I at `t = ln y` on knot interval `k`.
    fn hermite(&self, k: usize, t: f64) -> f64 {
        let h = self.log_y[k + 1] - self.log_y[k];
        let s = (t - self.log_y[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.log_i[k]
            + h10 * h * self.slopes[k]
            + h01 * self.log_i[k + 1]
            + h11 * h * self.slopes[k + 1]
    }

    // ∫ I dy for ln y from `t0` to `t1`, both inside knot interval `k`.
    fn interior_integral(&self, k: usize, t0: f64, t1: f64) -> Result<f64> {
        if t0 == t1 {
            return Ok(0.0);
        }
        let f = |t: f64| (self.hermite(k, t) + t).exp();
        if self.log_y[k + 1] - self.log_y[k] <= NARROW_INTERVAL {
            return Ok(gauss7(f, t0, t1));
        }
        let q = integrate(|t| Ok::<_, Error>(f(t)), t0, t1, 1e-14, 0.0, 100_000)?;
        Ok(q.value)
    }

    // ∫ I dy for ln y from `t0` to `t1` on the power tail through knot `j`
    // with exponent `e`.
    fn tail_integral(&self, j: usize, e: f64, t0: f64, t1: f64) -> f64 {
        let (tj, lj) = (self.log_y[j], self.log_i[j]);
        power_integral(e, (lj + tj).exp(), t0 - tj, t1 - tj)
    }

    /// `∫_{y0}^{y1} I(y) dy`.
    pub fn integral(&self, y0: f64, y1: f64) -> Result<f64> {
        if y1 < y0 {
            return Ok(-self.integral(y1, y0)?);
        }
        let (t0, t1) = (y0.ln(), y1.ln());
        let n = self.len();
        let (first, last) = (self.log_y[0], self.log_y[n - 1]);
        let mut total = 0.0;
        if t0 < first {
            total += self.tail_integral(0, self.left_tail_exponent, t0, t1.min(first));
        }
        if t1 > last {
            total += self.tail_integral(n - 1, self.right_tail_exponent, t0.max(last), t1);
        }
        let (a, b) = (t0.max(first), t1.min(last));
        if a < b {
            let ka = (self.log_y.partition_point(|&x| x <= a) - 1).min(n - 2);
            let kb = (self.log_y.partition_point(|&x| x < b) - 1).min(n - 2);
            if ka == kb {
                total += self.interior_integral(ka, a, b)?;
            } else {
                total += self.interior_integral(ka, a, self.log_y[ka + 1])?;
                total += self.seg_int[ka + 1..kb].iter().sum::<f64>();
                total += self.interior_integral(kb, self.log_y[kb], b)?;
            }
        }
        Ok(total)
    }

    /// Reads a two-column `y,I` CSV with a header row.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut ys = Vec::new();
        let mut is = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(row as u64 + 2);
            if rec.len() != 2 {
                return Err(Error::Parse {
                    location: format!("line {line}"),
                    message: format!("expected 2 columns, found {}", rec.len()),
                });
            }
            let parse = |s: &str, col: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    location: format!("line {line}, column {col}"),
                    message: e.to_string(),
                })
            };
            ys.push(parse(&rec[0], "y")?);
            is.push(parse(&rec[1], "I")?);
        }
        Self::from_points(&ys, &is)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// Writes the knots back out as `y,I` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["y", "I"])?;
        for (ly, li) in self.knots() {
            w.write_record([format!("{:e}", ly.exp()), format!("{:e}", li.exp())])?;
        }
        w.flush()?;
        Ok(())
    }
}

// Shape-preserving derivative estimates (Fritsch–Carlson with the
// three-point end condition).
fn pchip_slopes(x: &[f64], secants: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 2 {
        return vec![secants[0]; 2];
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (s0, s1) = (secants[k - 1], secants[k]);
        if s0 * s1 <= 0.0 {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / s0 + w2 / s1);
        }
    }
    d[0] = end_slope(h[0], h[1], secants[0], secants[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], secants[n - 2], secants[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d.signum() != s0.signum() {
        0.0
    } else if s0.signum() != s1.signum() && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

// ∫ w e^{e s} e^{s} ds over [s0, s1]: the integral of `w0 (y/y_ref)^e dy`
// in `s = ln(y / y_ref)`, with `w = w0 y_ref`.
fn power_integral(e: f64, w: f64, s0: f64, s1: f64) -> f64 {
    let g = e + 1.0;
    if g == 0.0 {
        return w * (s1 - s0);
    }
    // e^{g s1} - e^{g s0} without cancellation when s0 ≈ s1.
    w * (g * s0).exp() * (g * (s1 - s0)).exp_m1() / g
}

/// `y^exponent * (delta + amplitude * sin(pi * ln y / log_period))`.
///
/// With `amplitude = 0` this is a scaled power. The sine factor flips sign
/// under `ln y -> ln y + log_period`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPeriodic {
    pub exponent: f64,
    pub delta: f64,
    pub amplitude: f64,
    pub log_period: f64,
}

impl LogPeriodic {
    /// The oscillating factor as a function of `z = ln y`.
    pub fn theta(&self, z: f64) -> f64 {
        self.amplitude * (std::f64::consts::PI * z / self.log_period).sin()
    }

    pub fn eval(&self, y: f64) -> f64 {
        y.powf(self.exponent) * (self.delta + self.theta(y.ln()))
    }

    /// `∫_{y0}^{y1}` in closed form.
    pub fn integral(&self, y0: f64, y1: f64) -> f64 {
        let g = self.exponent + 1.0;
        let w = std::f64::consts::PI / self.log_period;
        let smooth = power_integral(self.exponent, self.delta, y0.ln(), y1.ln());
        // ∫ e^{g t} sin(w t) dt = e^{g t} (g sin wt - w cos wt) / (g² + w²)
        let f = |t: f64| (g * t).exp() * (g * (w * t).sin() - w * (w * t).cos()) / (g * g + w * w);
        smooth + self.amplitude * (f(y1.ln()) - f(y0.ln()))
    }
}
