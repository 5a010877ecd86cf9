//! Small numerical kernels shared by the solver, the utility reconstruction
//! and the brute-force oracle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Brent's method on a bracket `[a, b]` with `f(a)` and `f(b)` of opposite
/// sign. Falls back to bisection whenever an endpoint value is not finite.
pub fn brent_root<F>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    max_iter: usize,
) -> f64
where
    F: FnMut(f64) -> f64,
{
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 1e-300;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return b;
        }
        let interpolate = e.abs() >= tol
            && fa.abs() > fb.abs()
            && fa.is_finite()
            && fb.is_finite()
            && fc.is_finite();
        if interpolate {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    b
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 7-point Gauss-Legendre rule on `[lo, hi]`.
pub fn gauss7<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64) -> f64 {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut sum = WG[3] * f(center);
    for j in 0..3 {
        let dx = half * XGK[2 * j + 1];
        sum += WG[j] * (f(center - dx) + f(center + dx));
    }
    sum * half
}

pub(crate) fn gk15<F, E>(f: &mut F, lo: f64, hi: f64) -> Result<(f64, f64), E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx)? + f(center + dx)?;
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Outcome of [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[lo, hi]`.
///
/// Bisects the segment with the largest error estimate until the summed
/// estimate is below `rel_tol * |value| + abs_tol` or the evaluation budget is
/// spent.
pub fn integrate<F, E>(
    mut f: F,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    abs_tol: f64,
    budget: usize,
) -> Result<Quadrature, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    if lo == hi {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
            converged: true,
        });
    }
    let (value, err) = gk15(&mut f, lo, hi)?;
    let mut evaluations = 15;
    let mut total = value;
    let mut total_err = err;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { lo, hi, value, err });
    loop {
        if total_err <= rel_tol * total.abs() + abs_tol {
            return Ok(Quadrature {
                value: total,
                error: total_err,
                evaluations,
                converged: true,
            });
        }
        if evaluations + 30 > budget {
            break;
        }
        let seg = heap.pop().expect("heap never empties");
        let mid = 0.5 * (seg.lo + seg.hi);
        if mid <= seg.lo.min(seg.hi) || mid >= seg.lo.max(seg.hi) {
            // Segment can no longer be split in floating point.
            heap.push(seg);
            break;
        }
        let (v1, e1) = gk15(&mut f, seg.lo, mid)?;
        let (v2, e2) = gk15(&mut f, mid, seg.hi)?;
        evaluations += 30;
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.err;
        heap.push(Segment {
            lo: seg.lo,
            hi: mid,
            value: v1,
            err: e1,
        });
        heap.push(Segment {
            lo: mid,
            hi: seg.hi,
            value: v2,
            err: e2,
        });
    }
    // Recompute sums to shed accumulated rounding in the running totals.
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.err));
    Ok(Quadrature {
        value,
        error,
        evaluations,
        converged: error <= rel_tol * value.abs() + abs_tol,
    })
}

/// Result of a golden-section maximization.
#[derive(Debug, Clone, Copy)]
pub struct GoldenMax {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
    /// False when an interior probe fell below both bracket ends, which a
    /// unimodal objective cannot produce.
    pub unimodal: bool,
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`,
/// stopping when the bracket is narrower than `width_tol`.
pub fn golden_max<F, E>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    width_tol: f64,
    max_iter: usize,
) -> Result<GoldenMax, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    let floor = f_lo.min(f_hi);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut unimodal = true;
    let mut iterations = 0;
    while hi - lo > width_tol && iterations < max_iter {
        iterations += 1;
        if f1.max(f2) < floor {
            unimodal = false;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let (x, fx) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    Ok(GoldenMax {
        x,
        fx,
        iterations,
        unimodal,
    })
}
