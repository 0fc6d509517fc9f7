//! Quadrature and root-finding kernels shared by every solver.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub quad_abs_tol: f64,
    pub root_abs_tol: f64,
    pub max_iter: usize,
    pub grid_fallback_points: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            quad_abs_tol: 1e-10,
            root_abs_tol: 1e-12,
            max_iter: 200,
            grid_fallback_points: 4096,
        }
    }
}

impl NumericsConfig {
    pub fn validate(&self) -> Result<(), NumericsError> {
        if !(self.quad_abs_tol > 0.0) || !(self.root_abs_tol > 0.0) {
            return Err(NumericsError::Config("tolerances must be positive".into()));
        }
        if self.max_iter < 10 {
            return Err(NumericsError::Config("max_iter must be at least 10".into()));
        }
        if self.grid_fallback_points < 2 {
            return Err(NumericsError::Config(
                "grid_fallback_points must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("quadrature did not converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },
    #[error("no sign change on [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },
    #[error("root search exceeded {0} iterations")]
    MaxIter(usize),
    #[error("invalid numerics configuration: {0}")]
    Config(String),
}

const MAX_DEPTH: u32 = 50;
const MIN_DEPTH: u32 = 4;

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
///
/// `b` may be `f64::INFINITY`; the tail is mapped onto `[0, 1)` with
/// `x = a + t / (1 - t)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    cfg: &NumericsConfig,
) -> Result<f64, NumericsError> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, cfg).map(|v| -v);
    }
    if b.is_infinite() {
        let g = |t: f64| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            let y = f(a + t / s) / (s * s);
            if y.is_finite() {
                y
            } else {
                0.0
            }
        };
        return simpson(&g, 0.0, 1.0, cfg.quad_abs_tol);
    }
    simpson(&f, a, b, cfg.quad_abs_tol)
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64, NumericsError> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let v = step(f, a, b, fa, fm, fb, whole, tol, 0)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NumericsError::Quadrature { a, b })
    }
}

#[allow(clippy::too_many_arguments)]
fn step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, NumericsError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth >= MIN_DEPTH && diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(NumericsError::Quadrature { a, b });
    }
    let l = step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?;
    let r = step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?;
    Ok(l + r)
}

/// Brent's bracketing root finder on `[lo, hi]`.
pub fn find_root<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    cfg: &NumericsConfig,
) -> Result<f64, NumericsError> {
    let flo = f(lo);
    let fhi = f(hi);
    brent(&f, lo, hi, flo, fhi, cfg)
}

pub(crate) fn brent<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    flo: f64,
    fhi: f64,
    cfg: &NumericsConfig,
) -> Result<f64, NumericsError> {
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.is_nan() || fhi.is_nan() || flo.signum() == fhi.signum() {
        return Err(NumericsError::Bracket { lo, hi });
    }
    let (mut a, mut b, mut fa, mut fb) = (lo, hi, flo, fhi);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    // Bisection fallback guarantees termination well inside this budget.
    let budget = cfg.max_iter.max(200);
    for _ in 0..budget {
        if fb.signum() == fc.signum() {
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
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * cfg.root_abs_tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Err(NumericsError::MaxIter(budget))
}

/// Scans `n_subdiv` equal subintervals for sign changes and refines each.
pub fn find_all_roots<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    n_subdiv: usize,
    cfg: &NumericsConfig,
) -> Vec<f64> {
    let n = n_subdiv.max(2);
    let xs: Vec<f64> = (0..=n)
        .map(|k| lo + (hi - lo) * k as f64 / n as f64)
        .collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for k in 0..n {
        if fs[k] == 0.0 {
            roots.push(xs[k]);
        } else if fs[k + 1] != 0.0 && fs[k].signum() != fs[k + 1].signum() {
            if let Ok(r) = brent(&f, xs[k], xs[k + 1], fs[k], fs[k + 1], cfg) {
                roots.push(r);
            }
        }
    }
    if fs[n] == 0.0 {
        roots.push(xs[n]);
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    roots
}

/// `n` points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}
