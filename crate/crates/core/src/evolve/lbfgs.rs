//! Limited-memory BFGS with a strong Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the largest gradient component falls below this.
    pub grad_tolerance: f64,
    /// Stop when an accepted step lowers `f` by less than this fraction of
    /// `max(|f|, 1)`. Zero disables the test.
    pub f_rel_tolerance: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iterations: 500,
            grad_tolerance: 1e-5,
            f_rel_tolerance: 1e-9,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 || self.max_line_search == 0 {
            return Err(Error::Config("L-BFGS memory and line-search budget must be positive".into()));
        }
        if !(self.grad_tolerance > 0.0) || !(self.f_rel_tolerance >= 0.0) {
            return Err(Error::Config("L-BFGS tolerances must be positive".into()));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got {} and {}",
                self.c1, self.c2
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LbfgsStatus {
    Converged,
    FunctionTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    /// `f` at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub status: LbfgsStatus,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Clone)]
struct Point {
    a: f64,
    f: f64,
    d: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

struct Problem<'a, F> {
    fun: F,
    x: &'a [f64],
    dir: &'a [f64],
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>> Problem<'_, F> {
    fn eval(&mut self, a: f64) -> Result<Point> {
        let x: Vec<f64> = self.x.iter().zip(self.dir).map(|(x, d)| x + a * d).collect();
        self.evaluations += 1;
        let (f, g) = (self.fun)(&x)?;
        let d = dot(&g, self.dir);
        let f = if f.is_finite() && d.is_finite() { f } else { f64::INFINITY };
        Ok(Point { a, f, d, x, g })
    }
}

/// Cubic interpolation minimizer between two bracketing points, kept away
/// from the ends of the interval.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.a.min(hi.a), lo.a.max(hi.a));
    let mid = 0.5 * (lo.a + hi.a);
    if !hi.f.is_finite() {
        return mid;
    }
    let d1 = lo.d + hi.d - 3.0 * (lo.f - hi.f) / (lo.a - hi.a);
    let disc = d1 * d1 - lo.d * hi.d;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (hi.a - lo.a).signum() * disc.sqrt();
    let t = hi.a - (hi.a - lo.a) * (hi.d + d2 - d1) / (hi.d - lo.d + 2.0 * d2);
    let margin = 0.1 * (b - a);
    if t.is_finite() && t > a + margin && t < b - margin {
        t
    } else {
        mid
    }
}

enum Search {
    Wolfe(Point),
    /// Sufficient decrease without the curvature condition.
    Armijo(Point),
    Failed,
}

fn line_search<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>>(
    p: &mut Problem<'_, F>,
    f0: f64,
    d0: f64,
    a_init: f64,
    cfg: &LbfgsConfig,
) -> Result<Search> {
    let armijo = |pt: &Point| pt.f <= f0 + cfg.c1 * pt.a * d0;
    let start = Point {
        a: 0.0,
        f: f0,
        d: d0,
        x: Vec::new(),
        g: Vec::new(),
    };
    let mut prev = start;
    let mut a = a_init;
    let mut budget = cfg.max_line_search;
    let (mut lo, mut hi);
    loop {
        let pt = p.eval(a)?;
        budget -= 1;
        if !armijo(&pt) || (prev.a > 0.0 && pt.f >= prev.f) {
            lo = prev;
            hi = pt;
            break;
        }
        if pt.d.abs() <= -cfg.c2 * d0 {
            return Ok(Search::Wolfe(pt));
        }
        if pt.d >= 0.0 {
            lo = pt;
            hi = prev;
            break;
        }
        if budget == 0 {
            return Ok(Search::Armijo(pt));
        }
        prev = pt;
        a *= 2.0;
    }
    while budget > 0 {
        if (hi.a - lo.a).abs() <= 1e-14 * lo.a.abs().max(hi.a.abs()) {
            break;
        }
        let t = interpolate(&lo, &hi);
        let pt = p.eval(t)?;
        budget -= 1;
        if !armijo(&pt) || pt.f >= lo.f {
            hi = pt;
        } else {
            if pt.d.abs() <= -cfg.c2 * d0 {
                return Ok(Search::Wolfe(pt));
            }
            if pt.d * (hi.a - lo.a) >= 0.0 {
                hi = lo;
            }
            lo = pt;
        }
    }
    Ok(if lo.a > 0.0 { Search::Armijo(lo) } else { Search::Failed })
}

/// Minimizes `fun` from `x0`. `fun` returns the value and gradient; a
/// non-finite value is treated as a rejected trial point.
///
/// A failed line search ends the run with the best point found so far and
/// [`LbfgsStatus::LineSearchFailed`].
pub fn minimize<F>(mut fun: F, x0: &[f64], cfg: &LbfgsConfig) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let (mut f, mut g) = fun(x0)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Check(format!("objective is not finite at the starting point ({f})")));
    }
    let mut x = x0.to_vec();
    let mut out = LbfgsOutcome {
        x: Vec::new(),
        f,
        grad: Vec::new(),
        iterations: 0,
        evaluations: 1,
        trace: vec![f],
        status: LbfgsStatus::MaxIterations,
    };
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);

    let status = loop {
        if inf_norm(&g) < cfg.grad_tolerance {
            break LbfgsStatus::Converged;
        }
        if out.iterations >= cfg.max_iterations {
            break LbfgsStatus::MaxIterations;
        }

        let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut coeffs = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let c = rho * dot(s, &dir);
            for (d, yv) in dir.iter_mut().zip(y) {
                *d -= c * yv;
            }
            coeffs.push(c);
        }
        if let Some((s, y, _)) = memory.back() {
            let scale = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= scale);
        }
        for ((s, y, rho), c) in memory.iter().zip(coeffs.iter().rev()) {
            let b = rho * dot(y, &dir);
            for (d, sv) in dir.iter_mut().zip(s) {
                *d += (c - b) * sv;
            }
        }
        let mut d0 = dot(&dir, &g);
        if !(d0 < 0.0) {
            memory.clear();
            dir = g.iter().map(|v| -v).collect();
            d0 = dot(&dir, &g);
        }
        let a_init = if memory.is_empty() { (1.0 / inf_norm(&dir)).min(1.0) } else { 1.0 };

        let mut prob = Problem {
            fun: &mut fun,
            x: &x,
            dir: &dir,
            evaluations: 0,
        };
        let search = line_search(&mut prob, f, d0, a_init, cfg)?;
        out.evaluations += prob.evaluations;
        let pt = match search {
            Search::Wolfe(pt) | Search::Armijo(pt) => pt,
            Search::Failed => {
                if memory.is_empty() {
                    break LbfgsStatus::LineSearchFailed;
                }
                memory.clear();
                continue;
            }
        };

        let s: Vec<f64> = pt.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = pt.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if memory.len() == cfg.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let f_prev = f;
        x = pt.x;
        f = pt.f;
        g = pt.g;
        out.iterations += 1;
        out.trace.push(f);
        if f_prev - f <= cfg.f_rel_tolerance * f.abs().max(f_prev.abs()).max(1.0) {
            break if inf_norm(&g) < cfg.grad_tolerance {
                LbfgsStatus::Converged
            } else {
                LbfgsStatus::FunctionTolerance
            };
        }
    };
    out.x = x;
    out.f = f;
    out.grad = g;
    out.status = status;
    Ok(out)
}
