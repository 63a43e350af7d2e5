//! Strong Wolfe line search along the steepest-descent direction.
//!
//! Bracketing followed by zoom with safeguarded quadratic interpolation.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WolfeConfig {
    pub c1: f64,
    pub c2: f64,
    pub max_evals: usize,
    pub initial_step: f64,
}

impl Default for WolfeConfig {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            max_evals: 20,
            initial_step: 1.0,
        }
    }
}

impl WolfeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(invalid(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1={} c2={}",
                self.c1, self.c2
            )));
        }
        if self.max_evals == 0 {
            return Err(invalid("line search needs at least one evaluation"));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(invalid("initial step must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub step: f64,
    pub evals: usize,
    /// Neither strong Wolfe condition pair was met within the budget.
    pub fallback: bool,
    /// Objective value at the returned step.
    pub value: f64,
}

/// One evaluation along the line: `φ(λ)` and `φ'(λ)`.
#[derive(Debug, Clone, Copy)]
struct Point {
    step: f64,
    value: f64,
    slope: f64,
}

/// Searches `φ(λ)` with `φ(0) = phi0`, `φ'(0) = dphi0 < 0`. `eval` returns
/// `(φ(λ), φ'(λ))`.
pub fn search(
    phi0: f64,
    dphi0: f64,
    cfg: &WolfeConfig,
    mut eval: impl FnMut(f64) -> Result<(f64, f64)>,
) -> Result<LineSearchOutcome> {
    cfg.validate()?;
    if dphi0 == 0.0 {
        return Ok(LineSearchOutcome {
            step: 0.0,
            evals: 0,
            fallback: false,
            value: phi0,
        });
    }
    if !(dphi0 < 0.0) || !phi0.is_finite() {
        return Err(invalid("line search needs a finite value and a descent direction"));
    }

    let mut s = Searcher {
        phi0,
        dphi0,
        cfg,
        evals: 0,
        best: None,
        smallest: None,
        eval: &mut eval,
    };
    if let Some(p) = s.run()? {
        return Ok(LineSearchOutcome {
            step: p.step,
            evals: s.evals,
            fallback: false,
            value: p.value,
        });
    }
    match s.best.or(s.smallest) {
        Some(p) => Ok(LineSearchOutcome {
            step: p.step,
            evals: s.evals,
            fallback: true,
            value: p.value,
        }),
        None => Err(Error::LineSearch(format!(
            "objective was non-finite at all {} trial steps",
            s.evals
        ))),
    }
}

struct Searcher<'a, F> {
    phi0: f64,
    dphi0: f64,
    cfg: &'a WolfeConfig,
    evals: usize,
    /// Lowest-valued trial satisfying sufficient decrease.
    best: Option<Point>,
    /// Smallest finite trial step.
    smallest: Option<Point>,
    eval: &'a mut F,
}

impl<F: FnMut(f64) -> Result<(f64, f64)>> Searcher<'_, F> {
    fn probe(&mut self, step: f64) -> Result<Point> {
        self.evals += 1;
        let (value, slope) = (self.eval)(step)?;
        let p = Point { step, value, slope };
        if value.is_finite() && slope.is_finite() {
            if self.smallest.is_none_or(|s| step < s.step) {
                self.smallest = Some(p);
            }
            if self.armijo(p) && self.best.is_none_or(|b| value < b.value) {
                self.best = Some(p);
            }
        }
        Ok(p)
    }

    fn armijo(&self, p: Point) -> bool {
        p.value <= self.phi0 + self.cfg.c1 * p.step * self.dphi0
    }

    fn curvature(&self, p: Point) -> bool {
        p.slope.abs() <= -self.cfg.c2 * self.dphi0
    }

    fn finite(p: Point) -> bool {
        p.value.is_finite() && p.slope.is_finite()
    }

    fn run(&mut self) -> Result<Option<Point>> {
        let mut prev = Point {
            step: 0.0,
            value: self.phi0,
            slope: self.dphi0,
        };
        let mut step = self.cfg.initial_step;
        let mut first = true;
        while self.evals < self.cfg.max_evals {
            let cur = self.probe(step)?;
            if !Self::finite(cur) || !self.armijo(cur) || (!first && cur.value >= prev.value) {
                return self.zoom(prev, cur);
            }
            if self.curvature(cur) {
                return Ok(Some(cur));
            }
            if cur.slope >= 0.0 {
                return self.zoom(cur, prev);
            }
            prev = cur;
            step *= 2.0;
            first = false;
        }
        Ok(None)
    }

    /// `lo` satisfies sufficient decrease and has the lowest value seen; the
    /// minimizer lies between `lo` and `hi`.
    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Result<Option<Point>> {
        while self.evals < self.cfg.max_evals {
            let step = interpolate(lo, hi);
            if step == lo.step || step == hi.step {
                break;
            }
            let cur = self.probe(step)?;
            if !Self::finite(cur) || !self.armijo(cur) || cur.value >= lo.value {
                hi = cur;
            } else {
                if self.curvature(cur) {
                    return Ok(Some(cur));
                }
                if cur.slope * (hi.step - lo.step) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        Ok(None)
    }
}

/// Minimizer of the quadratic through `φ(lo)`, `φ'(lo)`, `φ(hi)`, kept at
/// least 10% of the interval away from either end.
fn interpolate(lo: Point, hi: Point) -> f64 {
    let (a, b) = (lo.step, hi.step);
    let mid = 0.5 * (a + b);
    let width = b - a;
    if !hi.value.is_finite() {
        return mid;
    }
    let denom = 2.0 * (hi.value - lo.value - lo.slope * width);
    if !(denom.abs() > 0.0) {
        return mid;
    }
    let t = a - lo.slope * width * width / denom;
    let (low, high) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * width.abs();
    if t.is_finite() && t >= low + margin && t <= high - margin {
        t
    } else {
        mid
    }
}

/// Line search for `f(θ - λ g)`. `f` returns the value and gradient at a
/// parameter vector.
pub fn wolfe_step(
    theta: &[f64],
    g: &[f64],
    cfg: &WolfeConfig,
    mut f: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
) -> Result<LineSearchOutcome> {
    if theta.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            found: g.len(),
        });
    }
    let gg: f64 = g.iter().map(|v| v * v).sum();
    if gg == 0.0 {
        return Ok(LineSearchOutcome {
            step: 0.0,
            evals: 0,
            fallback: false,
            value: f(theta)?.0,
        });
    }
    let (phi0, _) = f(theta)?;
    let mut trial = vec![0.0; theta.len()];
    search(phi0, -gg, cfg, |step| {
        for ((t, &th), &gi) in trial.iter_mut().zip(theta).zip(g) {
            *t = th - step * gi;
        }
        let (value, grad) = f(&trial)?;
        let slope = -grad.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
        Ok((value, slope))
    })
}
