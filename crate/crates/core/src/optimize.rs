//! Limited-memory BFGS with a strong-Wolfe line search.

use serde::{Deserialize, Serialize};

use crate::error::{LorError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub max_iterations: usize,
    /// Number of stored correction pairs.
    pub memory: usize,
    /// Stop when `|g| < grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
    /// Stop when an accepted step moves the parameters less than this.
    pub step_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
    /// Length of the first trial step along the steepest-descent direction.
    pub initial_step: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_iterations: 100,
            memory: 10,
            grad_tol: 1e-6,
            step_tol: 1e-8,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
            initial_step: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub params: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    /// Parameter-space length of the step that produced this iterate.
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub evaluations: usize,
}

impl OptimizationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_value(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.value)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Counted<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>> Counted<F> {
    /// Evaluation failures that mean "this point is unusable" become `+inf`.
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.evaluations += 1;
        match (self.f)(x) {
            Ok((v, g)) if v.is_finite() && g.iter().all(|c| c.is_finite()) => Ok((v, g)),
            Ok((_, g)) => Ok((f64::INFINITY, vec![0.0; g.len()])),
            Err(LorError::NoOverlap) | Err(LorError::DegenerateHistogram(_)) | Err(LorError::EmptyHistogram) => {
                Ok((f64::INFINITY, vec![0.0; x.len()]))
            }
            Err(e) => Err(e),
        }
    }
}

struct Point {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

/// Minimizes `f`, which returns the value and gradient. On line-search
/// failure the last accepted iterate is returned and the trace says so.
pub fn minimize<F>(f: F, x0: &[f64], opts: &OptimizerOptions) -> Result<(Vec<f64>, OptimizationTrace)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut fun = Counted { f, evaluations: 0 };
    let mut x = x0.to_vec();
    let (mut fx, mut g) = fun.eval(&x)?;
    if !fx.is_finite() {
        return Err(LorError::InvalidParameter(
            "objective is not finite at the initial point".into(),
        ));
    }
    let mut records = vec![IterationRecord {
        iteration: 0,
        params: x.clone(),
        value: fx,
        grad_norm: norm(&g),
        step: 0.0,
    }];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut termination = Termination::MaxIterations;
    for iteration in 1..=opts.max_iterations {
        let gn = norm(&g);
        if gn < opts.grad_tol * (1.0 + fx.abs()) {
            termination = Termination::GradientTolerance;
            break;
        }
        let mut d = two_loop(&g, &s_hist, &y_hist);
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            // not a descent direction: restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -gn * gn;
        }
        let alpha0 = if s_hist.is_empty() {
            opts.initial_step / norm(&d)
        } else {
            1.0
        };
        let Some(p) = line_search(&mut fun, &x, fx, &d, slope, alpha0, opts)? else {
            termination = Termination::LineSearchFailure;
            break;
        };
        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step = norm(&s);
        if dot(&s, &y) > 1e-12 * step * norm(&y) {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        x = p.x;
        fx = p.value;
        g = p.grad;
        records.push(IterationRecord {
            iteration,
            params: x.clone(),
            value: fx,
            grad_norm: norm(&g),
            step,
        });
        if step < opts.step_tol {
            termination = Termination::StepTolerance;
            break;
        }
    }
    Ok((
        x,
        OptimizationTrace {
            records,
            termination,
            evaluations: fun.evaluations,
        },
    ))
}

/// `-H g` from the stored pairs, with the usual `s.y / y.y` initial scaling.
fn two_loop(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let mut q = g.to_vec();
    let k = s_hist.len();
    let mut a = vec![0.0; k];
    let rho: Vec<f64> = (0..k).map(|i| 1.0 / dot(&y_hist[i], &s_hist[i])).collect();
    for i in (0..k).rev() {
        a[i] = rho[i] * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= a[i] * yj;
        }
    }
    if k > 0 {
        let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
        for v in q.iter_mut() {
            *v *= gamma;
        }
    }
    for i in 0..k {
        let b = rho[i] * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (a[i] - b) * sj;
        }
    }
    q.iter().map(|v| -v).collect()
}

fn trial<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>>(
    fun: &mut Counted<F>,
    x: &[f64],
    d: &[f64],
    alpha: f64,
) -> Result<Point> {
    let xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
    let (value, grad) = fun.eval(&xt)?;
    Ok(Point {
        alpha,
        value,
        slope: dot(&grad, d),
        x: xt,
        grad,
    })
}

/// Minimizer of the cubic through two points with slopes, kept inside the
/// bracket; falls back to bisection.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let mid = 0.5 * (a + b);
    if !hi.value.is_finite() {
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (min, max) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (max - min);
    if t.is_finite() && t > min + margin && t < max - margin {
        t
    } else {
        mid
    }
}

/// Bracketing phase followed by zoom; `None` when no acceptable point is
/// found within the budget.
fn line_search<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>>(
    fun: &mut Counted<F>,
    x: &[f64],
    f0: f64,
    d: &[f64],
    slope0: f64,
    alpha0: f64,
    opts: &OptimizerOptions,
) -> Result<Option<Point>> {
    let origin = Point {
        alpha: 0.0,
        value: f0,
        slope: slope0,
        x: x.to_vec(),
        grad: Vec::new(),
    };
    let armijo = |p: &Point| p.value <= f0 + opts.c1 * p.alpha * slope0;
    let curvature = |p: &Point| p.slope.abs() <= -opts.c2 * slope0;
    let mut prev = origin;
    let mut alpha = alpha0;
    let mut budget = opts.max_line_search;
    let mut best: Option<Point> = None;
    let (mut lo, mut hi);
    loop {
        if budget == 0 {
            return Ok(best);
        }
        budget -= 1;
        let p = trial(fun, x, d, alpha)?;
        if armijo(&p) && best.as_ref().map_or(true, |b| p.value < b.value) {
            best = Some(Point {
                grad: p.grad.clone(),
                x: p.x.clone(),
                ..p
            });
        }
        if !armijo(&p) || (prev.alpha > 0.0 && p.value >= prev.value) {
            lo = prev;
            hi = p;
            break;
        }
        if curvature(&p) {
            return Ok(Some(p));
        }
        if p.slope >= 0.0 {
            lo = p;
            hi = prev;
            break;
        }
        prev = p;
        alpha *= 2.0;
    }
    loop {
        if budget == 0 || (hi.alpha - lo.alpha).abs() < 1e-14 * lo.alpha.abs().max(1e-300) {
            return Ok(best);
        }
        budget -= 1;
        let a = interpolate(&lo, &hi);
        let p = trial(fun, x, d, a)?;
        if armijo(&p) && best.as_ref().map_or(true, |b| p.value < b.value) {
            best = Some(Point {
                grad: p.grad.clone(),
                x: p.x.clone(),
                ..p
            });
        }
        if !armijo(&p) || p.value >= lo.value {
            hi = p;
        } else {
            if curvature(&p) {
                return Ok(Some(p));
            }
            if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn solves_rosenbrock() {
        let opts = OptimizerOptions {
            max_iterations: 200,
            grad_tol: 1e-10,
            ..Default::default()
        };
        let (x, trace) = minimize(rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        assert!(
            (x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6,
            "{x:?} {:?}",
            trace.termination
        );
        for w in trace.records.windows(2) {
            assert!(w[1].value <= w[0].value);
        }
    }

    #[test]
    fn quadratic_in_few_steps() {
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let v = 0.5 * (x[0] * x[0] + 10.0 * x[1] * x[1] + 3.0 * x[2] * x[2]);
            Ok((v, vec![x[0], 10.0 * x[1], 3.0 * x[2]]))
        };
        let (x, trace) = minimize(f, &[3.0, -1.0, 2.0], &OptimizerOptions::default()).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-5));
        assert!(trace.iterations() < 15);
        assert_eq!(trace.termination, Termination::GradientTolerance);
    }

    #[test]
    fn stationary_start_terminates_immediately() {
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((x[0] * x[0], vec![2.0 * x[0]])) };
        let (x, trace) = minimize(f, &[0.0], &OptimizerOptions::default()).unwrap();
        assert_eq!(x, vec![0.0]);
        assert_eq!(trace.iterations(), 0);
        assert_eq!(trace.evaluations, 1);
    }

    #[test]
    fn failed_regions_are_avoided() {
        // objective undefined beyond x = 2
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            if x[0] > 2.0 {
                Err(LorError::NoOverlap)
            } else {
                Ok(((x[0] - 1.5).powi(2), vec![2.0 * (x[0] - 1.5)]))
            }
        };
        let opts = OptimizerOptions {
            initial_step: 10.0,
            ..Default::default()
        };
        let (x, _) = minimize(f, &[-3.0], &opts).unwrap();
        assert!((x[0] - 1.5).abs() < 1e-5);
    }
}
