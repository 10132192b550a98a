//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The objective is minimized. It may refuse a point by returning `None`,
//! which the line search treats as `+inf`, so iterates never leave the
//! feasible region and accepted values strictly decrease.

use std::collections::VecDeque;

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_BRACKET: usize = 25;
const MAX_ZOOM: usize = 30;
const REL_VALUE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub max_iterations: usize,
    /// Stop once the max-norm of the gradient falls below this.
    pub gradient_tolerance: f64,
    pub memory: usize,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Objective at the start point and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + a * di).collect()
}

/// Returns `None` when the start point itself is infeasible.
pub fn minimize<F>(mut f: F, x0: &[f64], settings: Settings) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let (f0, g0) = f(x0).filter(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()))?;
    let mut cur = Point { x: x0.to_vec(), f: f0, g: g0 };
    let mut trace = vec![cur.f];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < settings.max_iterations {
        if max_abs(&cur.g) < settings.gradient_tolerance {
            converged = true;
            break;
        }
        let mut d = two_loop(&cur.g, &history);
        let mut slope = dot(&d, &cur.g);
        if !(slope < 0.0) {
            history.clear();
            d = cur.g.iter().map(|v| -v).collect();
            slope = dot(&d, &cur.g);
        }
        let step0 = if history.is_empty() { (1.0 / max_abs(&cur.g)).min(1.0) } else { 1.0 };
        let next = match line_search(&mut f, &cur, &d, slope, step0) {
            Some(p) => p,
            None if !history.is_empty() => {
                history.clear();
                continue;
            }
            None => break,
        };
        iterations += 1;
        let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == settings.memory.max(1) {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = cur.f - next.f;
        cur = next;
        trace.push(cur.f);
        if decrease <= REL_VALUE_TOL * cur.f.abs().max(1.0) {
            converged = max_abs(&cur.g) < settings.gradient_tolerance;
            break;
        }
    }
    if !converged && max_abs(&cur.g) < settings.gradient_tolerance {
        converged = true;
    }
    Some(Minimum { x: cur.x, value: cur.f, gradient: cur.g, trace, iterations, converged })
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

struct Trial {
    step: f64,
    f: f64,
    slope: f64,
    point: Option<Point>,
}

fn probe<F>(f: &mut F, cur: &Point, d: &[f64], step: f64) -> Trial
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let x = axpy(&cur.x, step, d);
    match f(&x) {
        Some((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()) => {
            let slope = dot(&g, d);
            Trial { step, f: v, slope, point: Some(Point { x, f: v, g }) }
        }
        _ => Trial { step, f: f64::INFINITY, slope: f64::NAN, point: None },
    }
}

// Nocedal and Wright, algorithms 3.5 and 3.6.
fn line_search<F>(f: &mut F, cur: &Point, d: &[f64], slope0: f64, step0: f64) -> Option<Point>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let armijo = |t: &Trial| t.f <= cur.f + C1 * t.step * slope0;
    let curvature = |t: &Trial| t.slope.abs() <= -C2 * slope0;
    let mut prev = Trial { step: 0.0, f: cur.f, slope: slope0, point: None };
    let mut step = step0;
    for i in 0..MAX_BRACKET {
        let t = probe(f, cur, d, step);
        if !armijo(&t) || (i > 0 && t.f >= prev.f) {
            return zoom(f, cur, d, slope0, prev, t);
        }
        if curvature(&t) {
            return t.point;
        }
        if t.slope >= 0.0 {
            return zoom(f, cur, d, slope0, t, prev);
        }
        step *= 2.0;
        prev = t;
    }
    prev.point
}

fn zoom<F>(f: &mut F, cur: &Point, d: &[f64], slope0: f64, mut lo: Trial, mut hi: Trial) -> Option<Point>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    for _ in 0..MAX_ZOOM {
        let (a, b) = (lo.step.min(hi.step), lo.step.max(hi.step));
        let width = b - a;
        if width <= 1e-16 * b.max(1.0) {
            break;
        }
        // Quadratic through lo's value and slope and hi's value, safeguarded.
        let mut step = 0.5 * (lo.step + hi.step);
        if hi.f.is_finite() {
            let h = hi.step - lo.step;
            let denom = 2.0 * (hi.f - lo.f - lo.slope * h);
            if denom > 0.0 {
                let cand = lo.step - lo.slope * h * h / denom;
                if cand > a + 0.1 * width && cand < b - 0.1 * width {
                    step = cand;
                }
            }
        }
        let t = probe(f, cur, d, step);
        if !(t.f <= cur.f + C1 * step * slope0) || t.f >= lo.f {
            hi = t;
        } else {
            if t.slope.abs() <= -C2 * slope0 {
                return t.point;
            }
            if t.slope * (hi.step - lo.step) >= 0.0 {
                hi = std::mem::replace(&mut lo, t);
            } else {
                lo = t;
            }
        }
    }
    // Fall back to the best point with sufficient decrease, if any.
    lo.point
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> Settings {
        Settings { max_iterations: 200, gradient_tolerance: 1e-8, memory: 8 }
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Some((v, g))
        };
        let m = minimize(f, &[-1.2, 1.0], settings()).unwrap();
        assert!(m.converged, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn stationary_start_takes_no_steps() {
        let f = |x: &[f64]| Some((x[0] * x[0], vec![2.0 * x[0]]));
        let m = minimize(f, &[0.0], settings()).unwrap();
        assert_eq!(m.iterations, 0);
        assert_eq!(m.x, vec![0.0]);
    }

    #[test]
    fn infeasible_region_is_avoided() {
        // Minimum of (x - 3)^2 lies beyond the wall at x = 2.
        let f = |x: &[f64]| if x[0] < 2.0 { Some(((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)])) } else { None };
        let m = minimize(f, &[0.0], settings()).unwrap();
        assert!(m.x[0] < 2.0 && m.x[0] > 1.9);
        assert!(m.trace.windows(2).all(|w| w[1] < w[0]));
        assert!(minimize(f, &[5.0], settings()).is_none());
    }
}
