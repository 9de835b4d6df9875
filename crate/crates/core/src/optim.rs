//! Limited-memory BFGS with a backtracking (Armijo) line search and simple
//! box projection.
//!
//! The objective is minimized. Every accepted step strictly decreases it, so
//! callers maximizing a likelihood get a monotone sequence. The iteration
//! budget is the stopping rule; a vanishing gradient or a failed line search
//! ends the run early.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsConfig {
    pub max_iters: usize,
    pub memory: usize,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_backtracks: usize,
    pub grad_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            memory: 8,
            c1: 1e-4,
            max_backtracks: 30,
            grad_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    /// Accepted steps.
    pub iterations: usize,
    pub evaluations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.max(*l).min(*h);
    }
}

/// Minimizes `f`, which returns the value and gradient at a point. Errors at
/// the starting point are returned; errors or non-finite values at trial
/// points are treated as a rejected step.
pub fn minimize<F, E>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    cfg: &LbfgsConfig,
) -> Result<OptimResult, E>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
{
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n);
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x)?;
    let initial_value = fx;
    let mut evaluations = 1;
    let mut iterations = 0;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();

    if !fx.is_finite() {
        return Ok(OptimResult {
            x,
            value: fx,
            initial_value,
            iterations,
            evaluations,
        });
    }

    while iterations < cfg.max_iters {
        let gnorm = dot(&g, &g).sqrt();
        if !(gnorm > cfg.grad_tol) {
            break;
        }
        // Two-loop recursion.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            for di in d.iter_mut() {
                *di *= gamma;
            }
        } else {
            // First step: unit length in parameter space.
            let scale = 1.0 / gnorm.max(1.0);
            for di in d.iter_mut() {
                *di *= scale;
            }
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        if !(dot(&g, &d) < 0.0) {
            // Not a descent direction: restart from steepest descent.
            history.clear();
            let scale = 1.0 / gnorm.max(1.0);
            d = g.iter().map(|v| -v * scale).collect();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            project(&mut trial, lower, upper);
            evaluations += 1;
            if let Ok((ft, gt)) = f(&trial) {
                // Armijo along the projected step.
                let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                let decrease = dot(&g, &moved).min(0.0);
                if ft.is_finite() && ft < fx && ft <= fx + cfg.c1 * decrease {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fn_;
        g = gn;
        iterations += 1;
    }

    Ok(OptimResult {
        x,
        value: fx,
        initial_value,
        iterations,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>), ()> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        Ok((f, g))
    }

    #[test]
    fn solves_rosenbrock() {
        let cfg = LbfgsConfig {
            max_iters: 200,
            ..Default::default()
        };
        let r = minimize(rosenbrock, &[-1.2, 1.0], &[-10.0; 2], &[10.0; 2], &cfg).unwrap();
        assert!(
            (r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5,
            "{:?}",
            r
        );
    }

    #[test]
    fn respects_box_and_is_monotone() {
        let cfg = LbfgsConfig {
            max_iters: 30,
            ..Default::default()
        };
        let r = minimize(
            |x: &[f64]| {
                let v = (x[0] - 3.0).powi(2);
                Ok::<_, ()>((v, vec![2.0 * (x[0] - 3.0)]))
            },
            &[0.0],
            &[-1.0],
            &[1.0],
            &cfg,
        )
        .unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-12);
        assert!(r.value <= r.initial_value);
    }

    #[test]
    fn single_iteration_never_increases() {
        let cfg = LbfgsConfig {
            max_iters: 1,
            ..Default::default()
        };
        let r = minimize(rosenbrock, &[0.3, -0.8], &[-10.0; 2], &[10.0; 2], &cfg).unwrap();
        assert!(r.value <= r.initial_value);
        assert!(r.iterations <= 1);
    }

    #[test]
    fn error_at_start_is_propagated() {
        let r = minimize(
            |_: &[f64]| Err::<(f64, Vec<f64>), &str>("bad"),
            &[0.0],
            &[-1.0],
            &[1.0],
            &LbfgsConfig::default(),
        );
        assert_eq!(r.unwrap_err(), "bad");
    }
}
