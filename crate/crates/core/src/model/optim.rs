//! Full-batch L-BFGS with a monotone backtracking (Armijo) line search.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numeric::inf_norm;

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

#[derive(Debug, Clone)]
pub(crate) struct PolishOutcome {
    pub params: Vec<f64>,
    pub iterations: usize,
    /// Objective value after every accepted step, starting with the initial one.
    #[cfg_attr(not(test), allow(dead_code))]
    pub trace: Vec<f64>,
}

/// Minimizes `f` from `x0` until the gradient infinity-norm drops below
/// `tol`, `max_iter` steps have been taken, or no further decrease can be
/// found. Every accepted step satisfies the Armijo condition, so the
/// objective trace never increases.
pub(crate) fn lbfgs<F>(
    mut f: F,
    x0: Vec<f64>,
    memory: usize,
    max_iter: usize,
    tol: f64,
) -> Result<PolishOutcome>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    check_finite(fx, &g)?;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(memory);
    let mut trace = vec![fx];
    let mut iterations = 0;

    while iterations < max_iter && inf_norm(&g) >= tol {
        let mut dir = two_loop(&g, &history);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }
        let mut step = if history.is_empty() {
            (1.0 / inf_norm(&g)).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + ARMIJO_C1 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if history.is_empty() {
                break;
            }
            // stale curvature pairs; retry once from steepest descent
            history.clear();
            continue;
        };
        check_finite(f_new, &g_new)?;

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);
        iterations += 1;
    }

    Ok(PolishOutcome {
        params: x,
        iterations,
        trace,
    })
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
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
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_finite(value: f64, gradient: &[f64]) -> Result<()> {
    if !value.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "objective diverged (value {value}, gradient inf-norm {})",
            inf_norm(gradient)
        )));
    }
    Ok(())
}
