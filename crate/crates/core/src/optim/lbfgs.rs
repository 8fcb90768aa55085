//! Projected limited-memory BFGS for box-constrained smooth problems.
//!
//! Variables sitting on a bound with the gradient pushing outward are held
//! fixed for the step; the quasi-Newton direction is computed on the rest and
//! the trial point is projected back onto the box, so every iterate is
//! feasible. Only gradients are used.

use std::collections::VecDeque;

use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BoxOptions {
    pub max_iters: usize,
    pub memory: usize,
    /// Stop when the projected gradient's infinity norm is at most this.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step lowers the objective by at most
    /// `objective_tolerance * max(1, |f|)`.
    pub objective_tolerance: f64,
}

impl Default for BoxOptions {
    fn default() -> Self {
        BoxOptions {
            max_iters: 500,
            memory: 10,
            gradient_tolerance: 1e-10,
            objective_tolerance: 1e-15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerStatus {
    /// Projected gradient below tolerance.
    Stationary,
    /// No further decrease could be found or the decrease fell below tolerance.
    Stalled,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct BoxOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: InnerStatus,
    pub projected_gradient: f64,
}

pub(crate) fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*l, *u);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let moved = (x[i] - g[i]).clamp(lower[i], upper[i]) - x[i];
        worst = worst.max(moved.abs());
    }
    worst
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Memory {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    capacity: usize,
}

impl Memory {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        let scale = (dot(&s, &s) * dot(&y, &y)).sqrt();
        if !(sy > 1e-12 * scale) {
            return;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion on the free coordinates only.
    fn direction(&self, g: &[f64], free: &[bool]) -> Vec<f64> {
        let mask = |v: &mut Vec<f64>| {
            for (x, f) in v.iter_mut().zip(free) {
                if !f {
                    *x = 0.0;
                }
            }
        };
        let mut q = g.to_vec();
        mask(&mut q);
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * masked_dot(s, &q, free);
            for i in 0..q.len() {
                if free[i] {
                    q[i] -= a * y[i];
                }
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let yy = masked_dot(y, y, free);
            let sy = masked_dot(s, y, free);
            if yy > 0.0 && sy > 0.0 {
                let gamma = sy / yy;
                q.iter_mut().for_each(|v| *v *= gamma);
            }
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * masked_dot(y, &q, free);
            for i in 0..q.len() {
                if free[i] {
                    q[i] += (a - b) * s[i];
                }
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

fn masked_dot(a: &[f64], b: &[f64], free: &[bool]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        if free[i] {
            acc += a[i] * b[i];
        }
    }
    acc
}

/// Minimizes `f` over the box `[lower, upper]` starting from the projection
/// of `x0`. `f` returns the objective and overwrites the gradient buffer.
pub fn minimize_box(
    mut f: impl FnMut(&[f64], &mut [f64]) -> f64,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    options: &BoxOptions,
) -> Result<BoxOutcome> {
    let n = x0.len();
    check_len("lower bounds", n, lower.len())?;
    check_len("upper bounds", n, upper.len())?;
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::invalid("lower bound exceeds upper bound"));
    }
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("objective at the starting point"));
    }
    let initial_value = fx;
    let mut memory = Memory {
        pairs: VecDeque::new(),
        capacity: options.memory.max(1),
    };
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut free = vec![true; n];
    let mut status = InnerStatus::IterationLimit;
    let mut iterations = 0;

    while iterations < options.max_iters {
        if projected_gradient_norm(&x, &g, lower, upper) <= options.gradient_tolerance {
            status = InnerStatus::Stationary;
            break;
        }
        for i in 0..n {
            free[i] = !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0));
        }
        let mut d = memory.direction(&g, &free);
        let slope = dot(&g, &d);
        let mut fresh = memory.pairs.is_empty();
        if !(slope < 0.0) {
            memory.pairs.clear();
            d = g.iter().zip(&free).map(|(v, f)| if *f { -v } else { 0.0 }).collect();
            fresh = true;
        }
        let mut alpha = if fresh {
            let dn = dot(&d, &d).sqrt();
            (1.0 / dn).min(1.0)
        } else {
            1.0
        };

        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = (x[i] + alpha * d[i]).clamp(lower[i], upper[i]);
            }
            let f_trial = f(&trial, &mut g_trial);
            evaluations += 1;
            let decrease: f64 = g.iter().zip(&trial).zip(&x).map(|((gi, t), xi)| gi * (t - xi)).sum();
            if f_trial.is_finite()
                && g_trial.iter().all(|v| v.is_finite())
                && f_trial <= fx + 1e-4 * decrease.min(0.0)
                && f_trial <= fx
            {
                accepted = true;
                iterations += 1;
                let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
                memory.push(s, y);
                let drop = fx - f_trial;
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut g, &mut g_trial);
                fx = f_trial;
                if drop <= options.objective_tolerance * fx.abs().max(1.0) {
                    status = InnerStatus::Stalled;
                }
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            if !fresh {
                // Retry once from steepest descent before giving up.
                memory.pairs.clear();
                continue;
            }
            status = InnerStatus::Stalled;
            break;
        }
        if status == InnerStatus::Stalled {
            break;
        }
    }

    let projected_gradient = projected_gradient_norm(&x, &g, lower, upper);
    if status == InnerStatus::IterationLimit && projected_gradient <= options.gradient_tolerance {
        status = InnerStatus::Stationary;
    }
    Ok(BoxOutcome {
        x,
        value: fx,
        initial_value,
        iterations,
        evaluations,
        status,
        projected_gradient,
    })
}
