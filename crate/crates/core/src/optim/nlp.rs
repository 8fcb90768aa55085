//! Bound- and equality-constrained nonlinear programs.
//!
//! Equalities are handled by an augmented-Lagrangian outer loop,
//! `L(x) = f(x) + μᵀc(x) + ρ/2 ‖c(x)‖²`, whose subproblems are solved over the
//! box by [`minimize_box`]. Every iterate is projected, so bounds hold exactly.

use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize_box, BoxOptions, InnerStatus};
use crate::error::{check_len, Error, Result};

/// A smooth problem `min f(x)` s.t. `lower ≤ x ≤ upper`, `c(x) = 0`.
pub trait Nlp {
    fn dimension(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    /// Objective value; the gradient is written into `grad`.
    fn objective(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn num_equalities(&self) -> usize {
        0
    }
    fn equalities(&self, _x: &[f64], _out: &mut [f64]) {}
    /// Adds `J(x)ᵀ v` to `grad`, where `J` is the equality Jacobian.
    fn add_equality_jacobian_transpose(&self, _x: &[f64], _v: &[f64], _grad: &mut [f64]) {}
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Largest acceptable |c_k(x)| at the solution.
    pub equality_tolerance: f64,
    pub max_outer_iterations: usize,
    pub inner: BoxOptions,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    /// An outer iteration whose subproblem decreased the augmented objective
    /// by at most this fraction counts as settled even if the inner solver
    /// ran out of iterations.
    pub stall_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            equality_tolerance: 1e-8,
            max_outer_iterations: 100,
            inner: BoxOptions::default(),
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e10,
            stall_tolerance: 1e-5,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.equality_tolerance > 0.0) {
            return Err(Error::invalid("equality tolerance must be positive"));
        }
        if self.max_outer_iterations == 0 || self.inner.max_iters == 0 {
            return Err(Error::invalid("iteration budgets must be at least 1"));
        }
        if !(self.stall_tolerance >= 0.0) {
            return Err(Error::invalid("stall tolerance must be non-negative"));
        }
        if !(self.initial_penalty > 0.0) || !(self.penalty_growth > 1.0) {
            return Err(Error::invalid("penalty must be positive and grow"));
        }
        Ok(())
    }
}

/// One outer iteration of the augmented-Lagrangian loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub penalty: f64,
    /// Augmented objective at the start and end of this subproblem.
    pub augmented_start: f64,
    pub augmented_end: f64,
    pub objective: f64,
    pub max_equality_residual: f64,
    pub inner_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub objective_value: f64,
    /// Outer iterations performed.
    pub iterations: usize,
    pub inner_iterations: usize,
    pub max_bound_violation: f64,
    pub max_equality_residual: f64,
    pub converged: bool,
    pub history: Vec<OuterRecord>,
}

/// Solves `problem` from `x0` (projected onto the box first).
pub fn solve_nlp<P: Nlp + ?Sized>(
    problem: &P,
    x0: &[f64],
    options: &SolverOptions,
) -> Result<SolveReport> {
    options.validate()?;
    let n = problem.dimension();
    check_len("initial point", n, x0.len())?;
    let (lower, upper) = (problem.lower(), problem.upper());
    check_len("lower bounds", n, lower.len())?;
    check_len("upper bounds", n, upper.len())?;
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::invalid("lower bound exceeds upper bound"));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("initial point"));
    }

    let m = problem.num_equalities();
    let mut x = x0.to_vec();
    super::lbfgs::project(&mut x, lower, upper);
    let mut multipliers = vec![0.0; m];
    let mut penalty = options.initial_penalty;
    let mut c = vec![0.0; m];
    let mut history = Vec::new();
    let mut inner_total = 0;
    let mut converged = false;

    problem.equalities(&x, &mut c);
    let mut residual = max_abs(&c);
    if !residual.is_finite() {
        return Err(Error::non_finite("equality constraints at the initial point"));
    }

    for _ in 0..options.max_outer_iterations {
        let mut weights = vec![0.0; m];
        let mut c_buf = vec![0.0; m];
        let augmented = |z: &[f64], grad: &mut [f64]| -> f64 {
            let mut value = problem.objective(z, grad);
            if m > 0 {
                problem.equalities(z, &mut c_buf);
                for k in 0..m {
                    value += multipliers[k] * c_buf[k] + 0.5 * penalty * c_buf[k] * c_buf[k];
                    weights[k] = multipliers[k] + penalty * c_buf[k];
                }
                problem.add_equality_jacobian_transpose(z, &weights, grad);
            }
            value
        };
        let inner = minimize_box(augmented, &x, lower, upper, &options.inner)?;
        inner_total += inner.iterations;
        x = inner.x;

        problem.equalities(&x, &mut c);
        let new_residual = max_abs(&c);
        if !new_residual.is_finite() {
            return Err(Error::non_finite("equality constraints"));
        }
        let mut scratch = vec![0.0; n];
        let objective = problem.objective(&x, &mut scratch);
        history.push(OuterRecord {
            penalty,
            augmented_start: inner.initial_value,
            augmented_end: inner.value,
            objective,
            max_equality_residual: new_residual,
            inner_iterations: inner.iterations,
        });

        let settled = inner.initial_value - inner.value <= options.stall_tolerance * inner.value.abs().max(1e-12);
        let inner_done = inner.status != InnerStatus::IterationLimit || settled;
        if new_residual <= options.equality_tolerance && inner_done {
            residual = new_residual;
            converged = true;
            break;
        }
        for k in 0..m {
            multipliers[k] += penalty * c[k];
        }
        if new_residual > 0.25 * residual && new_residual > options.equality_tolerance {
            penalty = (penalty * options.penalty_growth).min(options.max_penalty);
        }
        residual = new_residual;
    }

    let mut scratch = vec![0.0; n];
    let objective_value = problem.objective(&x, &mut scratch);
    let max_bound_violation = x
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
        .fold(0.0, f64::max);
    Ok(SolveReport {
        solution: x,
        objective_value,
        iterations: history.len(),
        inner_iterations: inner_total,
        max_bound_violation,
        max_equality_residual: residual,
        converged,
        history,
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
}

type Objective<'a> = Box<dyn Fn(&[f64], &mut [f64]) -> f64 + 'a>;
type ValueFn<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;
type GradientFn<'a> = Box<dyn Fn(&[f64], &mut [f64]) + 'a>;

/// A scalar equality `c(x) = 0` with its gradient.
pub struct EqualityConstraint<'a> {
    pub value: ValueFn<'a>,
    pub gradient: GradientFn<'a>,
}

/// An [`Nlp`] assembled from closures.
pub struct NlpProblem<'a> {
    lower: Vec<f64>,
    upper: Vec<f64>,
    objective: Objective<'a>,
    equalities: Vec<EqualityConstraint<'a>>,
    pub options: SolverOptions,
}

impl<'a> NlpProblem<'a> {
    /// Unbounded problem of the given dimension.
    pub fn new(dimension: usize, objective: impl Fn(&[f64], &mut [f64]) -> f64 + 'a) -> Self {
        NlpProblem {
            lower: vec![f64::NEG_INFINITY; dimension],
            upper: vec![f64::INFINITY; dimension],
            objective: Box::new(objective),
            equalities: Vec::new(),
            options: SolverOptions::default(),
        }
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("lower bounds", self.lower.len(), lower.len())?;
        check_len("upper bounds", self.upper.len(), upper.len())?;
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::invalid("lower bound exceeds upper bound"));
        }
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    pub fn with_equality(
        mut self,
        value: impl Fn(&[f64]) -> f64 + 'a,
        gradient: impl Fn(&[f64], &mut [f64]) + 'a,
    ) -> Self {
        self.equalities.push(EqualityConstraint {
            value: Box::new(value),
            gradient: Box::new(gradient),
        });
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.options.equality_tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, iterations: usize) -> Self {
        self.options.max_outer_iterations = iterations;
        self
    }

    pub fn solve(&self, x0: &[f64]) -> Result<SolveReport> {
        solve_nlp(self, x0, &self.options)
    }
}

impl Nlp for NlpProblem<'_> {
    fn dimension(&self) -> usize {
        self.lower.len()
    }

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn objective(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.objective)(x, grad)
    }

    fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    fn equalities(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.equalities) {
            *o = (c.value)(x);
        }
    }

    fn add_equality_jacobian_transpose(&self, x: &[f64], v: &[f64], grad: &mut [f64]) {
        let mut row = vec![0.0; grad.len()];
        for (c, w) in self.equalities.iter().zip(v) {
            row.iter_mut().for_each(|r| *r = 0.0);
            (c.gradient)(x, &mut row);
            for (g, r) in grad.iter_mut().zip(&row) {
                *g += w * r;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn active_bound() {
        let p = NlpProblem::new(1, |x, g| {
            g[0] = 2.0 * (x[0] - 2.0);
            (x[0] - 2.0).powi(2)
        })
        .with_bounds(vec![f64::NEG_INFINITY], vec![1.0])
        .unwrap();
        let r = p.solve(&[0.0]).unwrap();
        assert_eq!(r.solution, vec![1.0]);
        assert!(r.converged);
        assert_eq!(r.max_bound_violation, 0.0);
    }

    #[test]
    fn interior_minimum() {
        let p = NlpProblem::new(1, |x, g| {
            g[0] = 2.0 * (x[0] - 0.5);
            (x[0] - 0.5).powi(2)
        })
        .with_bounds(vec![0.0], vec![1.0])
        .unwrap();
        let r = p.solve(&[0.9]).unwrap();
        assert!((r.solution[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn circle_equality() {
        // min x + y on the unit circle: (-1/√2, -1/√2).
        let p = NlpProblem::new(2, |x, g| {
            g[0] = 1.0;
            g[1] = 1.0;
            x[0] + x[1]
        })
        .with_equality(
            |x| x[0] * x[0] + x[1] * x[1] - 1.0,
            |x, g| {
                g[0] = 2.0 * x[0];
                g[1] = 2.0 * x[1];
            },
        );
        let r = p.solve(&[0.3, 0.1]).unwrap();
        let s = -std::f64::consts::FRAC_1_SQRT_2;
        assert!(r.converged, "{r:?}");
        assert!((r.solution[0] - s).abs() < 1e-6 && (r.solution[1] - s).abs() < 1e-6);
        assert!(r.max_equality_residual <= 1e-8);
        for h in &r.history {
            assert!(h.augmented_end <= h.augmented_start);
        }
    }

    #[test]
    fn non_finite_start_rejected() {
        let p = NlpProblem::new(1, |x, g| {
            g[0] = 1.0;
            x[0].ln()
        })
        .with_bounds(vec![-1.0], vec![1.0])
        .unwrap();
        assert!(matches!(p.solve(&[-0.5]), Err(Error::NonFinite(_))));
    }
}
