//! The box-constrained augmented-Lagrangian solver on a small problem:
//! minimize the Rosenbrock function on a box, subject to a circle equality.
//!
//! Usage: cargo run --example solver_basics

use hrt1::optim::{finite_difference_gradient, relative_error, NlpProblem};

fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
    let (a, b) = (1.0 - x[0], x[1] - x[0] * x[0]);
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    a * a + 100.0 * b * b
}

fn main() -> hrt1::Result<()> {
    let x0 = [-1.2, 1.0];
    let mut g = [0.0; 2];
    rosenbrock(&x0, &mut g);
    let fd = finite_difference_gradient(|x| rosenbrock(x, &mut [0.0; 2]), &x0, 1e-6)?;
    println!("gradient check at x0: relative error {:.2e}", relative_error(&g, &fd, 1e-8));

    let free = NlpProblem::new(2, rosenbrock).with_bounds(vec![-2.0, -2.0], vec![2.0, 2.0])?;
    let r = free.solve(&x0)?;
    println!("box only:        x = ({:.6}, {:.6})  f = {:.3e}  converged {}", r.solution[0], r.solution[1], r.objective_value, r.converged);

    let boxed = NlpProblem::new(2, rosenbrock).with_bounds(vec![-2.0, -2.0], vec![0.8, 2.0])?;
    let r = boxed.solve(&x0)?;
    println!("x <= 0.8:        x = ({:.6}, {:.6})  f = {:.3e}  bound violation {}", r.solution[0], r.solution[1], r.objective_value, r.max_bound_violation);

    // x² + y² = 1: the constrained minimum lies on the unit circle.
    let circle = NlpProblem::new(2, rosenbrock)
        .with_bounds(vec![-2.0, -2.0], vec![2.0, 2.0])?
        .with_equality(
            |x: &[f64]| x[0] * x[0] + x[1] * x[1] - 1.0,
            |x: &[f64], g: &mut [f64]| {
                g[0] = 2.0 * x[0];
                g[1] = 2.0 * x[1];
            },
        );
    let r = circle.solve(&[0.9, 0.1])?;
    println!(
        "on unit circle:  x = ({:.6}, {:.6})  f = {:.6}  residual {:.1e}  outer iterations {}",
        r.solution[0], r.solution[1], r.objective_value, r.max_equality_residual, r.iterations
    );
    Ok(())
}
