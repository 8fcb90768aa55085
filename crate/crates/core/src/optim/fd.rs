use crate::error::{Error, Result};

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_difference_gradient(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    diff / norm(a).max(norm(b)).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_is_exact_for_any_step() {
        let f = |x: &[f64]| 3.0 * x[0] - 2.0 * x[1] + 0.5;
        for h in [1e-1, 1.0, 7.0] {
            let g = finite_difference_gradient(f, &[0.3, -4.0], h).unwrap();
            assert!((g[0] - 3.0).abs() < 1e-12 && (g[1] + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_is_exact_up_to_rounding() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[0] * x[1];
        let g = finite_difference_gradient(f, &[1.0, 2.0], 0.5).unwrap();
        assert!((g[0] - 8.0).abs() < 1e-12 && (g[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn error_shrinks_quadratically() {
        let f = |x: &[f64]| x[0].sin() * x[1].exp();
        let x = [0.7, 0.3];
        let exact = [0.7f64.cos() * 0.3f64.exp(), 0.7f64.sin() * 0.3f64.exp()];
        let err = |h: f64| {
            let g = finite_difference_gradient(f, &x, h).unwrap();
            ((g[0] - exact[0]).powi(2) + (g[1] - exact[1]).powi(2)).sqrt()
        };
        let ratio = err(1e-2) / err(5e-3);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn rejects_nonpositive_step() {
        assert!(finite_difference_gradient(|x| x[0], &[1.0], 0.0).is_err());
    }
}
