use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop once the gradient's infinity norm falls to this value.
    pub grad_tol: f64,
    /// Ratio of the final step size to the initial one; the step decays
    /// geometrically in between. 1.0 keeps it constant.
    pub final_step_ratio: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            step: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iters: 1000,
            grad_tol: 0.0,
            final_step_ratio: 1.0,
        }
    }
}

impl AdamConfig {
    pub fn new(step: f64, max_iters: usize) -> Self {
        AdamConfig {
            step,
            max_iters,
            ..Self::default()
        }
    }

    pub fn with_decay(mut self, final_step_ratio: f64) -> Self {
        self.final_step_ratio = final_step_ratio;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("adam needs at least one iteration"));
        }
        if !(self.step > 0.0) || !(self.final_step_ratio > 0.0) {
            return Err(Error::invalid("adam step sizes must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AdamOutcome {
    /// Best iterate seen, never worse than the start.
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    /// Best-so-far objective after each iteration; non-increasing.
    pub trace: Vec<f64>,
}

/// Adam on `f`, which returns the objective and writes its gradient.
pub fn adam_minimize(
    f: impl FnMut(&[f64], &mut [f64]) -> f64,
    x0: &[f64],
    config: &AdamConfig,
) -> Result<AdamOutcome> {
    adam_minimize_projected(f, x0, config, |_| {})
}

/// Adam with a projection applied to the iterate after every step, e.g. to
/// renormalize a quaternion block.
pub fn adam_minimize_projected(
    mut f: impl FnMut(&[f64], &mut [f64]) -> f64,
    x0: &[f64],
    config: &AdamConfig,
    mut project: impl FnMut(&mut [f64]),
) -> Result<AdamOutcome> {
    config.validate()?;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];

    let initial_value = f(&x, &mut grad);
    check_finite(initial_value, &grad)?;
    let mut best_x = x.clone();
    let mut best = initial_value;
    let mut trace = Vec::with_capacity(config.max_iters);
    let decay = config.final_step_ratio.powf(1.0 / config.max_iters as f64);
    let mut step = config.step;
    let (mut b1t, mut b2t) = (1.0, 1.0);
    let mut iterations = 0;

    for _ in 0..config.max_iters {
        if grad.iter().all(|g| g.abs() <= config.grad_tol) {
            break;
        }
        iterations += 1;
        b1t *= config.beta1;
        b2t *= config.beta2;
        for i in 0..n {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / (1.0 - b1t);
            let v_hat = v[i] / (1.0 - b2t);
            x[i] -= step * m_hat / (v_hat.sqrt() + config.epsilon);
        }
        project(&mut x);
        step *= decay;
        let value = f(&x, &mut grad);
        check_finite(value, &grad)?;
        if value < best {
            best = value;
            best_x.copy_from_slice(&x);
        }
        trace.push(best);
    }

    Ok(AdamOutcome {
        x: best_x,
        value: best,
        initial_value,
        iterations,
        trace,
    })
}

fn check_finite(value: f64, grad: &[f64]) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::non_finite("adam objective"));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::non_finite("adam gradient"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(c: [f64; 3]) -> impl FnMut(&[f64], &mut [f64]) -> f64 {
        move |x, g| {
            let mut f = 0.0;
            for i in 0..3 {
                g[i] = 2.0 * (x[i] - c[i]);
                f += (x[i] - c[i]).powi(2);
            }
            f
        }
    }

    #[test]
    fn convex_bowl_converges() {
        let c = [1.0, -2.0, 0.5];
        let out = adam_minimize(bowl(c), &[4.0, 3.0, -1.0], &AdamConfig::new(0.1, 2000).with_decay(1e-4))
            .unwrap();
        for i in 0..3 {
            assert!((out.x[i] - c[i]).abs() < 1e-6, "{:?}", out.x);
        }
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn stationary_start_does_not_move() {
        let c = [1.0, 2.0, 3.0];
        let out = adam_minimize(bowl(c), &c, &AdamConfig::new(0.1, 50)).unwrap();
        assert_eq!(out.x, c.to_vec());
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn rosenbrock_reference_run() {
        let rosen = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let out = adam_minimize(rosen, &[-1.2, 1.0], &AdamConfig::new(1e-3, 20000)).unwrap();
        assert!(out.value < 1e-3, "f = {}", out.value);
        let first_below = out.trace.iter().position(|f| *f < 1e-3).unwrap() + 1;
        assert_eq!(first_below, ROSENBROCK_FIRST_BELOW);
    }

    // Recorded from a reference run of exactly this configuration.
    const ROSENBROCK_FIRST_BELOW: usize = 9692;

    #[test]
    fn non_finite_objective_is_an_error() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 1.0;
            if x[0] < 0.5 {
                f64::NAN
            } else {
                x[0]
            }
        };
        assert!(matches!(
            adam_minimize(f, &[0.6], &AdamConfig::new(0.2, 10)),
            Err(Error::NonFinite(_))
        ));
    }
}
