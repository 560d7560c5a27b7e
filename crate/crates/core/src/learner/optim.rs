//! Adam with bias correction.

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(param_len: usize) -> Self {
        Self {
            first_moment: vec![0.0; param_len],
            second_moment: vec![0.0; param_len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update of `params` against `grads`.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        cfg: &AdamParams,
    ) -> Result<(), TrainError> {
        debug_assert_eq!(params.len(), grads.len());
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteGradient { step: self.step });
        }
        self.step += 1;
        let bias1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bias2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.first_moment[i] = cfg.beta1 * self.first_moment[i] + (1.0 - cfg.beta1) * g;
            self.second_moment[i] =
                cfg.beta2 * self.second_moment[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.first_moment[i] / bias1;
            let v_hat = self.second_moment[i] / bias2;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![1.0, -2.0, 0.5];
        let mut state = AdamState::new(3);
        state.step(&mut params, &[0.0; 3], &AdamParams::default()).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // With zero state, m_hat = g and v_hat = g^2, so the first update is
        // lr * g / (|g| + eps) ~ lr * sign(g).
        let cfg = AdamParams::default();
        let mut params = vec![0.0];
        let mut state = AdamState::new(1);
        state.step(&mut params, &[0.37], &cfg).unwrap();
        assert!((params[0] + cfg.learning_rate).abs() < 1e-6, "step {}", params[0]);
    }

    #[test]
    fn constant_gradient_approaches_signed_learning_rate_steps() {
        let cfg = AdamParams::default();
        let mut params = vec![0.0];
        let mut state = AdamState::new(1);
        for _ in 0..200 {
            state.step(&mut params, &[-2.5], &cfg).unwrap();
        }
        let before = params[0];
        state.step(&mut params, &[-2.5], &cfg).unwrap();
        let delta = params[0] - before;
        assert!((delta - cfg.learning_rate).abs() < 1e-5, "asymptotic step {delta}");
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut params = vec![0.0];
        let mut state = AdamState::new(1);
        let err = state.step(&mut params, &[f64::NAN], &AdamParams::default());
        assert!(matches!(err, Err(TrainError::NonFiniteGradient { .. })));
    }
}
