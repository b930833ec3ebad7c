//! Plain Adam with bias correction over a flat parameter vector.
//!
//! No weight decay: decaying control-point coordinates toward the origin has
//! no geometric meaning for this problem.

#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> AdamParams {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> OptimizerState {
        OptimizerState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. Returns the index of the first non-finite
    /// gradient instead of updating, so callers can name the variable.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        learning_rate: f64,
        cfg: &AdamParams,
    ) -> Result<(), usize> {
        assert_eq!(params.len(), self.m.len(), "state shape mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient shape mismatch");
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(bad);
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut state = OptimizerState::new(1);
        let mut params = vec![0.0];
        state
            .step(&mut params, &[1.0], 1e-3, &AdamParams::default())
            .unwrap();
        // m̂ = g, v̂ = g² on the first step, so Δ = −lr·g/(|g| + ε).
        assert!((params[0] + 1e-3).abs() < 1e-10, "got {}", params[0]);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut state = OptimizerState::new(3);
        let mut params = vec![1.0, -2.0, 0.5];
        let before = params.clone();
        for _ in 0..10 {
            state
                .step(&mut params, &[0.0, 0.0, 0.0], 0.1, &AdamParams::default())
                .unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn matches_scalar_reference_for_constant_gradient() {
        // Hand-rolled scalar Adam, updated independently.
        let cfg = AdamParams::default();
        let lr = 0.01;
        let g = 0.7;
        let (mut m, mut v, mut x_ref) = (0.0f64, 0.0f64, 1.0f64);
        let mut state = OptimizerState::new(1);
        let mut params = vec![1.0];
        for t in 1..=2 {
            state.step(&mut params, &[g], lr, &cfg).unwrap();
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let mh = m / (1.0 - cfg.beta1.powi(t));
            let vh = v / (1.0 - cfg.beta2.powi(t));
            x_ref -= lr * mh / (vh.sqrt() + cfg.epsilon);
            assert!((params[0] - x_ref).abs() < 1e-12, "step {t}");
        }
    }

    #[test]
    fn nan_gradient_reports_offending_index() {
        let mut state = OptimizerState::new(3);
        let mut params = vec![0.0; 3];
        let err = state
            .step(&mut params, &[0.0, f64::NAN, 0.0], 0.1, &AdamParams::default())
            .unwrap_err();
        assert_eq!(err, 1);
        // Parameters untouched on abort.
        assert_eq!(params, vec![0.0; 3]);
    }
}
