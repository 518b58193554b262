//! Adam with bias correction, shared by CM training and filter optimisation.
//!
//! Both callers minimise: the attack hands in the negated objective gradient
//! so one update path serves gradient descent and ascent alike.

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamMoments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step_count: u64,
}

impl AdamMoments {
    pub fn zeros(n: usize) -> Self {
        AdamMoments {
            first: vec![0.0; n],
            second: vec![0.0; n],
            step_count: 0,
        }
    }

    /// One Adam descent step: updates moments in place and applies the
    /// bias-corrected update to `params`. `gradient` is the descent gradient.
    pub fn step(&mut self, params: &mut [f64], gradient: &[f64], hyper: &AdamHyper) {
        assert_eq!(params.len(), gradient.len());
        assert_eq!(params.len(), self.first.len());
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - hyper.beta1.powi(t);
        let bias2 = 1.0 - hyper.beta2.powi(t);
        for i in 0..params.len() {
            let g = gradient[i];
            self.first[i] = hyper.beta1 * self.first[i] + (1.0 - hyper.beta1) * g;
            self.second[i] = hyper.beta2 * self.second[i] + (1.0 - hyper.beta2) * g * g;
            let m_hat = self.first[i] / bias1;
            let v_hat = self.second[i] / bias2;
            params[i] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![0.3, -0.7, 2.0];
        let mut state = AdamMoments::zeros(3);
        state.step(&mut params, &[0.0; 3], &AdamHyper::default());
        assert_eq!(params, vec![0.3, -0.7, 2.0]);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With fresh moments the bias-corrected ratio is g/|g|, so the first
        // step moves each coordinate by ~lr against the gradient sign.
        let hyper = AdamHyper {
            learning_rate: 0.01,
            ..AdamHyper::default()
        };
        let mut params = vec![1.0, -1.0];
        let mut state = AdamMoments::zeros(2);
        state.step(&mut params, &[3.0, -0.2], &hyper);
        assert!((params[0] - (1.0 - 0.01)).abs() < 1e-6);
        assert!((params[1] - (-1.0 + 0.01)).abs() < 1e-6);
    }
}
