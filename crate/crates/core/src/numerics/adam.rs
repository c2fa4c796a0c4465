use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 3e-4;

/// Bias-corrected Adam state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One Adam update of `params` in place.
    ///
    /// Gradients are checked before anything is modified, so a rejected step
    /// leaves both the parameters and the moments untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_dim("adam parameters", self.first_moment.len(), params.len())?;
        check_dim("adam gradients", params.len(), grads.len())?;
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = AdamState::new(3, DEFAULT_LEARNING_RATE);
        let mut p = vec![0.5, -1.0, 2.0];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = AdamState::new(1, DEFAULT_LEARNING_RATE);
        let mut p = vec![1.0];
        adam.step(&mut p, &[1.0]).unwrap();
        // m̂ = v̂ = 1 after bias correction
        let expected = 1.0 - DEFAULT_LEARNING_RATE / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((1.0 - p[0] - DEFAULT_LEARNING_RATE).abs() < 1e-10);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut adam = AdamState::new(1, 0.1);
        let mut x = vec![1.0];
        for _ in 0..1000 {
            let g = [2.0 * x[0]];
            adam.step(&mut x, &g).unwrap();
        }
        assert!(x[0].abs() < 1e-2, "x = {}", x[0]);
        assert_eq!(adam.step_count, 1000);
    }

    #[test]
    fn non_finite_gradient_names_index() {
        let mut adam = AdamState::new(3, 0.1);
        let mut p = vec![1.0, 2.0, 3.0];
        let err = adam.step(&mut p, &[0.0, 0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { index: 2 }));
        assert_eq!(p, vec![1.0, 2.0, 3.0]);
        assert_eq!(adam.step_count, 0);
        assert!(adam.step(&mut p, &[0.0, f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn length_mismatch() {
        let mut adam = AdamState::new(2, 0.1);
        assert!(adam.step(&mut [0.0, 0.0], &[1.0]).is_err());
        assert!(adam.step(&mut [0.0], &[1.0]).is_err());
    }
}
