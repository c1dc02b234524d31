use alloc::format;
use alloc::vec::Vec;

use super::ParamMut;
use crate::perceptron::clamp_non_negative;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub eps: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        Self {
            rho: 0.9,
            eps: 1e-6,
        }
    }
}

/// Adadelta with a learning-rate multiplier on the computed update:
///
/// ```text
/// s  = rho s  + (1 - rho) g^2
/// d  = sqrt(u + eps) / sqrt(s + eps) * g
/// u  = rho u  + (1 - rho) d^2
/// p -= lr d
/// ```
///
/// Parameters flagged non-negative are projected back onto `[0, inf)` after the step.
#[derive(Debug, Clone)]
pub struct Adadelta<T> {
    config: AdadeltaConfig,
    square_avg: Vec<Vec<T>>,
    delta_avg: Vec<Vec<T>>,
}

impl<T: Real> Adadelta<T> {
    pub fn new(config: AdadeltaConfig) -> Self {
        Self {
            config,
            square_avg: Vec::new(),
            delta_avg: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<ParamMut<'_, T>>, grads: &[Vec<T>], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.square_avg.is_empty() {
            self.square_avg = params
                .iter()
                .map(|p| alloc::vec![T::zero(); p.data.len()])
                .collect();
            self.delta_avg = self.square_avg.clone();
        }
        if self.square_avg.len() != params.len() {
            return Err(Error::Shape(
                "optimizer state was built for a different parameter set".into(),
            ));
        }
        let rho = T::lit(self.config.rho);
        let one_minus = T::lit(1.0 - self.config.rho);
        let eps = T::lit(self.config.eps);
        let lr = T::lit(lr);
        for (((param, grad), sq), acc) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.square_avg)
            .zip(&mut self.delta_avg)
        {
            if param.data.len() != grad.len() || sq.len() != grad.len() {
                return Err(Error::Shape(format!(
                    "{}: gradient/state length mismatch",
                    param.name
                )));
            }
            for (((p, &g), s), u) in param
                .data
                .iter_mut()
                .zip(grad)
                .zip(sq.iter_mut())
                .zip(acc.iter_mut())
            {
                *s = rho * *s + one_minus * g * g;
                let d = (*u + eps).sqrt() / (*s + eps).sqrt() * g;
                *u = rho * *u + one_minus * d * d;
                *p -= lr * d;
            }
            if param.non_negative {
                clamp_non_negative(param.data);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;

    fn slot<'a>(data: &'a mut [f64], non_negative: bool) -> ParamMut<'a, f64> {
        ParamMut {
            name: String::from("p"),
            data,
            non_negative,
        }
    }

    #[test]
    fn zero_gradient_or_zero_lr_is_a_no_op() {
        let mut opt = Adadelta::new(AdadeltaConfig::default());
        let mut p = vec![1.0, -2.0];
        opt.step(vec![slot(&mut p, false)], &[vec![0.0, 0.0]], 1.0)
            .unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        let mut opt = Adadelta::new(AdadeltaConfig::default());
        opt.step(vec![slot(&mut p, false)], &[vec![3.0, -1.0]], 0.0)
            .unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn two_steps_match_hand_arithmetic() {
        let (rho, eps, g, lr) = (0.9f64, 1e-6f64, 0.5f64, 1.0f64);
        // Step 1.
        let s1 = (1.0 - rho) * g * g;
        let d1 = (0.0 + eps).sqrt() / (s1 + eps).sqrt() * g;
        let u1 = (1.0 - rho) * d1 * d1;
        // Step 2.
        let s2 = rho * s1 + (1.0 - rho) * g * g;
        let d2 = (u1 + eps).sqrt() / (s2 + eps).sqrt() * g;
        let expected = 2.0 - lr * d1 - lr * d2;

        let mut opt = Adadelta::new(AdadeltaConfig { rho, eps });
        let mut p = vec![2.0];
        opt.step(vec![slot(&mut p, false)], &[vec![g]], lr).unwrap();
        assert!((p[0] - (2.0 - d1)).abs() < 1e-15);
        opt.step(vec![slot(&mut p, false)], &[vec![g]], lr).unwrap();
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_negative_parameters_are_clamped() {
        let mut opt = Adadelta::new(AdadeltaConfig::default());
        let mut t = vec![0.0005, 0.5];
        opt.step(vec![slot(&mut t, true)], &[vec![1.0, -1.0]], 1.0)
            .unwrap();
        assert_eq!(t[0], 0.0);
        assert!(t[1] > 0.5);
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let mut opt = Adadelta::new(AdadeltaConfig::default());
        let mut p = vec![1.0];
        assert!(opt
            .step(vec![slot(&mut p, false)], &[vec![1.0, 2.0]], 1.0)
            .is_err());
        assert!(opt.step(vec![slot(&mut p, false)], &[], 1.0).is_err());
    }
}
