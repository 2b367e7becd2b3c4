use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// First/second moment accumulators, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: impl IntoIterator<Item = [usize; 2]>) -> Self {
        let (first, second) = shapes
            .into_iter()
            .map(|[r, c]| (Tensor::zeros(r, c), Tensor::zeros(r, c)))
            .unzip();
        Self {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// Fails without touching anything if a gradient is non-finite or shapes
/// disagree.
pub fn adam_step<'a, I>(params: I, grads: &[Tensor], state: &mut AdamState) -> Result<()>
where
    I: IntoIterator<Item = &'a mut Tensor>,
{
    let params: Vec<&mut Tensor> = params.into_iter().collect();
    if params.len() != grads.len() || grads.len() != state.first.len() {
        return Err(Error::InvalidArgument(format!(
            "adam_step: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || g.shape() != state.first[i].shape() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: p.shape(),
                rhs: g.shape(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter {i}")));
        }
    }

    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for (((x, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *x -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(x: f64) -> Tensor {
        Tensor::scalar(x)
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = [Tensor::row(vec![1.0, -2.0])];
        let mut st = AdamState::new(AdamConfig::default(), [[1, 2]]);
        adam_step(p.iter_mut(), &[Tensor::zeros(1, 2)], &mut st).unwrap();
        assert_eq!(p[0].data(), &[1.0, -2.0]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        for g in [0.3, -7.0, 1e-3] {
            let mut p = [one(0.0)];
            let cfg = AdamConfig::with_learning_rate(0.01);
            let mut st = AdamState::new(cfg, [[1, 1]]);
            adam_step(p.iter_mut(), &[one(g)], &mut st).unwrap();
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((p[0].item() - expected).abs() < 1e-15);
            assert!((p[0].item().abs() - 0.01).abs() < 1e-7);
        }
    }

    #[test]
    fn second_identical_step_matches_first() {
        // With a repeated gradient both bias-corrected moments reproduce the
        // first step exactly (m_hat = g, v_hat = g^2), up to rounding.
        let mut p = [one(0.0)];
        let mut st = AdamState::new(AdamConfig::with_learning_rate(0.1), [[1, 1]]);
        adam_step(p.iter_mut(), &[one(0.5)], &mut st).unwrap();
        let first = p[0].item().abs();
        let before = p[0].item();
        adam_step(p.iter_mut(), &[one(0.5)], &mut st).unwrap();
        let second = (p[0].item() - before).abs();
        assert!((second - first).abs() < 1e-15, "{second} vs {first}");
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = [one(1.0)];
        let mut st = AdamState::new(AdamConfig::default(), [[1, 1]]);
        assert!(adam_step(p.iter_mut(), &[one(f64::NAN)], &mut st).is_err());
        assert_eq!(p[0].item(), 1.0);
        assert_eq!(st.step_count(), 0);
    }
}
