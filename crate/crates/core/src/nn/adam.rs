//! Adam with bias correction (`beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first_moment: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            second_moment: first_moment.clone(),
            first_moment,
            step_count: 0,
        }
    }
}

/// One Adam update. `params` pairs each tensor with a name used in errors.
///
/// All gradients are checked before any parameter is touched, so a
/// non-finite gradient leaves params and state unchanged.
pub fn adam_step(params: &mut [(String, &mut Tensor)], grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::shape(
            "adam_step: parameter count",
            &[params.len()],
            &[grads.len(), state.first_moment.len()],
        ));
    }
    for (i, ((name, p), g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first_moment[i].shape() {
            return Err(Error::shape("adam_step", p.shape(), g.shape()));
        }
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient { name: name.clone() });
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for (i, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = BETA1 * m[j] + (1.0 - BETA1) * gj;
            v[j] = BETA2 * v[j] + (1.0 - BETA2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::new(&[1], vec![v]).unwrap()
    }

    #[test]
    fn zero_grad_keeps_params() {
        let mut p = Tensor::from_fn(&[2, 2], |i| i as f64);
        let before = p.clone();
        let mut st = AdamState::new([&p]);
        adam_step(&mut [("w".into(), &mut p)], &[Tensor::zeros(&[2, 2])], &mut st, 1e-3).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = scalar(0.0);
        let mut st = AdamState::new([&p]);
        adam_step(&mut [("w".into(), &mut p)], &[scalar(1.0)], &mut st, 1e-3).unwrap();
        // m_hat = 1, v_hat = 1
        let expected = -1e-3 * (1.0 / (1.0 + 1e-8));
        assert!((p.data()[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn two_identical_steps_closed_form() {
        let g = 0.5;
        let lr = 1e-3;
        let mut p = scalar(0.0);
        let mut st = AdamState::new([&p]);
        adam_step(&mut [("w".into(), &mut p)], &[scalar(g)], &mut st, lr).unwrap();
        let after_one = p.data()[0];
        adam_step(&mut [("w".into(), &mut p)], &[scalar(g)], &mut st, lr).unwrap();
        // With a constant gradient, m = g(1 - b1^t) and v = g^2(1 - b2^t),
        // so both bias-corrected moments equal g and g^2 exactly.
        let m2 = g * (1.0 - BETA1 * BETA1);
        let v2 = g * g * (1.0 - BETA2 * BETA2);
        let m_hat = m2 / (1.0 - BETA1 * BETA1);
        let v_hat = v2 / (1.0 - BETA2 * BETA2);
        let second = -lr * m_hat / (v_hat.sqrt() + EPSILON);
        assert!((p.data()[0] - after_one - second).abs() < 1e-15);
        assert!((second - (-lr * g / (g + EPSILON))).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new([&p]);
        let err = adam_step(
            &mut [("gen.layer2.kernel".into(), &mut p)],
            &[scalar(f64::NAN)],
            &mut st,
            1e-3,
        )
        .unwrap_err();
        assert!(err.to_string().contains("gen.layer2.kernel"));
        assert_eq!(st.step_count, 0);
        assert_eq!(p.data()[0], 1.0);
    }
}
