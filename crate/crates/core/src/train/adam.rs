use serde::{Deserialize, Serialize};

use crate::error::{FuseError, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let m: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            step: 0,
            v: m.clone(),
            m,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    hyper: &AdamHyper,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(FuseError::Config(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        p.expect_shape("adam_step", g.shape())?;
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            let gi = gi.as_f64();
            let m_new = hyper.beta1 * mi.as_f64() + (1.0 - hyper.beta1) * gi;
            let v_new = hyper.beta2 * vi.as_f64() + (1.0 - hyper.beta2) * gi * gi;
            *mi = T::lit(m_new);
            *vi = T::lit(v_new);
            let update = hyper.lr * (m_new / bc1) / ((v_new / bc2).sqrt() + hyper.eps);
            *w = T::lit(w.as_f64() - update);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::full([1, 1, 1, 1], v)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(0.7);
        let mut st = AdamState::new([&p]);
        st.m[0] = scalar(0.5);
        st.v[0] = scalar(0.25);
        adam_step(&mut [&mut p], &[scalar(0.0)], &mut st, &AdamHyper::default()).unwrap();
        assert_eq!(p.item(0)[0], 0.7 - 1e-3 * (0.45 / 0.1) / ((0.24975f64 / 0.001).sqrt() + 1e-8));
        assert!((st.m[0].item(0)[0] - 0.45).abs() < 1e-15);
        assert!((st.v[0].item(0)[0] - 0.24975).abs() < 1e-15);

        let mut q = scalar(0.7);
        let mut fresh = AdamState::new([&q]);
        adam_step(&mut [&mut q], &[scalar(0.0)], &mut fresh, &AdamHyper::default()).unwrap();
        assert_eq!(q.item(0)[0], 0.7);
    }

    #[test]
    fn constant_gradient_steps_by_lr() {
        let h = AdamHyper::default();
        let mut p = scalar(0.0);
        let mut st = AdamState::new([&p]);
        let mut prev = 0.0;
        for _ in 0..2000 {
            adam_step(&mut [&mut p], &[scalar(3.0)], &mut st, &h).unwrap();
            let now = p.item(0)[0];
            assert!(((prev - now) - h.lr).abs() < 1e-3 * h.lr);
            prev = now;
        }
    }

    #[test]
    fn quadratic_converges() {
        let h = AdamHyper {
            lr: 0.05,
            ..AdamHyper::default()
        };
        let mut p = scalar(1.0);
        let mut st = AdamState::new([&p]);
        let mut best = f64::INFINITY;
        for _ in 0..500 {
            let g = scalar(2.0 * p.item(0)[0]);
            adam_step(&mut [&mut p], &[g], &mut st, &h).unwrap();
            best = best.min(p.item(0)[0].abs());
        }
        assert!(best < 1e-3, "{best}");
    }
}
