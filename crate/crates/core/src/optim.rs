//! Adam optimizer with state keyed by parameter name, so networks can
//! grow (and parameter tensors be replaced each step) without losing
//! moment estimates.

use std::collections::HashMap;

use crate::tensor::{Element, GradMap, Tensor};

pub struct Adam<T: Element> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: HashMap<String, Vec<T>>,
    v: HashMap<String, Vec<T>>,
}

impl<T: Element> Adam<T> {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Adam<T> {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    /// ProGAN defaults: lr 1e-3, betas (0.0, 0.99), eps 1e-8.
    pub fn progan_default(lr: f64) -> Adam<T> {
        Adam::new(lr, 0.0, 0.99, 1e-8)
    }

    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Applies one Adam update to `param` in place (the tensor is
    /// replaced by a fresh grad-requiring leaf). No-op when the gradient
    /// map does not mention the parameter.
    pub fn update(&mut self, name: &str, param: &mut Tensor<T>, grads: &GradMap<T>) {
        let Some(grad) = grads.get(param) else {
            return;
        };
        assert!(self.t > 0, "begin_step before update");
        let n = param.numel();
        let m = self
            .m
            .entry(name.to_string())
            .or_insert_with(|| vec![T::zero(); n]);
        let v = self
            .v
            .entry(name.to_string())
            .or_insert_with(|| vec![T::zero(); n]);
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let one = T::one();
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);
        let inv_bc1 = T::from_f64(1.0 / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);

        let mut out = param.to_vec();
        for (((p, g), mi), vi) in out
            .iter_mut()
            .zip(grad.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = b1 * *mi + (one - b1) * *g;
            *vi = b2 * *vi + (one - b2) * *g * *g;
            let m_hat = *mi * inv_bc1;
            let v_hat = *vi * inv_bc2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
        *param = Tensor::var_from_vec(out, param.shape()).expect("shape preserved");
    }
}
