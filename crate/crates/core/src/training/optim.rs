use crate::error::{HaruError, Result};
use crate::nn::{ParameterStore, Tensor};
use crate::scalar::Scalar;

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&mut self, store: &mut ParameterStore<T>, lr: f64) -> Result<()> {
        if !store.has_grads() {
            return Err(HaruError::Invalid(
                "optimizer step before any backward pass".into(),
            ));
        }
        if self.m.is_empty() {
            self.m = store
                .ids()
                .map(|id| Tensor::zeros(store.value(id).shape()))
                .collect();
            self.v = self.m.clone();
        }
        if self.m.len() != store.len() {
            return Err(HaruError::Invalid(
                "parameter store changed under the optimizer".into(),
            ));
        }
        self.t += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one, eps) = (T::one(), T::of(self.eps));
        let c1 = T::of(1.0 - self.beta1.powf(self.t as f64));
        let c2 = T::of(1.0 - self.beta2.powf(self.t as f64));
        let lr = T::of(lr);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let (value, grad) = store.value_and_grad_mut(id);
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (((p, &g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (one - b1) * g;
                *vi = b2 * *vi + (one - b2) * g * g;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *p = *p - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        store.zero_grads();
        Ok(())
    }
}

impl<T: Scalar> Default for Adam<T> {
    fn default() -> Self {
        Adam::new(0.9, 0.999, 1e-8)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_step_without_gradients() {
        let mut store = ParameterStore::<f64>::new();
        store.add("w", Tensor::zeros(&[1])).unwrap();
        assert!(Adam::default().step(&mut store, 0.1).is_err());
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParameterStore::<f64>::new();
        let id = store.add("w", Tensor::full(&[2], 1.5)).unwrap();
        store.accumulate_grad(id, &Tensor::zeros(&[2])).unwrap();
        Adam::default().step(&mut store, 0.1).unwrap();
        assert_eq!(store.value(id).data(), &[1.5, 1.5]);
    }
}
