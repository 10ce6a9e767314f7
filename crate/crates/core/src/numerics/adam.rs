use super::{NumericsError, ParameterStore, Real};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    /// One bias-corrected Adam update at learning rate `lr`, then zeroes
    /// every gradient.
    pub fn step<T: Real>(&self, store: &mut ParameterStore<T>, lr: f64) -> Result<(), NumericsError> {
        if let Some(name) = store.missing_grad() {
            return Err(NumericsError::MissingGradient(name.to_string()));
        }
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let eps = T::from_f64(self.eps);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let p = store.get_mut(id);
            if !p.is_trainable() {
                continue;
            }
            p.steps += 1;
            let t = p.steps as i32;
            let c1 = T::from_f64(1.0 - self.beta1.powi(t));
            let c2 = T::from_f64(1.0 - self.beta2.powi(t));
            let lr = T::from_f64(lr);
            let (value, grad, m, v) = p.parts_mut();
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        store.zero_grads();
        Ok(())
    }
}

/// Linear warmup over the first `warmup` fraction of `total_steps`, then a
/// constant rate.
pub fn warmup_lr(base: f64, step: usize, total_steps: usize, warmup: f64) -> f64 {
    let warm = (warmup * total_steps as f64).ceil() as usize;
    if warm == 0 || step >= warm {
        base
    } else {
        base * (step + 1) as f64 / warm as f64
    }
}
