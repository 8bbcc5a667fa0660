use super::{ParamStore, Tensor};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter in `store`, then zeroes grads.
    pub fn step(&mut self, store: &mut ParamStore) {
        if self.m.len() != store.len() {
            self.m = store
                .iter()
                .map(|p| Tensor::zeros(p.value.rows(), p.value.cols()))
                .collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let p = store.get_mut(id);
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = p.grad.data();
            let w = p.value.data_mut();
            for j in 0..w.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                w[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        store.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(v));
        s
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut s = scalar_store(0.5);
        let id = s.find("w").unwrap();
        let mut adam = Adam::new(0.0);
        s.get_mut(id).grad = Tensor::scalar(3.0);
        adam.step(&mut s);
        assert_eq!(s.get(id).value.item(), 0.5);
        assert_eq!(s.get(id).grad.item(), 0.0);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        let mut s = scalar_store(1.0);
        let id = s.find("w").unwrap();
        let mut adam = Adam::new(1e-4);
        s.get_mut(id).grad = Tensor::scalar(1.0);
        adam.step(&mut s);
        // m_hat = 1, v_hat = 1 → Δ = lr / (1 + eps)
        let expected = 1.0 - 1e-4 / (1.0 + 1e-8);
        assert!((s.get(id).value.item() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_never_moves() {
        let mut s = scalar_store(-2.0);
        let id = s.find("w").unwrap();
        let mut adam = Adam::new(1e-2);
        for _ in 0..10 {
            adam.step(&mut s);
            assert_eq!(s.get(id).value.item(), -2.0);
        }
        assert_eq!(adam.steps_taken(), 10);
    }
}
