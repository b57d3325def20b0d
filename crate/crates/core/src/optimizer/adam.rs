use crate::scalar::Real;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T = f64> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// Per-parameter learning-rate multipliers.
    pub lr_scale: Vec<T>,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(n: usize, lr: T, beta1: T, beta2: T, eps: T) -> Self {
        Self { lr, beta1, beta2, eps, lr_scale: vec![T::one(); n], m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 }
    }

    pub fn with_lr_scale(mut self, lr_scale: Vec<T>) -> Self {
        assert_eq!(lr_scale.len(), self.m.len());
        self.lr_scale = lr_scale;
        self
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = T::zero());
        self.v.iter_mut().for_each(|x| *x = T::zero());
        self.t = 0;
    }

    /// One update. Entries with `frozen[i]` keep their value and moments.
    pub fn step(&mut self, params: &mut [T], grads: &[T], frozen: &[bool]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = T::one() - self.beta1.powi(self.t);
        let c2 = T::one() - self.beta2.powi(self.t);
        for i in 0..params.len() {
            if frozen.get(i).copied().unwrap_or(false) {
                continue;
            }
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * self.lr_scale[i] * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
