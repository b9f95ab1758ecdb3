//! Adam with decoupled weight decay over a flat parameter vector.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    /// Entries with `decay[i] = false` are exempt from weight decay.
    decay: Vec<bool>,
    step: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, decay: Vec<bool>) -> Self {
        let n = decay.len();
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            decay,
            step: 0,
        }
    }

    /// `p ← p(1 − lr·λ) − lr · m̂ / (√v̂ + ε)`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            if self.decay[i] {
                params[i] *= 1.0 - c.learning_rate * c.weight_decay;
            }
            params[i] -= c.learning_rate * mhat / (vhat.sqrt() + c.eps);
        }
    }
}
