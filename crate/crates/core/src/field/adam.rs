//! Adam optimizer over flat parameter arrays.

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Update only entries whose gradient is nonzero this step.
    pub lazy: bool,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, eps: f64, lazy: bool) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            eps,
            lazy,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn reset(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.t = 0;
    }

    pub fn resize(&mut self, len: usize) {
        self.m = vec![0.0; len];
        self.v = vec![0.0; len];
        self.t = 0;
    }

    /// Applies one update and zeroes `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &mut [f64], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "optimizer state length");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = lr * bc2.sqrt() / bc1;
        for i in 0..params.len() {
            let g = grad[i];
            if self.lazy && g == 0.0 {
                continue;
            }
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= step * self.m[i] / (self.v[i].sqrt() + self.eps * bc2.sqrt());
            grad[i] = 0.0;
        }
    }
}
