use super::lstm::LstmParams;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut LstmParams, grads: &LstmParams) {
        let g = grads.to_flat();
        if self.m.len() != g.len() {
            self.m = vec![0.0; g.len()];
            self.v = vec![0.0; g.len()];
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut k = 0;
        for tensor in params.tensors_mut() {
            for p in tensor.iter_mut() {
                let gk = g[k];
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gk;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gk * gk;
                let m_hat = self.m[k] / bc1;
                let v_hat = self.v[k] / bc2;
                *p -= self.learning_rate * self.weight_decay * *p;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::LstmShape;

    fn tiny() -> LstmParams {
        LstmParams::init(
            LstmShape {
                input_size: 1,
                hidden_size: 1,
                num_layers: 1,
            },
            0.0,
            3,
        )
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = tiny();
        let before = p.to_flat();
        let mut g = p.zeros_like();
        g.head_b[0] = 0.37;
        let mut opt = AdamW::new(0.01, 0.0);
        opt.step(&mut p, &g);
        let after = p.to_flat();
        let k = after.len() - 1;
        assert!((before[k] - after[k] - 0.01).abs() < 1e-9);
        assert_eq!(&before[..k], &after[..k]);
    }

    #[test]
    fn decay_is_decoupled() {
        let mut p = tiny();
        let before = p.to_flat();
        let g = p.zeros_like();
        let mut opt = AdamW::new(0.1, 0.5);
        opt.step(&mut p, &g);
        for (a, b) in p.to_flat().iter().zip(before) {
            assert!((a - b * 0.95).abs() < 1e-15);
        }
    }
}
