//! Adam optimizer over the named-tensor enumeration.

use std::collections::HashMap;

use super::params::ToyEncoderParams;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// One Adam update on a flat slice; `step` is the post-increment step
/// count. Shared by the encoder optimizer and the CRF head optimizer.
pub(crate) fn adam_step_slice(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
) {
    let bc1 = 1.0 - BETA1.powi(step as i32);
    let bc2 = 1.0 - BETA2.powi(step as i32);
    for i in 0..theta.len() {
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
    }
}

/// First/second moment estimates keyed by tensor name, plus the step count.
/// Serialized into checkpoints so a resumed run continues bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: HashMap<String, Vec<f64>>,
    pub v: HashMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ToyEncoderParams) -> Self {
        let mut m = HashMap::new();
        let mut v = HashMap::new();
        for (name, t) in params.named_tensors() {
            m.insert(name.clone(), vec![0.0; t.len()]);
            v.insert(name, vec![0.0; t.len()]);
        }
        AdamState { step: 0, m, v }
    }

    /// One update with the given learning rate. `lr = 0` leaves parameters
    /// untouched (moments still advance).
    pub fn update(&mut self, params: &mut ToyEncoderParams, grads: &ToyEncoderParams, lr: f64) {
        self.step += 1;

        let grad_tensors: HashMap<String, &[f64]> = grads
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.flat()))
            .collect();

        for (name, tensor) in params.named_tensors_mut() {
            let g = grad_tensors[&name];
            let m = self.m.get_mut(&name).expect("moment for tensor");
            let v = self.v.get_mut(&name).expect("moment for tensor");
            adam_step_slice(tensor.flat_mut(), g, m, v, self.step, lr);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Vocab};

    fn setup() -> (ModelConfig, ToyEncoderParams) {
        let vocab = Vocab::from_chars(vec!['a', 'b']);
        let mut c = ModelConfig::new(vocab, 7, 5);
        c.d_model = 4;
        c.num_layers = 1;
        c.ffn_dim = 6;
        c.max_len = 8;
        let p = ToyEncoderParams::init(&c);
        (c, p)
    }

    #[test]
    fn lr_zero_leaves_params_unchanged() {
        let (c, mut p) = setup();
        let before = p.clone();
        let mut grads = ToyEncoderParams::zeros(&c);
        grads.tok_emb.fill(1.0);
        let mut adam = AdamState::new(&p);
        adam.update(&mut p, &grads, 0.0);
        assert_eq!(p, before);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn update_moves_against_gradient() {
        let (c, mut p) = setup();
        let before = p.tok_emb[(0, 0)];
        let mut grads = ToyEncoderParams::zeros(&c);
        grads.tok_emb[(0, 0)] = 2.5;
        let mut adam = AdamState::new(&p);
        adam.update(&mut p, &grads, 1e-2);
        assert!(p.tok_emb[(0, 0)] < before);
        // untouched coordinates stay put
        assert_eq!(p.tok_emb[(1, 1)], ToyEncoderParams::init(&c).tok_emb[(1, 1)]);
    }

    #[test]
    fn updates_are_deterministic() {
        let (c, p0) = setup();
        let mut grads = ToyEncoderParams::zeros(&c);
        grads.w_b.fill(0.3);
        grads.layers[0].wq.fill(-0.1);

        let run = || {
            let mut p = p0.clone();
            let mut adam = AdamState::new(&p);
            for _ in 0..5 {
                adam.update(&mut p, &grads, 1e-3);
            }
            p
        };
        assert_eq!(run(), run());
    }
}
