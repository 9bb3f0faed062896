use crate::error::{Error, Result};

use super::ClassifierNet;

/// First/second moment estimates for Adam.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    /// One bias-corrected step on a raw parameter slice. Returns the index of
    /// the first non-finite gradient without touching anything.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> std::result::Result<(), usize> {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(i);
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let step = lr / c1;
        let c2_sqrt = c2.sqrt();
        for i in 0..params.len() {
            let g = grads[i] + self.weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= step * self.m[i] / (self.v[i].sqrt() / c2_sqrt + self.eps);
        }
        Ok(())
    }
}

/// Adam update of a network's parameters.
pub fn adam_step(net: &mut ClassifierNet, grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    state.step(net.params_mut(), grads, lr).map_err(|i| Error::NonFiniteGradient {
        layer: net.layer_of(i).to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain transcription of the reference update rule.
    fn reference(p: f64, g: &[f64], lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v, mut p) = (0.0, 0.0, p);
        for (t, &gi) in g.iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * gi;
            v = b2 * v + (1.0 - b2) * gi * gi;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            p -= lr * mh / (vh.sqrt() + eps);
        }
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::new(2);
        let mut p = vec![1.0, -1.0];
        s.step(&mut p, &[3.0, -0.5], 0.01).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn matches_reference_sequence() {
        let g = [0.3, -1.2, 0.05, 2.0, 0.7];
        let mut s = AdamState::new(1);
        let mut p = vec![0.4];
        for &gi in &g {
            s.step(&mut p, &[gi], 0.01).unwrap();
        }
        assert!((p[0] - reference(0.4, &g, 0.01)).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut s = AdamState::new(3);
        let mut p = vec![0.0; 3];
        assert_eq!(s.step(&mut p, &[0.0, f64::NAN, 1.0], 0.1), Err(1));
        assert_eq!(p, vec![0.0; 3]);
        assert_eq!(s.t, 0);
    }
}
