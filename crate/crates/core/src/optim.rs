//! First-order optimizers over flat parameter tensors.

use serde::{Deserialize, Serialize};

/// Anything that exposes its learnable tensors as flat slices, in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(crate::Error::config(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// SGD or Adam with L2 weight decay folded into the gradient (PyTorch semantics).
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    frozen: Vec<bool>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        Optimizer {
            kind,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
            frozen: Vec::new(),
        }
    }

    pub fn sgd(lr: f64, weight_decay: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr, weight_decay)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam, lr, 0.0)
    }

    /// Marks tensor `index` (in [`Parameters::tensors`] order) as not trainable.
    pub fn freeze(&mut self, index: usize) {
        if self.frozen.len() <= index {
            self.frozen.resize(index + 1, false);
        }
        self.frozen[index] = true;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step<P: Parameters + ?Sized>(&mut self, params: &mut P, grads: &P) {
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        assert_eq!(params.len(), grads.len(), "parameter/gradient tensor count");
        self.step += 1;
        if self.kind == OptimizerKind::Adam && self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(self.step.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - b2.powi(self.step.min(i32::MAX as u64) as i32);
        for (ti, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
            if self.frozen.get(ti).copied().unwrap_or(false) {
                continue;
            }
            assert_eq!(p.len(), g.len(), "tensor {ti} length");
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, &gi) in p.iter_mut().zip(g.iter()) {
                        let gi = gi + self.weight_decay * *w;
                        *w -= self.lr * gi;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.m[ti], &mut self.v[ti]);
                    for k in 0..p.len() {
                        let gi = g[k] + self.weight_decay * p[k];
                        m[k] = b1 * m[k] + (1.0 - b1) * gi;
                        v[k] = b2 * v[k] + (1.0 - b2) * gi * gi;
                        let mhat = m[k] / bc1;
                        let vhat = v[k] / bc2;
                        p[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Quad(Vec<f64>);

    impl Parameters for Quad {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    fn minimise(mut opt: Optimizer, steps: usize) -> Vec<f64> {
        // f(w) = Σ (w_i − i)^2
        let mut w = Quad(vec![5.0, -3.0, 0.5]);
        for _ in 0..steps {
            let g = Quad(w.0.iter().enumerate().map(|(i, x)| 2.0 * (x - i as f64)).collect());
            opt.step(&mut w, &g);
        }
        w.0
    }

    #[test]
    fn both_optimizers_find_the_quadratic_minimum() {
        for opt in [Optimizer::sgd(0.1, 0.0), Optimizer::adam(0.05)] {
            let w = minimise(opt, 2000);
            for (i, x) in w.iter().enumerate() {
                assert!((x - i as f64).abs() < 1e-3, "{w:?}");
            }
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        assert_eq!(minimise(Optimizer::sgd(0.0, 1e-4), 10), vec![5.0, -3.0, 0.5]);
        assert_eq!(minimise(Optimizer::adam(0.0), 10), vec![5.0, -3.0, 0.5]);
    }

    #[test]
    fn frozen_tensors_do_not_move() {
        let mut opt = Optimizer::sgd(0.1, 0.0);
        opt.freeze(0);
        assert_eq!(minimise(opt, 5), vec![5.0, -3.0, 0.5]);
    }

    #[test]
    fn weight_decay_shrinks_toward_zero() {
        let mut w = Quad(vec![1.0]);
        let g = Quad(vec![0.0]);
        let mut opt = Optimizer::sgd(0.5, 0.1);
        opt.step(&mut w, &g);
        assert!((w.0[0] - 0.95).abs() < 1e-15);
    }
}
