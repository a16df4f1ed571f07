use crate::error::{Error, Result};
use crate::nnkernel::ParamStore;
use crate::scalar::Scalar;
use crate::tensorio::Matrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam moments for every parameter of a store.
#[derive(Clone, Debug)]
pub struct Adam<S> {
    pub lr: f64,
    pub step: u64,
    m: Vec<Matrix<S>>,
    v: Vec<Matrix<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(params: &ParamStore<S>, lr: f64) -> Self {
        let zeros = || {
            params
                .entries()
                .iter()
                .map(|e| Matrix::zeros(e.value.rows(), e.value.cols()))
                .collect()
        };
        Self {
            lr,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Applies one update from the gradients stored in `params`. A non-finite
    /// gradient leaves every parameter untouched.
    pub fn step(&mut self, params: &mut ParamStore<S>) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::shape("adam_step", "optimizer built for a different store"));
        }
        for e in params.entries() {
            if let Some(i) = e.grad.as_slice().iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite { index: i });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (S::of(ADAM_BETA1), S::of(ADAM_BETA2));
        let c1 = S::of(1.0 - ADAM_BETA1.powi(t));
        let c2 = S::of(1.0 - ADAM_BETA2.powi(t));
        let (lr, eps) = (S::of(self.lr), S::of(ADAM_EPS));
        for ((e, m), v) in params.entries_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grads = e.grad.as_slice();
            let values = e.value.as_mut_slice();
            for (((w, &g), mi), vi) in values.iter_mut().zip(grads).zip(m.as_mut_slice()).zip(v.as_mut_slice()) {
                *mi = b1 * *mi + (S::one() - b1) * g;
                *vi = b2 * *vi + (S::one() - b2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub const PLATEAU_FACTOR: f64 = 0.5;
pub const PLATEAU_PATIENCE: usize = 8;

/// Halves the learning rate after eight epochs without a strict drop in
/// validation loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Scheduler {
    pub lr: f64,
    pub best: Option<f64>,
    pub since_improvement: usize,
    pub factor: f64,
    pub patience: usize,
}

impl Scheduler {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            best: None,
            since_improvement: 0,
            factor: PLATEAU_FACTOR,
            patience: PLATEAU_PATIENCE,
        }
    }

    /// Returns the learning rate for the next epoch.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if self.best.is_none_or(|b| val_loss < b) {
            self.best = Some(val_loss);
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
            if self.since_improvement == self.patience {
                self.lr *= self.factor;
                self.since_improvement = 0;
            }
        }
        self.lr
    }
}

/// Early-stopping decision over validation accuracies (epoch 1 first).
/// `best_epoch` is the 1-based epoch of the earliest maximum. Training stops
/// once the last `patience` epochs, counting the best one, bring no new
/// maximum.
pub fn early_stop(history: &[f64], patience: usize) -> (bool, usize) {
    if history.is_empty() {
        return (false, 0);
    }
    let mut best = 0;
    for (i, &a) in history.iter().enumerate() {
        if a > history[best] {
            best = i;
        }
    }
    (history.len() - best >= patience.max(1), best + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(w: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", Matrix::row_vector(vec![w])).unwrap();
        s
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = scalar_store(0.7);
        let mut adam = Adam::new(&s, 0.1);
        adam.step(&mut s).unwrap();
        assert_eq!(s.get("w").unwrap().value.as_slice(), &[0.7]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02] {
            let mut s = scalar_store(1.0);
            s.entries_mut()[0].grad.set(0, 0, g);
            let mut adam = Adam::new(&s, 0.01);
            adam.step(&mut s).unwrap();
            // m_hat = g and v_hat = g^2 after bias correction.
            let expect = 1.0 - 0.01 * g / (g.abs() + ADAM_EPS);
            assert!((s.get("w").unwrap().value.get(0, 0) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_bowl_decreases() {
        let mut s = scalar_store(1.0);
        let mut adam = Adam::new(&s, 0.01);
        let mut prev = 1.0;
        for step in 0..100 {
            let w = s.get("w").unwrap().value.get(0, 0);
            s.entries_mut()[0].grad.set(0, 0, 2.0 * w);
            adam.step(&mut s).unwrap();
            let w = s.get("w").unwrap().value.get(0, 0);
            assert!(w * w < prev, "step {step}");
            prev = w * w;
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut s = scalar_store(1.0);
        s.entries_mut()[0].grad.set(0, 0, f64::NAN);
        let mut adam = Adam::new(&s, 0.01);
        assert!(adam.step(&mut s).is_err());
        assert_eq!(adam.step, 0);
        assert_eq!(s.get("w").unwrap().value.get(0, 0), 1.0);
    }

    #[test]
    fn scheduler_examples() {
        let mut s = Scheduler::new(1.0);
        for l in [1.0, 0.9, 0.8] {
            assert_eq!(s.step(l), 1.0);
        }
        let mut s = Scheduler::new(1.0);
        s.step(1.0);
        for i in 1..=8 {
            let lr = s.step(1.0);
            assert_eq!(lr, if i == 8 { 0.5 } else { 1.0 }, "epoch {i}");
        }
        for _ in 0..8 {
            s.step(1.5);
        }
        assert_eq!(s.lr, 0.25);
    }

    #[test]
    fn early_stop_examples() {
        assert_eq!(early_stop(&[0.1, 0.2, 0.3, 0.4, 0.5], 3), (false, 5));
        assert_eq!(early_stop(&[0.5, 0.6, 0.6, 0.6], 3), (true, 2));
        assert_eq!(early_stop(&[0.5, 0.6, 0.6], 3), (false, 2));
        assert_eq!(early_stop(&[0.7], 3), (false, 1));
    }
}
