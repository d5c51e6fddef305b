use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::nn::{Module, TensorKind};
use crate::{Error, Result, Scalar};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Adamw,
    #[default]
    Sgd,
}

pub const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
pub const ADAM_EPS: f64 = 1e-8;

/// Hyperparameters of one update rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// One SGD step on a single value; returns the new weight.
///
/// `g ← grad + wd·w; v ← momentum·v + g; w ← w − lr·v`
pub fn sgd_update(w: f64, grad: f64, velocity: &mut f64, lr: f64, momentum: f64, weight_decay: f64) -> f64 {
    let g = grad + weight_decay * w;
    *velocity = momentum * *velocity + g;
    w - lr * *velocity
}

#[derive(Clone, Debug)]
enum Slot<T> {
    Empty,
    Velocity(Vec<T>),
    Moments { m: Vec<T>, v: Vec<T> },
}

/// Per-parameter optimizer state, keyed by visit order.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    pub config: OptimizerConfig,
    slots: Vec<Slot<T>>,
    steps: u64,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate {} must be finite and non-negative", config.learning_rate)));
        }
        Ok(Optimizer { config, slots: Vec::new(), steps: 0 })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Updates every parameter of `model` from its accumulated gradient.
    pub fn step<M: Module<T> + ?Sized>(&mut self, model: &mut M) -> Result<()> {
        self.steps += 1;
        let cfg = self.config;
        let lr = T::lit(cfg.learning_rate);
        let wd = T::lit(cfg.weight_decay);
        let mom = T::lit(cfg.momentum);
        let (b1, b2) = (T::lit(ADAM_BETAS.0), T::lit(ADAM_BETAS.1));
        let t = self.steps as i32;
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        let eps = T::lit(ADAM_EPS);
        let slots = &mut self.slots;
        let mut index = 0;
        let mut result = Ok(());
        model.visit_mut(&mut |name, kind, tensor| {
            if kind != TensorKind::Parameter || result.is_err() {
                return;
            }
            let i = index;
            index += 1;
            if slots.len() <= i {
                slots.push(Slot::Empty);
            }
            let (w, grad) = tensor.split_grad();
            let Some(grad) = grad else {
                result = Err(Error::Contract(format!("parameter {name} has no gradient")));
                return;
            };
            let n = w.len();
            match cfg.kind {
                OptimizerKind::Sgd => {
                    if !matches!(slots[i], Slot::Velocity(_)) {
                        slots[i] = Slot::Velocity(vec![T::zero(); n]);
                    }
                    let Slot::Velocity(vel) = &mut slots[i] else { unreachable!() };
                    for ((w, &g), v) in w.iter_mut().zip(grad).zip(vel.iter_mut()) {
                        let g = g + wd * *w;
                        *v = mom * *v + g;
                        *w -= lr * *v;
                    }
                }
                OptimizerKind::Adam | OptimizerKind::Adamw => {
                    if !matches!(slots[i], Slot::Moments { .. }) {
                        slots[i] = Slot::Moments { m: vec![T::zero(); n], v: vec![T::zero(); n] };
                    }
                    let Slot::Moments { m, v } = &mut slots[i] else { unreachable!() };
                    let decoupled = cfg.kind == OptimizerKind::Adamw;
                    for (((w, &g), m), v) in w.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                        let g = if decoupled { g } else { g + wd * *w };
                        *m = b1 * *m + (T::one() - b1) * g;
                        *v = b2 * *v + (T::one() - b2) * g * g;
                        let mhat = *m / bc1;
                        let vhat = *v / bc2;
                        if decoupled {
                            *w -= lr * wd * *w;
                        }
                        *w -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        });
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;

    #[test]
    fn recurrence_examples() {
        let mut v = 0.0;
        assert!((sgd_update(1.0, 1.0, &mut v, 0.1, 0.0, 0.0) - 0.9).abs() < 1e-15);
        let mut v = 0.0;
        let w1 = sgd_update(0.0, 1.0, &mut v, 0.1, 0.9, 0.0);
        assert!((w1 + 0.1).abs() < 1e-15 && v == 1.0);
        let w2 = sgd_update(w1, 1.0, &mut v, 0.1, 0.9, 0.0);
        assert!((v - 1.9).abs() < 1e-15 && (w2 + 0.29).abs() < 1e-15);
        let mut v = 0.0;
        assert!((sgd_update(1.0, 0.0, &mut v, 1.0, 0.0, 1e-4) - 0.9999).abs() < 1e-15);
    }

    fn layer() -> Linear<f64> {
        let mut l = Linear::new("l", 2, 1, false);
        l.weight.data_mut().copy_from_slice(&[0.0, 1.0]);
        l
    }

    #[test]
    fn velocity_survives_steps() {
        let mut l = layer();
        let cfg = OptimizerConfig { kind: OptimizerKind::Sgd, learning_rate: 0.1, momentum: 0.9, weight_decay: 0.0 };
        let mut opt = Optimizer::new(cfg).unwrap();
        for _ in 0..2 {
            l.weight.zero_grad();
            l.weight.accumulate_grad(&[1.0, 0.0]).unwrap();
            opt.step(&mut l).unwrap();
        }
        assert!((l.weight.data()[0] + 0.29).abs() < 1e-12);
        assert_eq!(l.weight.data()[1], 1.0);
    }

    #[test]
    fn zero_lr_is_a_no_op_and_missing_grad_errors() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam, OptimizerKind::Adamw] {
            let mut l = layer();
            let mut opt = Optimizer::new(OptimizerConfig { kind, learning_rate: 0.0, momentum: 0.9, weight_decay: 1e-4 }).unwrap();
            assert!(matches!(opt.step(&mut l), Err(Error::Contract(_))));
            l.weight.accumulate_grad(&[3.0, -2.0]).unwrap();
            opt.step(&mut l).unwrap();
            assert_eq!(l.weight.data(), &[0.0, 1.0]);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut l = layer();
        l.weight.accumulate_grad(&[0.5, -4.0]).unwrap();
        let mut opt =
            Optimizer::new(OptimizerConfig { kind: OptimizerKind::Adam, learning_rate: 0.01, momentum: 0.0, weight_decay: 0.0 }).unwrap();
        opt.step(&mut l).unwrap();
        assert!((l.weight.data()[0] + 0.01).abs() < 1e-9);
        assert!((l.weight.data()[1] - 1.01).abs() < 1e-9);
    }

    #[test]
    fn adamw_decouples_decay() {
        let mut l = layer();
        l.weight.accumulate_grad(&[0.0, 0.0]).unwrap();
        let mut opt =
            Optimizer::new(OptimizerConfig { kind: OptimizerKind::Adamw, learning_rate: 0.1, momentum: 0.0, weight_decay: 0.5 }).unwrap();
        opt.step(&mut l).unwrap();
        assert!((l.weight.data()[1] - 0.95).abs() < 1e-12);
    }
}
