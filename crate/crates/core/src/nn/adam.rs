use crate::{Error, Result};

use super::tensor::{Param, Scalar};
use super::HasParams;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected adaptive-moment update over every parameter of
/// `model`. `t` is the 1-based step counter.
pub fn adam_step<F: Scalar, M: HasParams<F> + ?Sized>(
    model: &mut M,
    cfg: &AdamConfig,
    t: u64,
) -> Result<()> {
    assert!(t >= 1, "adam step counter is 1-based");
    let mut bad: Option<String> = None;
    let b1 = F::c(cfg.beta1);
    let b2 = F::c(cfg.beta2);
    let eps = F::c(cfg.eps);
    let corr1 = F::one() - F::c(cfg.beta1.powi(t as i32));
    let corr2 = F::one() - F::c(cfg.beta2.powi(t as i32));
    let lr = F::c(cfg.lr);
    model.visit_params(&mut |p: &mut Param<F>| {
        if bad.is_some() {
            return;
        }
        if !p.grad.is_finite() {
            bad = Some(p.name.clone());
            return;
        }
        for i in 0..p.value.len() {
            let g = p.grad.data()[i];
            let m = b1 * p.m.data()[i] + (F::one() - b1) * g;
            let v = b2 * p.v.data()[i] + (F::one() - b2) * g * g;
            p.m.data_mut()[i] = m;
            p.v.data_mut()[i] = v;
            let mhat = m / corr1;
            let vhat = v / corr2;
            p.value.data_mut()[i] = p.value.data()[i] - lr * mhat / (vhat.sqrt() + eps);
        }
    });
    match bad {
        Some(name) => Err(Error::NonFiniteGradient(name)),
        None => Ok(()),
    }
}
