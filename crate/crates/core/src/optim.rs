//! SGD (plain and with heavy-ball momentum) and the two-phase learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `p <- p - lr * g` for every parameter.
///
/// All gradients are checked before anything is written, so a non-finite
/// gradient leaves every parameter untouched.
pub fn sgd_step(params: &mut [Tensor], grads: &[Tensor], learning_rate: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape("sgd_step", &[params.len()], &[grads.len()]));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::shape("sgd_step", p.shape(), g.shape()));
        }
        if !g.all_finite() {
            return Err(Error::Numeric(format!("gradient of parameter {i}")));
        }
    }
    for (p, g) in params.iter_mut().zip(grads) {
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= learning_rate * gv;
        }
    }
    Ok(())
}

/// SGD with heavy-ball momentum: `v <- mu v + g`, `p <- p - lr v`.
///
/// Velocities start at zero on the first step. `momentum = 0` reduces to
/// [`sgd_step`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sgd {
    momentum: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(momentum: f64) -> Result<Sgd> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        Ok(Sgd {
            momentum,
            velocity: Vec::new(),
        })
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    /// Forgets all velocities.
    pub fn reset(&mut self) {
        self.velocity.clear();
    }

    /// Like [`sgd_step`], nothing is written when any gradient is non-finite.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], learning_rate: f64) -> Result<()> {
        if self.momentum == 0.0 {
            return sgd_step(params, grads, learning_rate);
        }
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
        }
        if self.velocity.len() != grads.len() {
            return Err(Error::shape("Sgd::step", &[self.velocity.len()], &[grads.len()]));
        }
        let next: Vec<Tensor> = self
            .velocity
            .iter()
            .zip(grads)
            .map(|(v, g)| {
                if v.shape() != g.shape() {
                    return Err(Error::shape("Sgd::step", v.shape(), g.shape()));
                }
                let data = v
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(v, g)| self.momentum * v + g)
                    .collect();
                Tensor::new(g.shape().to_vec(), data)
            })
            .collect::<Result<_>>()?;
        sgd_step(params, &next, learning_rate)?;
        self.velocity = next;
        Ok(())
    }
}

/// Step schedule: `initial` until `drop_point` of training has elapsed,
/// then `initial * drop_factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub initial: f64,
    pub drop_factor: f64,
    /// Fraction of total iterations in `(0, 1]`.
    pub drop_point: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            initial: 0.05,
            drop_factor: 0.1,
            drop_point: 0.5,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.initial.is_finite()) {
            return Err(Error::Config(format!(
                "lr.initial must be positive, got {}",
                self.initial
            )));
        }
        if !(self.drop_factor > 0.0 && self.drop_factor.is_finite()) {
            return Err(Error::Config(format!(
                "lr.drop_factor must be positive, got {}",
                self.drop_factor
            )));
        }
        if !(self.drop_point > 0.0 && self.drop_point <= 1.0) {
            return Err(Error::Config(format!(
                "lr.drop_point must lie in (0, 1], got {}",
                self.drop_point
            )));
        }
        Ok(())
    }

    /// Rate for iteration `step` (0-based) of `total`.
    pub fn rate(&self, step: usize, total: usize) -> f64 {
        let drop_at = (self.drop_point * total as f64).ceil() as usize;
        if step < drop_at {
            self.initial
        } else {
            self.initial * self.drop_factor
        }
    }
}
