//! Named parameter tensors shared by both heads, the optimizer and the
//! gradient checker.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub trait ParamSet: Clone {
    /// Tensors in a fixed, documented order.
    fn tensors(&self) -> Vec<(&'static str, &Matrix)>;

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)>;

    fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, t) in out.tensors_mut() {
            t.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }

    fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn check_finite(&self) -> Result<()> {
        match self.tensors().into_iter().find(|(_, t)| !t.is_finite()) {
            Some((name, _)) => Err(Error::NonFinite(name.to_string())),
            None => Ok(()),
        }
    }

    fn add_scaled(&mut self, other: &Self, t: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_scaled(b, t);
        }
    }

    fn scale(&mut self, t: f64) {
        for (_, a) in self.tensors_mut() {
            a.scale(t);
        }
    }

    fn max_abs(&self) -> f64 {
        self.tensors().iter().fold(0.0, |m, (_, t)| m.max(t.max_abs()))
    }

    fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.as_slice().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Glorot-uniform bound for a `fan_out × fan_in` weight.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
