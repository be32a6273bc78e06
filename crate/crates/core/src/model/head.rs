//! The comparison head `g`: one ReLU hidden layer and a scalar logit, in f64.
//!
//! Parameters are stored flat as `[w1 (hidden×dim) | b1 (hidden) | w2 (hidden) | b2]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const HIDDEN_UNITS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    dim: usize,
    hidden: usize,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for [`Head::backward`].
#[derive(Clone, Debug)]
pub struct HeadTrace {
    pre: Vec<f64>,
    pub z: f64,
}

impl Head {
    pub fn n_params_for(dim: usize, hidden: usize) -> usize {
        hidden * dim + 2 * hidden + 1
    }

    /// Fan-in scaled normal weights (He for the ReLU layer), zero biases.
    pub fn init<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut params = vec![0f64; Self::n_params_for(dim, hidden)];
        let n1 = Normal::new(0.0, (2.0 / dim as f64).sqrt()).expect("positive std");
        for w in &mut params[..hidden * dim] {
            *w = n1.sample(rng);
        }
        let n2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("positive std");
        let w2 = hidden * dim + hidden;
        for w in &mut params[w2..w2 + hidden] {
            *w = n2.sample(rng);
        }
        Self { dim, hidden, params }
    }

    pub fn from_params(dim: usize, hidden: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != Self::n_params_for(dim, hidden) {
            return Err(Error::Shape {
                expected: format!("{} head parameters", Self::n_params_for(dim, hidden)),
                actual: params.len().to_string(),
            });
        }
        Ok(Self { dim, hidden, params })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let (h, d) = (self.hidden, self.dim);
        let p = &self.params;
        (&p[..h * d], &p[h * d..h * d + h], &p[h * d + h..h * d + 2 * h], p[h * d + 2 * h])
    }

    pub fn trace(&self, x: &[f64]) -> HeadTrace {
        assert_eq!(x.len(), self.dim, "head input has the wrong dimension");
        let (w1, b1, w2, b2) = self.split();
        let mut z = b2;
        let mut pre = Vec::with_capacity(self.hidden);
        for (u, row) in w1.chunks_exact(self.dim).enumerate() {
            let a = b1[u] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            z += w2[u] * a.max(0.0);
            pre.push(a);
        }
        HeadTrace { pre, z }
    }

    /// The logit for difference vector `x`.
    pub fn forward(&self, x: &[f64]) -> f64 {
        self.trace(x).z
    }

    /// Adds `dz · ∂z/∂params` into `grads` and returns `dz · ∂z/∂x`.
    pub fn backward(&self, x: &[f64], trace: &HeadTrace, dz: f64, grads: &mut [f64]) -> Vec<f64> {
        let (h, d) = (self.hidden, self.dim);
        let (w1, _, w2, _) = self.split();
        let mut dx = vec![0f64; d];
        for u in 0..h {
            let a = trace.pre[u];
            grads[h * d + h + u] += dz * a.max(0.0);
            if a <= 0.0 {
                continue;
            }
            let da = dz * w2[u];
            grads[h * d + u] += da;
            let row = &w1[u * d..(u + 1) * d];
            let grow = &mut grads[u * d..(u + 1) * d];
            for i in 0..d {
                grow[i] += da * x[i];
                dx[i] += da * row[i];
            }
        }
        grads[h * d + 2 * h] += dz;
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn zero_input_gives_bias_path_only() {
        let mut head = Head::init(8, 4, &mut stream_rng(3, 0));
        head.params_mut().iter_mut().rev().take(1).for_each(|b| *b = 0.25);
        // With zero biases in the hidden layer every unit is inactive at x = 0.
        assert_eq!(head.forward(&[0.0; 8]), 0.25);
    }

    #[test]
    fn input_gradient_matches_differences() {
        let head = Head::init(6, 5, &mut stream_rng(4, 0));
        let x = [0.3, 1.2, 0.05, 0.7, 2.0, 0.4];
        let t = head.trace(&x);
        let mut g = vec![0.0; head.params().len()];
        let dx = head.backward(&x, &t, 1.0, &mut g);
        for i in 0..6 {
            let mut a = x;
            let mut b = x;
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let num = (head.forward(&a) - head.forward(&b)) / 2e-6;
            assert!((num - dx[i]).abs() < 1e-6, "{num} vs {}", dx[i]);
        }
    }
}
