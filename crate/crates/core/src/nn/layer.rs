//! Dense layers and the affine kernels shared by the MLP and the autoencoder.
//!
//! A weight matrix is stored as `(fan_out, fan_in)`. The autoencoder decoder reuses
//! encoder matrices through [`Orientation::Transposed`], so every kernel takes the
//! orientation explicitly instead of materializing a transpose.

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Sigmoid => 0,
            Activation::Linear => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Sigmoid),
            1 => Some(Activation::Linear),
            _ => None,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// How a stored `(rows, cols)` weight matrix is applied to an input row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `W x`, input width = `cols`.
    Normal,
    /// `Wᵀ x`, input width = `rows`.
    Transposed,
}

impl Orientation {
    pub fn fan_in(self, w: &Matrix) -> usize {
        match self {
            Orientation::Normal => w.cols(),
            Orientation::Transposed => w.rows(),
        }
    }

    pub fn fan_out(self, w: &Matrix) -> usize {
        match self {
            Orientation::Normal => w.rows(),
            Orientation::Transposed => w.cols(),
        }
    }
}

/// Computes `activation(W x + b)` for every row of `input`.
pub(crate) fn dense_forward(
    input: &Matrix,
    weights: &Matrix,
    orientation: Orientation,
    bias: &[f64],
    activation: Activation,
) -> Matrix {
    let fan_out = orientation.fan_out(weights);
    debug_assert_eq!(input.cols(), orientation.fan_in(weights));
    debug_assert_eq!(bias.len(), fan_out);
    let mut out = Matrix::zeros(input.rows(), fan_out);
    for i in 0..input.rows() {
        let x = input.row(i);
        let y = out.row_mut(i);
        match orientation {
            Orientation::Normal => {
                for (o, yo) in y.iter_mut().enumerate() {
                    *yo = dot(weights.row(o), x) + bias[o];
                }
            }
            Orientation::Transposed => {
                y.copy_from_slice(bias);
                for (k, &xk) in x.iter().enumerate() {
                    axpy(xk, weights.row(k), y);
                }
            }
        }
        if activation != Activation::Linear {
            y.iter_mut().for_each(|v| *v = activation.apply(*v));
        }
    }
    out
}

/// Adds `deltaᵀ · input` (in stored orientation) into `grad`.
pub(crate) fn accumulate_weight_grad(
    input: &Matrix,
    delta: &Matrix,
    orientation: Orientation,
    grad: &mut Matrix,
) {
    for i in 0..input.rows() {
        let x = input.row(i);
        let d = delta.row(i);
        match orientation {
            Orientation::Normal => {
                for (o, &dv) in d.iter().enumerate() {
                    if dv != 0.0 {
                        axpy(dv, x, grad.row_mut(o));
                    }
                }
            }
            Orientation::Transposed => {
                for (k, &xk) in x.iter().enumerate() {
                    if xk != 0.0 {
                        axpy(xk, d, grad.row_mut(k));
                    }
                }
            }
        }
    }
}

/// Gradient with respect to the layer input: `delta · W` (or `delta · Wᵀ`).
pub(crate) fn input_grad(delta: &Matrix, weights: &Matrix, orientation: Orientation) -> Matrix {
    let fan_in = orientation.fan_in(weights);
    let mut out = Matrix::zeros(delta.rows(), fan_in);
    for i in 0..delta.rows() {
        let d = delta.row(i);
        let g = out.row_mut(i);
        match orientation {
            Orientation::Normal => {
                for (o, &dv) in d.iter().enumerate() {
                    if dv != 0.0 {
                        axpy(dv, weights.row(o), g);
                    }
                }
            }
            Orientation::Transposed => {
                for (k, gk) in g.iter_mut().enumerate() {
                    *gk = dot(weights.row(k), d);
                }
            }
        }
    }
    out
}

/// Turns `dL/dy` into `dL/dz` in place, given the layer outputs `y`.
pub(crate) fn apply_activation_grad(grad: &mut Matrix, output: &Matrix, activation: Activation) {
    if activation == Activation::Linear {
        return;
    }
    for (g, &y) in grad.as_mut_slice().iter_mut().zip(output.as_slice()) {
        *g *= activation.derivative_from_output(y);
    }
}

pub(crate) fn bias_grad(delta: &Matrix, grad: &mut [f64]) {
    for row in delta.row_iter() {
        for (g, d) in grad.iter_mut().zip(row) {
            *g += d;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// A dense layer: `activation(W x + b)` with `W` of shape `(fan_out, fan_in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Shape(format!(
                "bias has {} entries but weights have {} rows",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(fan_out, fan_in),
            bias: vec![0.0; fan_out],
            activation,
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot limit");
        let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
        Self {
            weights: Matrix::from_vec(fan_out, fan_in, data).expect("sized above"),
            bias: vec![0.0; fan_out],
            activation,
        }
    }

    #[inline]
    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn fan_out(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, input: &Matrix) -> Matrix {
        dense_forward(
            input,
            &self.weights,
            Orientation::Normal,
            &self.bias,
            self.activation,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transposed_forward_matches_materialized_transpose() {
        let w = Matrix::from_vec(2, 3, vec![1., -2., 0.5, 3., 0.25, -1.]).unwrap();
        let x = Matrix::from_vec(1, 2, vec![0.3, -0.7]).unwrap();
        let b = [0.1, 0.2, 0.3];
        let a = dense_forward(&x, &w, Orientation::Transposed, &b, Activation::Linear);
        let t = w.transpose();
        let e = dense_forward(&x, &t, Orientation::Normal, &b, Activation::Linear);
        for (p, q) in a.as_slice().iter().zip(e.as_slice()) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_rejects_bias_mismatch() {
        let r = Layer::new(Matrix::zeros(3, 2), vec![0.0; 2], Activation::Linear);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn glorot_respects_limit() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let l = Layer::glorot(10, 20, Activation::Sigmoid, &mut rng);
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(l.weights.as_slice().iter().all(|w| w.abs() <= limit));
        assert!(l.bias.iter().all(|&b| b == 0.0));
    }
}
