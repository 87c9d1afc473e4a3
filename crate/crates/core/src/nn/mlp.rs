use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::{
    accumulate_weight_grad, apply_activation_grad, bias_grad, input_grad, Orientation,
};
use super::{Activation, Gradients, Layer, Matrix, Trainable};
use crate::error::{Error, Result};

/// Feedforward network of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl Mlp {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut fan_in = input_dim;
        for (k, layer) in layers.iter().enumerate() {
            if layer.fan_in() != fan_in {
                return Err(Error::Shape(format!(
                    "layer {k} expects {} inputs but receives {fan_in}",
                    layer.fan_in()
                )));
            }
            fan_in = layer.fan_out();
        }
        Ok(Self { input_dim, layers })
    }

    /// Glorot-initialized network with the given `(width, activation)` per layer.
    pub fn with_seed(input_dim: usize, spec: &[(usize, Activation)], seed: u64) -> Result<Self> {
        if input_dim == 0 || spec.iter().any(|&(w, _)| w == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = input_dim;
        let layers = spec
            .iter()
            .map(|&(width, act)| {
                let layer = Layer::glorot(fan_in, width, act, &mut rng);
                fan_in = width;
                layer
            })
            .collect();
        Self::new(input_dim, layers)
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, Layer::fan_out)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Widths from input to output, e.g. `[20, 50, 50, 40]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(Layer::fan_out))
            .collect()
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self
            .forward_trace(batch)?
            .pop()
            .expect("trace holds the input"))
    }

    /// Outputs of every layer, starting with the input itself.
    fn forward_trace(&self, batch: &Matrix) -> Result<Vec<Matrix>> {
        if batch.cols() != self.input_dim {
            return Err(Error::Shape(format!(
                "layer 0 expects {} inputs, batch has {} columns",
                self.input_dim,
                batch.cols()
            )));
        }
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(batch.clone());
        for layer in &self.layers {
            let next = layer.forward(trace.last().expect("non-empty"));
            trace.push(next);
        }
        Ok(trace)
    }

    /// Gradients of `mse(forward(batch), target)` with respect to every parameter.
    pub fn backward(&self, batch: &Matrix, target: &Matrix) -> Result<Gradients> {
        Ok(self.loss_and_gradients(batch, target)?.1)
    }

    pub fn loss_and_gradients(&self, batch: &Matrix, target: &Matrix) -> Result<(f64, Gradients)> {
        let trace = self.forward_trace(batch)?;
        let output = trace.last().expect("non-empty");
        let loss = mse(output, target)?;
        let mut grads = Gradients::zeros_like(self);
        let mut delta = mse_grad(output, target);
        for (k, layer) in self.layers.iter().enumerate().rev() {
            apply_activation_grad(&mut delta, &trace[k + 1], layer.activation);
            let (w_idx, b_idx) = (2 * k, 2 * k + 1);
            let mut gw = Matrix::zeros(layer.weights.rows(), layer.weights.cols());
            accumulate_weight_grad(&trace[k], &delta, Orientation::Normal, &mut gw);
            grads.tensor_mut(w_idx).copy_from_slice(gw.as_slice());
            bias_grad(&delta, grads.tensor_mut(b_idx));
            if k > 0 {
                delta = input_grad(&delta, &layer.weights, Orientation::Normal);
            }
        }
        Ok((loss, grads))
    }
}

impl Trainable for Mlp {
    fn parameters(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    fn parameter_labels(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|k| [format!("layer {k} weights"), format!("layer {k} bias")])
            .collect()
    }
}

/// Mean over all elements of the squared difference. Zero for empty inputs.
pub fn mse(prediction: &Matrix, target: &Matrix) -> Result<f64> {
    if prediction.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction is {:?} but target is {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    let n = prediction.as_slice().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = prediction
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / n as f64)
}

/// `d mse / d prediction`; caller guarantees equal shapes.
pub(crate) fn mse_grad(prediction: &Matrix, target: &Matrix) -> Matrix {
    let n = prediction.as_slice().len().max(1) as f64;
    let data = prediction
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect();
    Matrix::from_vec(prediction.rows(), prediction.cols(), data).expect("same shape")
}
