//! RMSprop and the parameter plumbing it works over.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A model whose parameters can be visited as flat tensors in a fixed order.
///
/// `parameters`, `parameters_mut` and `parameter_labels` must agree on order and length.
pub trait Trainable {
    fn parameters(&self) -> Vec<&[f64]>;
    fn parameters_mut(&mut self) -> Vec<&mut [f64]>;
    fn parameter_labels(&self) -> Vec<String>;
}

/// Per-parameter gradients, one flat tensor per model parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tensors: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl Gradients {
    pub fn new(tensors: Vec<Vec<f64>>, labels: Vec<String>) -> Self {
        debug_assert_eq!(tensors.len(), labels.len());
        Self { tensors, labels }
    }

    /// Zero gradients shaped like `model`.
    pub fn zeros_like<M: Trainable + ?Sized>(model: &M) -> Self {
        Self {
            tensors: model
                .parameters()
                .iter()
                .map(|p| vec![0.0; p.len()])
                .collect(),
            labels: model.parameter_labels(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensor(&self, i: usize) -> &[f64] {
        &self.tensors[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.tensors[i]
    }

    pub(crate) fn tensor_vec_mut(&mut self, i: usize) -> &mut Vec<f64> {
        &mut self.tensors[i]
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn tensors(&self) -> &[Vec<f64>] {
        &self.tensors
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .fold(0.0f64, |m, g| m.max(g.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmspropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl RmspropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::Config(format!(
                "decay must lie in (0, 1), got {}",
                self.decay
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// RMSprop optimizer state.
///
/// `ms ← decay·ms + (1−decay)·g²`, then `θ ← θ − lr·g / sqrt(ms + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rmsprop {
    pub config: RmspropConfig,
    mean_square: Vec<Vec<f64>>,
}

impl Rmsprop {
    pub fn new(config: RmspropConfig) -> Self {
        Self {
            config,
            mean_square: Vec::new(),
        }
    }

    /// State with zeroed accumulators shaped like `model`.
    pub fn for_model<M: Trainable + ?Sized>(config: RmspropConfig, model: &M) -> Self {
        Self {
            config,
            mean_square: model
                .parameters()
                .iter()
                .map(|p| vec![0.0; p.len()])
                .collect(),
        }
    }

    pub fn mean_square(&self) -> &[Vec<f64>] {
        &self.mean_square
    }

    /// Applies one update. Shapes and finiteness are checked before anything is mutated.
    pub fn step<M: Trainable + ?Sized>(&mut self, model: &mut M, grads: &Gradients) -> Result<()> {
        let shapes: Vec<usize> = model.parameters().iter().map(|p| p.len()).collect();
        if grads.len() != shapes.len() {
            return Err(Error::Shape(format!(
                "{} gradient tensors for {} parameter tensors",
                grads.len(),
                shapes.len()
            )));
        }
        for (i, &len) in shapes.iter().enumerate() {
            let g = grads.tensor(i);
            if g.len() != len {
                return Err(Error::Shape(format!(
                    "gradient '{}' has {} entries, parameter has {len}",
                    grads.label(i),
                    g.len()
                )));
            }
            if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient in {} at index {pos}",
                    grads.label(i)
                )));
            }
        }
        if self.mean_square.is_empty() {
            self.mean_square = shapes.iter().map(|&n| vec![0.0; n]).collect();
        } else if self
            .mean_square
            .iter()
            .map(Vec::len)
            .ne(shapes.iter().copied())
        {
            return Err(Error::Shape(
                "optimizer state does not mirror the model parameters".into(),
            ));
        }

        let RmspropConfig {
            learning_rate,
            decay,
            epsilon,
        } = self.config;
        for ((param, ms), g) in model
            .parameters_mut()
            .into_iter()
            .zip(self.mean_square.iter_mut())
            .zip(grads.tensors())
        {
            for ((p, m), &gi) in param.iter_mut().zip(ms.iter_mut()).zip(g) {
                *m = decay * *m + (1.0 - decay) * gi * gi;
                *p -= learning_rate * gi / (*m + epsilon).sqrt();
            }
        }
        Ok(())
    }
}
