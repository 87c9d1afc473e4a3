//! Minimal dense feedforward-network engine: layers, MSE, backpropagation, RMSprop
//! and finite-difference gradient checking. Everything is `f64`.

mod gradcheck;
mod layer;
mod matrix;
mod mlp;
mod norm;
mod optim;

pub use gradcheck::{
    finite_difference, grad_check, max_relative_error, relative_error, ABSOLUTE_FALLBACK,
};
pub use layer::{sigmoid, Activation, Layer, Orientation};
pub use matrix::Matrix;
pub use mlp::{mse, Mlp};
pub use norm::{NormStats, STD_FLOOR};
pub use optim::{Gradients, Rmsprop, RmspropConfig, Trainable};

pub(crate) use layer::{
    accumulate_weight_grad, apply_activation_grad, bias_grad, dense_forward, input_grad,
};
pub(crate) use mlp::mse_grad;

use rand::seq::SliceRandom;
use rand::Rng;

/// Shuffled mini-batch index lists covering `0..n`.
pub(crate) fn minibatches<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}
