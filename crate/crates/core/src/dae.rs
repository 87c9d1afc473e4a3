//! Deep autoencoder producing speaker-independent bottleneck features.
//!
//! The encoder is `M → h₁ → … → hₖ → b` with sigmoid hidden layers and a linear
//! bottleneck (`b = M/2` by default). The decoder mirrors it: decoder layer `j` is
//! paired with encoder layer `k = L−1−j` and, when tied, applies that layer's weight
//! matrix transposed with its own bias. Hidden decoder layers are sigmoid and the
//! reconstruction layer is linear.
//!
//! Inputs are normalized with statistics stored in the model, so encoding and decoding
//! work in the original feature space.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureUtterance;
use crate::error::{Error, Result};
use crate::nn::{
    accumulate_weight_grad, apply_activation_grad, bias_grad, dense_forward, input_grad,
    minibatches, mse, mse_grad, Activation, Gradients, Layer, Matrix, Mlp, NormStats, Orientation,
    Rmsprop, RmspropConfig, Trainable,
};

pub const DEFAULT_HIDDEN_WIDTH: usize = 512;
pub const DEFAULT_PATIENCE: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaeArchitecture {
    /// Encoder hidden widths before the bottleneck; the decoder mirrors them.
    pub hidden_widths: Vec<usize>,
    /// Bottleneck width; `None` means half the feature dimension.
    pub bottleneck: Option<usize>,
    pub tied: bool,
}

impl Default for DaeArchitecture {
    fn default() -> Self {
        Self {
            hidden_widths: vec![DEFAULT_HIDDEN_WIDTH, DEFAULT_HIDDEN_WIDTH],
            bottleneck: None,
            tied: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaeModel {
    feature_dim: usize,
    encoder: Vec<Layer>,
    decoder_biases: Vec<Vec<f64>>,
    /// Decoder weights when untied, stored in normal `(fan_out, fan_in)` orientation.
    untied_weights: Option<Vec<Matrix>>,
    norm: NormStats,
    seed: u64,
}

/// Builds a DAE with the default `512-512-M/2` encoder and tied decoder.
pub fn dae_build(feature_dim: usize, seed: u64) -> Result<DaeModel> {
    DaeModel::build(feature_dim, &DaeArchitecture::default(), seed)
}

struct StackLayer<'a> {
    weights: &'a Matrix,
    orientation: Orientation,
    bias: &'a [f64],
    activation: Activation,
    weight_param: usize,
    bias_param: usize,
}

impl DaeModel {
    pub fn build(feature_dim: usize, arch: &DaeArchitecture, seed: u64) -> Result<Self> {
        if feature_dim < 2 || !feature_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "feature dimension must be even and at least 2, got {feature_dim}"
            )));
        }
        let bottleneck = arch.bottleneck.unwrap_or(feature_dim / 2);
        if bottleneck == 0 || arch.hidden_widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut encoder = Vec::new();
        let mut fan_in = feature_dim;
        for &w in &arch.hidden_widths {
            encoder.push(Layer::glorot(fan_in, w, Activation::Sigmoid, &mut rng));
            fan_in = w;
        }
        encoder.push(Layer::glorot(
            fan_in,
            bottleneck,
            Activation::Linear,
            &mut rng,
        ));

        let decoder_biases = encoder
            .iter()
            .rev()
            .map(|l| vec![0.0; l.fan_in()])
            .collect();
        let untied_weights = (!arch.tied).then(|| {
            encoder
                .iter()
                .rev()
                .map(|l| {
                    Layer::glorot(l.fan_out(), l.fan_in(), Activation::Linear, &mut rng).weights
                })
                .collect()
        });
        Ok(Self {
            feature_dim,
            encoder,
            decoder_biases,
            untied_weights,
            norm: NormStats::identity(feature_dim),
            seed,
        })
    }

    /// Reassembles a model from stored parts, checking every structural invariant.
    pub fn from_parts(
        feature_dim: usize,
        encoder: Vec<Layer>,
        decoder_biases: Vec<Vec<f64>>,
        untied_weights: Option<Vec<Matrix>>,
        norm: NormStats,
        seed: u64,
    ) -> Result<Self> {
        let encoder_net = Mlp::new(feature_dim, encoder)?;
        let encoder = encoder_net.layers().to_vec();
        let depth = encoder.len();
        if depth == 0 {
            return Err(Error::Shape(
                "autoencoder needs at least one encoder layer".into(),
            ));
        }
        for (k, l) in encoder.iter().enumerate() {
            let expected = if k + 1 == depth {
                Activation::Linear
            } else {
                Activation::Sigmoid
            };
            if l.activation != expected {
                return Err(Error::Shape(format!(
                    "encoder layer {k} must be {expected:?}, found {:?}",
                    l.activation
                )));
            }
        }
        if decoder_biases.len() != depth
            || decoder_biases
                .iter()
                .zip(encoder.iter().rev())
                .any(|(b, l)| b.len() != l.fan_in())
        {
            return Err(Error::Shape(
                "decoder biases do not mirror the encoder".into(),
            ));
        }
        if let Some(ws) = &untied_weights {
            if ws.len() != depth
                || ws
                    .iter()
                    .zip(encoder.iter().rev())
                    .any(|(w, l)| w.shape() != (l.fan_in(), l.fan_out()))
            {
                return Err(Error::Shape(
                    "decoder weights do not mirror the encoder".into(),
                ));
            }
        }
        if norm.dim() != feature_dim {
            return Err(Error::Shape(format!(
                "normalization covers {} dims, model has {feature_dim}",
                norm.dim()
            )));
        }
        Ok(Self {
            feature_dim,
            encoder,
            decoder_biases,
            untied_weights,
            norm,
            seed,
        })
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.encoder.last().expect("non-empty encoder").fan_out()
    }

    pub fn is_tied(&self) -> bool {
        self.untied_weights.is_none()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn norm(&self) -> &NormStats {
        &self.norm
    }

    pub fn set_norm(&mut self, norm: NormStats) -> Result<()> {
        if norm.dim() != self.feature_dim {
            return Err(Error::Shape(format!(
                "normalization covers {} dims, model has {}",
                norm.dim(),
                self.feature_dim
            )));
        }
        self.norm = norm;
        Ok(())
    }

    pub fn encoder_layers(&self) -> &[Layer] {
        &self.encoder
    }

    /// Mutable access to encoder layer `k`'s weights. Tied decoder layers follow any change.
    pub fn encoder_weights_mut(&mut self, k: usize) -> &mut Matrix {
        &mut self.encoder[k].weights
    }

    pub fn encoder_bias_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.encoder[k].bias
    }

    pub fn decoder_bias_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.decoder_biases[j]
    }

    pub fn decoder_biases(&self) -> &[Vec<f64>] {
        &self.decoder_biases
    }

    pub fn untied_weights(&self) -> Option<&[Matrix]> {
        self.untied_weights.as_deref()
    }

    pub fn decoder_depth(&self) -> usize {
        self.encoder.len()
    }

    /// Effective `(fan_out, fan_in)` weight matrix of decoder layer `j`.
    pub fn decoder_weights(&self, j: usize) -> Matrix {
        match &self.untied_weights {
            Some(ws) => ws[j].clone(),
            None => self.encoder[self.encoder.len() - 1 - j].weights.transpose(),
        }
    }

    pub fn decoder_activation(&self, j: usize) -> Activation {
        if j + 1 == self.encoder.len() {
            Activation::Linear
        } else {
            Activation::Sigmoid
        }
    }

    /// Every width from input to reconstruction, e.g. `[40, 512, 512, 20, 512, 512, 40]`.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = vec![self.feature_dim];
        widths.extend(self.encoder.iter().map(Layer::fan_out));
        widths.extend(self.encoder.iter().rev().map(Layer::fan_in));
        widths
    }

    pub fn architecture(&self) -> DaeArchitecture {
        let depth = self.encoder.len();
        let bottleneck = self.bottleneck_dim();
        DaeArchitecture {
            hidden_widths: self.encoder[..depth - 1]
                .iter()
                .map(Layer::fan_out)
                .collect(),
            bottleneck: (bottleneck * 2 != self.feature_dim).then_some(bottleneck),
            tied: self.is_tied(),
        }
    }

    /// The encoder as a standalone network operating on normalized inputs.
    pub fn encoder_mlp(&self) -> Mlp {
        Mlp::new(self.feature_dim, self.encoder.clone()).expect("encoder is chained")
    }

    fn stack(&self) -> Vec<StackLayer<'_>> {
        let depth = self.encoder.len();
        let mut out = Vec::with_capacity(2 * depth);
        for (k, l) in self.encoder.iter().enumerate() {
            out.push(StackLayer {
                weights: &l.weights,
                orientation: Orientation::Normal,
                bias: &l.bias,
                activation: l.activation,
                weight_param: 2 * k,
                bias_param: 2 * k + 1,
            });
        }
        for j in 0..depth {
            let paired = depth - 1 - j;
            let (weights, orientation, weight_param) = match &self.untied_weights {
                Some(ws) => (&ws[j], Orientation::Normal, 3 * depth + j),
                None => (
                    &self.encoder[paired].weights,
                    Orientation::Transposed,
                    2 * paired,
                ),
            };
            out.push(StackLayer {
                weights,
                orientation,
                bias: &self.decoder_biases[j],
                activation: self.decoder_activation(j),
                weight_param,
                bias_param: 2 * depth + j,
            });
        }
        out
    }

    fn check_width(&self, data: &Matrix, expected: usize, what: &str) -> Result<()> {
        if data.cols() != expected {
            return Err(Error::Shape(format!(
                "{what} expects {expected} columns, got {}",
                data.cols()
            )));
        }
        Ok(())
    }

    /// Normalizes `frames` and runs the encoder, returning bottleneck features.
    pub fn encode(&self, frames: &Matrix) -> Result<Matrix> {
        self.check_width(frames, self.feature_dim, "encoder")?;
        let mut h = self.norm.normalize(frames)?;
        for l in &self.encoder {
            h = l.forward(&h);
        }
        Ok(h)
    }

    /// Runs the decoder on bottleneck features and maps back to feature space.
    pub fn decode(&self, bottleneck: &Matrix) -> Result<Matrix> {
        self.check_width(bottleneck, self.bottleneck_dim(), "decoder")?;
        let depth = self.encoder.len();
        let mut h = bottleneck.clone();
        for layer in &self.stack()[depth..] {
            h = dense_forward(
                &h,
                layer.weights,
                layer.orientation,
                layer.bias,
                layer.activation,
            );
        }
        self.norm.denormalize(&h)
    }

    pub fn reconstruct(&self, frames: &Matrix) -> Result<Matrix> {
        self.decode(&self.encode(frames)?)
    }

    /// Reconstruction loss and gradients on already-normalized frames.
    pub fn loss_and_gradients(&self, normalized: &Matrix) -> Result<(f64, Gradients)> {
        self.check_width(normalized, self.feature_dim, "autoencoder")?;
        let stack = self.stack();
        let mut trace = Vec::with_capacity(stack.len() + 1);
        trace.push(normalized.clone());
        for l in &stack {
            let next = dense_forward(
                trace.last().expect("non-empty"),
                l.weights,
                l.orientation,
                l.bias,
                l.activation,
            );
            trace.push(next);
        }
        let output = trace.last().expect("non-empty");
        let loss = mse(output, normalized)?;
        // tied layers receive gradient from both their encoder and decoder use
        let mut grads = Gradients::zeros_like(self);
        let mut delta = mse_grad(output, normalized);
        for (i, l) in stack.iter().enumerate().rev() {
            apply_activation_grad(&mut delta, &trace[i + 1], l.activation);
            let taken = std::mem::take(grads.tensor_vec_mut(l.weight_param));
            let mut gw = Matrix::from_vec(l.weights.rows(), l.weights.cols(), taken)?;
            accumulate_weight_grad(&trace[i], &delta, l.orientation, &mut gw);
            *grads.tensor_vec_mut(l.weight_param) = gw.into_vec();
            bias_grad(&delta, grads.tensor_mut(l.bias_param));
            if i > 0 {
                delta = input_grad(&delta, l.weights, l.orientation);
            }
        }
        Ok((loss, grads))
    }

    fn reconstruct_normalized(&self, normalized: &Matrix) -> Matrix {
        let mut h = normalized.clone();
        for layer in self.stack() {
            h = dense_forward(
                &h,
                layer.weights,
                layer.orientation,
                layer.bias,
                layer.activation,
            );
        }
        h
    }

    /// Reconstruction MSE measured in normalized space, the training objective.
    pub fn reconstruction_loss(&self, frames: &Matrix) -> Result<f64> {
        let normalized = self.norm.normalize(frames)?;
        mse(&self.reconstruct_normalized(&normalized), &normalized)
    }

    /// Trains on frames pooled from every utterance in `corpus`.
    pub fn train(
        &self,
        corpus: &[FeatureUtterance],
        config: &DaeTrainConfig,
    ) -> Result<(DaeModel, DaeTrainReport)> {
        let blocks: Vec<&Matrix> = corpus.iter().map(|u| &u.frames).collect();
        self.train_on_blocks(&blocks, config)
    }

    /// Trains on per-utterance frame blocks. Returns the parameters of the best
    /// validation epoch.
    pub fn train_on_blocks(
        &self,
        blocks: &[&Matrix],
        config: &DaeTrainConfig,
    ) -> Result<(DaeModel, DaeTrainReport)> {
        config.validate()?;
        let total: usize = blocks.iter().map(|b| b.rows()).sum();
        if blocks.is_empty() || total == 0 {
            return Err(Error::Data("autoencoder training corpus is empty".into()));
        }
        for b in blocks {
            self.check_width(b, self.feature_dim, "autoencoder training")?;
        }
        let (train_raw, val_raw) = split_validation(blocks, config, self.feature_dim)?;
        let mut model = self.clone();
        model.norm = NormStats::from_data(&train_raw);
        let train = model.norm.normalize(&train_raw)?;
        let validation = model.norm.normalize(&val_raw)?;
        info!(
            "autoencoder training on {} frames, validating on {}",
            train.rows(),
            validation.rows()
        );

        let mut opt = Rmsprop::for_model(config.rmsprop, &model);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
        let mut stopper = EarlyStopping::new(config.patience);
        let mut best = model.clone();
        let mut report = DaeTrainReport {
            train_loss: Vec::new(),
            validation_loss: Vec::new(),
            best_epoch: 0,
            stopped_early: false,
            train_frames: train.rows(),
            validation_frames: validation.rows(),
        };

        for epoch in 1..=config.max_epochs {
            let mut weighted = 0.0;
            for batch in minibatches(train.rows(), config.batch_size, &mut rng) {
                let x = train.select_rows(&batch);
                let (loss, grads) = model.loss_and_gradients(&x)?;
                if !loss.is_finite() {
                    return Err(Error::Training(format!("non-finite loss in epoch {epoch}")));
                }
                opt.step(&mut model, &grads)
                    .map_err(|e| Error::Training(format!("epoch {epoch}: {e}")))?;
                weighted += loss * batch.len() as f64;
            }
            let train_loss = weighted / train.rows() as f64;
            let val_loss = mse(&model.reconstruct_normalized(&validation), &validation)?;
            if !val_loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite validation loss in epoch {epoch}"
                )));
            }
            report.train_loss.push(train_loss);
            report.validation_loss.push(val_loss);
            debug!("epoch {epoch}: train {train_loss:.6e} validation {val_loss:.6e}");
            match stopper.observe(val_loss) {
                StopDecision::Improved => best = model.clone(),
                StopDecision::Continue => {}
                StopDecision::Stop => {
                    report.stopped_early = true;
                    break;
                }
            }
        }
        report.best_epoch = stopper.best_epoch();
        Ok((best, report))
    }
}

/// Holds out the last `validation_fraction` of utterances after a seeded shuffle.
/// A single utterance is split by frames instead.
fn split_validation(
    blocks: &[&Matrix],
    config: &DaeTrainConfig,
    dim: usize,
) -> Result<(Matrix, Matrix)> {
    let fraction = config.validation_fraction;
    let non_empty: Vec<&Matrix> = blocks.iter().copied().filter(|b| b.rows() > 0).collect();
    if fraction == 0.0 {
        let all = Matrix::vstack(non_empty.iter().copied(), dim)?;
        return Ok((all.clone(), all));
    }
    if non_empty.len() >= 2 {
        let mut order: Vec<usize> = (0..non_empty.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
        let held =
            ((non_empty.len() as f64 * fraction).round() as usize).clamp(1, non_empty.len() - 1);
        let cut = non_empty.len() - held;
        let train = Matrix::vstack(order[..cut].iter().map(|&i| non_empty[i]), dim)?;
        let val = Matrix::vstack(order[cut..].iter().map(|&i| non_empty[i]), dim)?;
        return Ok((train, val));
    }
    let all = Matrix::vstack(non_empty.iter().copied(), dim)?;
    if all.rows() < 2 {
        return Ok((all.clone(), all));
    }
    let held = ((all.rows() as f64 * fraction).ceil() as usize).clamp(1, all.rows() - 1);
    let cut = all.rows() - held;
    let idx: Vec<usize> = (0..all.rows()).collect();
    Ok((all.select_rows(&idx[..cut]), all.select_rows(&idx[cut..])))
}

impl Trainable for DaeModel {
    fn parameters(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.encoder {
            out.push(l.weights.as_slice());
            out.push(&l.bias);
        }
        out.extend(self.decoder_biases.iter().map(Vec::as_slice));
        if let Some(ws) = &self.untied_weights {
            out.extend(ws.iter().map(Matrix::as_slice));
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.encoder {
            out.push(l.weights.as_mut_slice());
            out.push(&mut l.bias);
        }
        out.extend(self.decoder_biases.iter_mut().map(Vec::as_mut_slice));
        if let Some(ws) = &mut self.untied_weights {
            out.extend(ws.iter_mut().map(Matrix::as_mut_slice));
        }
        out
    }

    fn parameter_labels(&self) -> Vec<String> {
        let depth = self.encoder.len();
        let mut out = Vec::new();
        for k in 0..depth {
            out.push(format!("encoder layer {k} weights"));
            out.push(format!("encoder layer {k} bias"));
        }
        out.extend((0..depth).map(|j| format!("decoder layer {j} bias")));
        if self.untied_weights.is_some() {
            out.extend((0..depth).map(|j| format!("decoder layer {j} weights")));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaeTrainConfig {
    pub rmsprop: RmspropConfig,
    pub patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for DaeTrainConfig {
    fn default() -> Self {
        Self {
            rmsprop: RmspropConfig::default(),
            patience: DEFAULT_PATIENCE,
            batch_size: 64,
            max_epochs: 200,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl DaeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.rmsprop.validate()?;
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "patience, batch size and max epochs must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaeTrainReport {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_frames: usize,
    pub validation_frames: usize,
}

impl DaeTrainReport {
    pub fn epochs_run(&self) -> usize {
        self.validation_loss.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience rule: stop once `patience` consecutive epochs fail to beat the best loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            epoch: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> StopDecision {
        self.epoch += 1;
        if loss < self.best {
            self.best = loss;
            self.best_epoch = self.epoch;
            StopDecision::Improved
        } else if self.epoch - self.best_epoch >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}
