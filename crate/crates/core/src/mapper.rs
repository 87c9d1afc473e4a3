//! Mapping network from bottleneck features to one target speaker's spectral frames.
//!
//! The default topology is `M/2 → 50 → 50 → M` with sigmoid hidden layers and a
//! linear output. Inputs and outputs are standardized with statistics kept in the
//! model, so [`mapper_convert`] takes raw bottleneck features and returns frames in
//! the target feature space.

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{minibatches, mse, Activation, Matrix, Mlp, NormStats, Rmsprop, RmspropConfig};

pub const DEFAULT_MAPPER_WIDTH: usize = 50;
pub const DEFAULT_MAPPER_EPOCHS: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapperConfig {
    pub rmsprop: RmspropConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_widths: Vec<usize>,
    pub seed: u64,
}

impl Default for MapperConfig {
    fn default() -> Self {
        Self {
            rmsprop: RmspropConfig::default(),
            epochs: DEFAULT_MAPPER_EPOCHS,
            batch_size: 64,
            hidden_widths: vec![DEFAULT_MAPPER_WIDTH, DEFAULT_MAPPER_WIDTH],
            seed: 0,
        }
    }
}

impl MapperConfig {
    pub fn validate(&self) -> Result<()> {
        self.rmsprop.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapperModel {
    pub net: Mlp,
    pub input_norm: NormStats,
    pub output_norm: NormStats,
    pub target_speaker_id: String,
    pub seed: u64,
    pub epochs: usize,
}

impl MapperModel {
    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    /// `[input, hidden…, output]`.
    pub fn layer_widths(&self) -> Vec<usize> {
        self.net.widths()
    }

    pub fn validate(&self) -> Result<()> {
        let layers = self.net.layers();
        let Some((last, hidden)) = layers.split_last() else {
            return Err(Error::Shape("mapping network has no layers".into()));
        };
        if last.activation != Activation::Linear
            || hidden.iter().any(|l| l.activation != Activation::Sigmoid)
        {
            return Err(Error::Shape(
                "mapping network needs sigmoid hidden layers and a linear output".into(),
            ));
        }
        if self.input_norm.dim() != self.input_dim() || self.output_norm.dim() != self.output_dim()
        {
            return Err(Error::Shape(format!(
                "normalization widths {}/{} do not match network {}→{}",
                self.input_norm.dim(),
                self.output_norm.dim(),
                self.input_dim(),
                self.output_dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperTrainReport {
    /// Normalized-space MSE over all pairs before the first update.
    pub initial_loss: f64,
    /// Normalized-space MSE over all pairs after each epoch.
    pub loss: Vec<f64>,
    pub pairs: usize,
}

/// Trains for exactly `config.epochs` epochs on frame-aligned `(bottleneck, target)` rows.
pub fn mapper_train(
    bottleneck: &Matrix,
    targets: &Matrix,
    target_speaker_id: &str,
    config: &MapperConfig,
) -> Result<(MapperModel, MapperTrainReport)> {
    config.validate()?;
    if bottleneck.rows() != targets.rows() {
        return Err(Error::Alignment(format!(
            "{} bottleneck rows but {} target rows",
            bottleneck.rows(),
            targets.rows()
        )));
    }
    let n = bottleneck.rows();
    if n == 0 {
        return Err(Error::Data(
            "mapping network needs at least one training pair".into(),
        ));
    }
    if bottleneck.cols() == 0 || targets.cols() == 0 {
        return Err(Error::Shape(
            "bottleneck and target widths must be positive".into(),
        ));
    }
    if !bottleneck.is_finite() || !targets.is_finite() {
        return Err(Error::Data("non-finite mapping training data".into()));
    }
    let input_norm = NormStats::from_data(bottleneck);
    let output_norm = NormStats::from_data(targets);
    let x = input_norm.normalize(bottleneck)?;
    let y = output_norm.normalize(targets)?;

    let mut spec: Vec<(usize, Activation)> = config
        .hidden_widths
        .iter()
        .map(|&w| (w, Activation::Sigmoid))
        .collect();
    spec.push((targets.cols(), Activation::Linear));
    let mut net = Mlp::with_seed(bottleneck.cols(), &spec, config.seed)?;
    let mut opt = Rmsprop::for_model(config.rmsprop, &net);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));

    let initial_loss = mse(&net.forward(&x)?, &y)?;
    let mut loss = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        for batch in minibatches(n, config.batch_size, &mut rng) {
            let (l, grads) =
                net.loss_and_gradients(&x.select_rows(&batch), &y.select_rows(&batch))?;
            if !l.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite mapping loss in epoch {epoch}"
                )));
            }
            opt.step(&mut net, &grads)
                .map_err(|e| Error::Training(format!("epoch {epoch}: {e}")))?;
        }
        let l = mse(&net.forward(&x)?, &y)?;
        if !l.is_finite() {
            return Err(Error::Training(format!(
                "non-finite mapping loss in epoch {epoch}"
            )));
        }
        debug!("mapper epoch {epoch}: {l:.6e}");
        loss.push(l);
    }
    let model = MapperModel {
        net,
        input_norm,
        output_norm,
        target_speaker_id: target_speaker_id.to_owned(),
        seed: config.seed,
        epochs: config.epochs,
    };
    Ok((
        model,
        MapperTrainReport {
            initial_loss,
            loss,
            pairs: n,
        },
    ))
}

/// Maps raw bottleneck features to target-speaker frames.
pub fn mapper_convert(model: &MapperModel, bottleneck: &Matrix) -> Result<Matrix> {
    if bottleneck.cols() != model.input_dim() {
        return Err(Error::Shape(format!(
            "bottleneck has {} columns, mapper expects {}",
            bottleneck.cols(),
            model.input_dim()
        )));
    }
    let x = model.input_norm.normalize(bottleneck)?;
    model.output_norm.denormalize(&model.net.forward(&x)?)
}
