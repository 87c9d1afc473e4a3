//! Framed acoustic features, their on-disk format, corpus manifests, and the
//! synthetic multi-speaker generator.

mod format;
mod manifest;
mod synth;

pub use format::{
    decode_features, encode_features, read_features, write_features, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use manifest::{Manifest, ManifestEntry, SPLIT_TEST, SPLIT_TRAIN, SPLIT_TRUTH};
pub use synth::{
    default_speakers, draw_content, draw_content_space, generate_corpus, render_utterance,
    warp_condition, ContentSpace, CorpusItem, GeneratorConfig, SpeakerRole, SyntheticCorpus,
    SyntheticSpeakerSpec, UtteranceContent, MAX_WARP_CONDITION,
};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::prosody::F0Track;

pub const DEFAULT_FRAME_LENGTH: f64 = 0.025;
pub use crate::prosody::DEFAULT_FRAME_SHIFT;

/// One utterance's spectral frames, F0 track and aperiodicity, frame-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureUtterance {
    pub speaker_id: String,
    pub utterance_id: String,
    /// `n × M` spectral feature frames.
    pub frames: Matrix,
    pub f0: F0Track,
    /// `n × A` band aperiodicity.
    pub ap: Matrix,
    pub frame_shift: f64,
    pub frame_length: f64,
}

impl FeatureUtterance {
    pub fn new(
        speaker_id: impl Into<String>,
        utterance_id: impl Into<String>,
        frames: Matrix,
        f0: Vec<f64>,
        ap: Matrix,
    ) -> Result<Self> {
        let utt = Self {
            speaker_id: speaker_id.into(),
            utterance_id: utterance_id.into(),
            frames,
            f0: F0Track::new(f0, DEFAULT_FRAME_SHIFT)?,
            ap,
            frame_shift: DEFAULT_FRAME_SHIFT,
            frame_length: DEFAULT_FRAME_LENGTH,
        };
        utt.validate()?;
        Ok(utt)
    }

    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn ap_dim(&self) -> usize {
        self.ap.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.frames.rows();
        if self.f0.len() != n || self.ap.rows() != n {
            return Err(Error::Data(format!(
                "utterance {}: {n} frames but {} F0 values and {} aperiodicity rows",
                self.utterance_id,
                self.f0.len(),
                self.ap.rows()
            )));
        }
        if !self.frames.is_finite() || !self.ap.is_finite() {
            return Err(Error::Data(format!(
                "utterance {} has non-finite values",
                self.utterance_id
            )));
        }
        if self.f0.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data(format!(
                "utterance {} has an invalid F0 value",
                self.utterance_id
            )));
        }
        for (name, v) in [
            ("frame shift", self.frame_shift),
            ("frame length", self.frame_length),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Data(format!("{name} must be positive, got {v}")));
            }
        }
        for id in [&self.speaker_id, &self.utterance_id] {
            if id.is_empty() || id.contains(['\t', '\n', '\r']) {
                return Err(Error::Data(format!("invalid label {id:?}")));
            }
        }
        Ok(())
    }
}

/// Stacks the spectral frames of several utterances.
pub fn pool_frames<'a, I>(utterances: I, dim: usize) -> Result<Matrix>
where
    I: IntoIterator<Item = &'a FeatureUtterance>,
{
    Matrix::vstack(utterances.into_iter().map(|u| &u.frames), dim)
}
