//! Training and conversion for both systems.
//!
//! Proposed: frames → DAE bottleneck → mapping network → target frames.
//! Baseline: frames → target-speaker GMM tokenizer → component means.
//!
//! Both systems rescale F0 to the target's mean voiced F0 and copy aperiodicity.
//! Neither uses any source-speaker data for training.

use std::fmt;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::corpus::{pool_frames, FeatureUtterance};
use crate::dae::DaeModel;
use crate::error::{Error, Result};
use crate::gmm::{gmm_fit, gmm_tokenize, GmmConfig, GmmModel};
use crate::mapper::{mapper_convert, mapper_train, MapperConfig, MapperModel, MapperTrainReport};
use crate::nn::Matrix;
use crate::prosody::{pass_aperiodicity, transform_f0, SpeakerProfile};

/// Normalized DAE inputs beyond this many standard deviations count as out of range.
const OUT_OF_RANGE_Z: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Proposed,
    #[serde(rename = "gmm")]
    GmmBaseline,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Proposed => "proposed",
            SystemKind::GmmBaseline => "gmm",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VcSystem {
    pub kind: SystemKind,
    pub dae: Option<DaeModel>,
    pub mapper: Option<MapperModel>,
    pub gmm: Option<GmmModel>,
    pub target_profile: SpeakerProfile,
}

/// The single speaker of a training corpus.
pub fn single_speaker(corpus: &[FeatureUtterance]) -> Result<&str> {
    let first = corpus
        .first()
        .ok_or_else(|| Error::Data("target corpus is empty".into()))?;
    if let Some(other) = corpus.iter().find(|u| u.speaker_id != first.speaker_id) {
        return Err(Error::Data(format!(
            "target corpus mixes speakers {} and {}",
            first.speaker_id, other.speaker_id
        )));
    }
    Ok(&first.speaker_id)
}

fn target_profile(corpus: &[FeatureUtterance]) -> Result<SpeakerProfile> {
    let id = single_speaker(corpus)?;
    SpeakerProfile::from_tracks(id, corpus.iter().map(|u| &u.f0))
}

fn pooled(corpus: &[FeatureUtterance]) -> Result<Matrix> {
    let dim = corpus[0].feature_dim();
    pool_frames(corpus, dim)
        .map_err(|_| Error::Data("target utterances disagree on feature dimension".into()))
}

/// Trains the mapping network on every frame of `target_corpus` through `dae`.
pub fn train_proposed(
    dae: &DaeModel,
    target_corpus: &[FeatureUtterance],
    config: &MapperConfig,
) -> Result<(VcSystem, MapperTrainReport)> {
    let profile = target_profile(target_corpus)?;
    let frames = pooled(target_corpus)?;
    let bottleneck = dae.encode(&frames)?;
    info!(
        "training mapping network for {} on {} frames",
        profile.speaker_id,
        frames.rows()
    );
    let (mapper, report) = mapper_train(&bottleneck, &frames, &profile.speaker_id, config)?;
    let system = VcSystem {
        kind: SystemKind::Proposed,
        dae: Some(dae.clone()),
        mapper: Some(mapper),
        gmm: None,
        target_profile: profile,
    };
    Ok((system, report))
}

/// Fits a `components`-mixture GMM tokenizer on the pooled target frames.
pub fn train_baseline(
    target_corpus: &[FeatureUtterance],
    components: usize,
    config: &GmmConfig,
) -> Result<(VcSystem, Vec<f64>)> {
    let profile = target_profile(target_corpus)?;
    let frames = pooled(target_corpus)?;
    info!(
        "fitting {components}-component GMM for {} on {} frames",
        profile.speaker_id,
        frames.rows()
    );
    let (mut gmm, trace) = gmm_fit(&frames, components, config)?;
    gmm.set_target_speaker_id(profile.speaker_id.clone());
    let system = VcSystem {
        kind: SystemKind::GmmBaseline,
        dae: None,
        mapper: None,
        gmm: Some(gmm),
        target_profile: profile,
    };
    Ok((system, trace))
}

impl VcSystem {
    pub fn target_speaker_id(&self) -> &str {
        &self.target_profile.speaker_id
    }

    pub fn feature_dim(&self) -> Result<usize> {
        match self.kind {
            SystemKind::Proposed => Ok(self.proposed_parts()?.0.feature_dim()),
            SystemKind::GmmBaseline => Ok(self.baseline_gmm()?.feature_dim()),
        }
    }

    fn proposed_parts(&self) -> Result<(&DaeModel, &MapperModel)> {
        match (&self.dae, &self.mapper) {
            (Some(d), Some(m)) => Ok((d, m)),
            _ => Err(Error::Mismatch(
                "proposed system needs a DAE and a mapper".into(),
            )),
        }
    }

    fn baseline_gmm(&self) -> Result<&GmmModel> {
        self.gmm
            .as_ref()
            .ok_or_else(|| Error::Mismatch("baseline system needs a GMM".into()))
    }

    /// Converts spectral frames only.
    pub fn convert_frames(&self, frames: &Matrix) -> Result<Matrix> {
        match self.kind {
            SystemKind::Proposed => {
                let (dae, mapper) = self.proposed_parts()?;
                log_out_of_range(dae, frames)?;
                mapper_convert(mapper, &dae.encode(frames)?)
            }
            SystemKind::GmmBaseline => Ok(gmm_tokenize(self.baseline_gmm()?, frames)?.0),
        }
    }

    /// Converts one utterance: spectral frames, F0 rescaled to the target mean, aperiodicity copied.
    pub fn convert(&self, source: &FeatureUtterance) -> Result<FeatureUtterance> {
        let frames = self.convert_frames(&source.frames)?;
        let f0 = transform_f0(&source.f0, self.target_profile.mean_voiced_f0)?;
        Ok(FeatureUtterance {
            speaker_id: self.target_profile.speaker_id.clone(),
            utterance_id: source.utterance_id.clone(),
            frames,
            f0,
            ap: pass_aperiodicity(&source.ap),
            frame_shift: source.frame_shift,
            frame_length: source.frame_length,
        })
    }
}

fn log_out_of_range(dae: &DaeModel, frames: &Matrix) -> Result<()> {
    if frames.is_empty() {
        return Ok(());
    }
    let z = dae.norm().normalize(frames)?;
    let outside = z
        .as_slice()
        .iter()
        .filter(|v| v.abs() > OUT_OF_RANGE_Z)
        .count();
    if outside > 0 {
        warn!(
            "{:.2}% of source feature values lie beyond {OUT_OF_RANGE_Z} standard deviations of the DAE training data",
            100.0 * outside as f64 / z.as_slice().len() as f64
        );
    }
    Ok(())
}
