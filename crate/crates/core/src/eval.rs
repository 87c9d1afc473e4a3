//! Objective evaluation: mel-cepstral distortion against frame-aligned ground truth
//! and GMM speaker classification of converted utterances.

use std::collections::BTreeMap;
use std::f64::consts::{LN_10, SQRT_2};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::FeatureUtterance;
use crate::error::{Error, Result};
use crate::gmm::{gmm_fit, GmmConfig, GmmModel};
use crate::nn::Matrix;
use crate::pipeline::{SystemKind, VcSystem};

/// `10 √2 / ln 10`, the dB scale factor of mel-cepstral distortion.
pub const MCD_SCALE: f64 = 10.0 * SQRT_2 / LN_10;

/// Per-frame distortion in dB. With `skip_c0` the first coefficient is ignored.
pub fn mcd_frames(a: &Matrix, b: &Matrix, skip_c0: bool) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "cannot compare {:?} frames with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let start = usize::from(skip_c0).min(a.cols());
    Ok(a.row_iter()
        .zip(b.row_iter())
        .map(|(x, y)| {
            let sq: f64 = x[start..]
                .iter()
                .zip(&y[start..])
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
            MCD_SCALE * sq.sqrt()
        })
        .collect())
}

/// Mean per-frame distortion in dB.
pub fn mcd(a: &Matrix, b: &Matrix, skip_c0: bool) -> Result<f64> {
    let per = mcd_frames(a, b, skip_c0)?;
    if per.is_empty() {
        return Err(Error::Data("distortion of an empty frame sequence".into()));
    }
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// One GMM per speaker; an utterance goes to the speaker with the highest total log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerClassifier {
    pub models: Vec<GmmModel>,
}

pub fn speaker_classifier_fit(
    corpora: &[(String, Matrix)],
    components: usize,
    config: &GmmConfig,
) -> Result<SpeakerClassifier> {
    if corpora.is_empty() {
        return Err(Error::Data(
            "speaker classifier needs at least one speaker".into(),
        ));
    }
    let mut models = Vec::with_capacity(corpora.len());
    for (i, (speaker, frames)) in corpora.iter().enumerate() {
        if corpora[..i].iter().any(|(s, _)| s == speaker) {
            return Err(Error::Data(format!("speaker {speaker} appears twice")));
        }
        let (mut gmm, _) = gmm_fit(frames, components, config)?;
        gmm.set_target_speaker_id(speaker.clone());
        models.push(gmm);
    }
    Ok(SpeakerClassifier { models })
}

impl SpeakerClassifier {
    pub fn speakers(&self) -> Vec<&str> {
        self.models
            .iter()
            .map(GmmModel::target_speaker_id)
            .collect()
    }

    /// Total log-likelihood of `frames` under each speaker model.
    pub fn scores(&self, frames: &Matrix) -> Result<Vec<f64>> {
        self.models
            .iter()
            .map(|m| Ok(m.frame_log_likelihoods(frames)?.iter().sum()))
            .collect()
    }

    /// Index of the best-scoring speaker; ties go to the lowest index.
    pub fn classify(&self, frames: &Matrix) -> Result<usize> {
        let scores = self.scores(frames)?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn classify_speaker(&self, frames: &Matrix) -> Result<&str> {
        Ok(self.models[self.classify(frames)?].target_speaker_id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub utterance_id: String,
    pub source_speaker_id: String,
    pub frames: usize,
    /// Converted frames against the target ground truth.
    pub mcd: f64,
    /// Unconverted source frames against the target ground truth.
    pub source_mcd: f64,
    pub converted_label: Option<String>,
    pub source_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: SystemKind,
    pub target_speaker_id: String,
    pub skip_c0: bool,
    pub utterances: Vec<UtteranceScore>,
    pub mean_mcd: f64,
    pub mean_source_mcd: f64,
    /// Share of converted utterances classified as the target.
    pub accuracy: Option<f64>,
    /// Share of unconverted source utterances classified as the target.
    pub source_accuracy: Option<f64>,
    pub model_hashes: BTreeMap<String, String>,
    pub config: serde_json::Value,
}

impl EvalReport {
    /// Whitespace-separated table with one row per source speaker, for plotting.
    pub fn to_table(&self) -> String {
        let mut by_speaker: BTreeMap<&str, Vec<&UtteranceScore>> = BTreeMap::new();
        for u in &self.utterances {
            by_speaker.entry(&u.source_speaker_id).or_default().push(u);
        }
        let mut out = format!(
            "# system={} target={}\n# source utterances mcd source_mcd accuracy source_accuracy\n",
            self.system, self.target_speaker_id
        );
        for (speaker, rows) in by_speaker {
            let n = rows.len() as f64;
            let mean =
                |f: &dyn Fn(&UtteranceScore) -> f64| rows.iter().map(|u| f(u)).sum::<f64>() / n;
            let hit = |label: &Option<String>| {
                f64::from(u8::from(
                    label.as_deref() == Some(self.target_speaker_id.as_str()),
                ))
            };
            let _ = writeln!(
                out,
                "{speaker} {} {:.6} {:.6} {:.6} {:.6}",
                rows.len(),
                mean(&|u| u.mcd),
                mean(&|u| u.source_mcd),
                mean(&|u| hit(&u.converted_label)),
                mean(&|u| hit(&u.source_label)),
            );
        }
        out
    }
}

/// Converts every source utterance and scores it against its aligned target rendering.
///
/// `target_truth[i]` must be the target speaker's rendering of the content of `sources[i]`.
pub fn evaluate(
    system: &VcSystem,
    sources: &[FeatureUtterance],
    target_truth: &[FeatureUtterance],
    classifier: Option<&SpeakerClassifier>,
    skip_c0: bool,
) -> Result<EvalReport> {
    if sources.len() != target_truth.len() {
        return Err(Error::Alignment(format!(
            "{} sources but {} ground-truth utterances",
            sources.len(),
            target_truth.len()
        )));
    }
    if sources.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let target = system.target_speaker_id();
    let mut utterances = Vec::with_capacity(sources.len());
    for (src, truth) in sources.iter().zip(target_truth) {
        if src.n_frames() != truth.n_frames() {
            return Err(Error::Alignment(format!(
                "utterance {}: {} source frames but {} ground-truth frames",
                src.utterance_id,
                src.n_frames(),
                truth.n_frames()
            )));
        }
        let converted = system.convert(src)?;
        let label = |frames: &Matrix| -> Result<Option<String>> {
            classifier
                .map(|c| c.classify_speaker(frames).map(str::to_owned))
                .transpose()
        };
        utterances.push(UtteranceScore {
            utterance_id: src.utterance_id.clone(),
            source_speaker_id: src.speaker_id.clone(),
            frames: src.n_frames(),
            mcd: mcd(&converted.frames, &truth.frames, skip_c0)?,
            source_mcd: mcd(&src.frames, &truth.frames, skip_c0)?,
            converted_label: label(&converted.frames)?,
            source_label: label(&src.frames)?,
        });
    }
    let n = utterances.len() as f64;
    let share = |f: &dyn Fn(&UtteranceScore) -> &Option<String>| {
        classifier.map(|_| {
            utterances
                .iter()
                .filter(|u| f(u).as_deref() == Some(target))
                .count() as f64
                / n
        })
    };
    Ok(EvalReport {
        system: system.kind,
        target_speaker_id: target.to_owned(),
        skip_c0,
        mean_mcd: utterances.iter().map(|u| u.mcd).sum::<f64>() / n,
        mean_source_mcd: utterances.iter().map(|u| u.source_mcd).sum::<f64>() / n,
        accuracy: share(&|u| &u.converted_label),
        source_accuracy: share(&|u| &u.source_label),
        utterances,
        model_hashes: BTreeMap::new(),
        config: serde_json::Value::Null,
    })
}
