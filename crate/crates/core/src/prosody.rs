//! Pitch transformation by mean-F0 ratio, and aperiodicity passthrough.
//!
//! Unvoiced frames are encoded as 0 Hz. The target mean `F_T` is taken over every
//! voiced frame of the target's training data; the source mean `F_S` is taken per
//! utterance. Voiced frames are scaled by `F_T / F_S`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Matrix, NormStats};

pub const DEFAULT_FRAME_SHIFT: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F0Track {
    /// Per-frame F0 in Hz; 0.0 marks an unvoiced frame.
    pub values: Vec<f64>,
    /// Seconds between frames.
    pub frame_shift: f64,
}

impl F0Track {
    pub fn new(values: Vec<f64>, frame_shift: f64) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Prosody(format!(
                "frame {i} has invalid F0 {}",
                values[i]
            )));
        }
        Ok(Self {
            values,
            frame_shift,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn voiced(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|&v| v > 0.0)
    }

    pub fn voiced_mask(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v > 0.0).collect()
    }
}

/// Per-speaker prosody statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub mean_voiced_f0: f64,
    pub norm_stats: Option<NormStats>,
}

impl SpeakerProfile {
    pub fn from_tracks<'a, I>(speaker_id: impl Into<String>, tracks: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a F0Track>,
    {
        Ok(Self {
            speaker_id: speaker_id.into(),
            mean_voiced_f0: mean_voiced_f0(tracks)?,
            norm_stats: None,
        })
    }
}

/// Arithmetic mean over strictly positive frames of all tracks.
pub fn mean_voiced_f0<'a, I>(tracks: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a F0Track>,
{
    let (sum, count) = tracks
        .into_iter()
        .flat_map(F0Track::voiced)
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if count == 0 {
        return Err(Error::Prosody("no voiced frames to average".into()));
    }
    Ok(sum / count as f64)
}

/// Scales every voiced frame by `target_mean / F_S`, where `F_S` is this track's voiced mean.
pub fn transform_f0(source: &F0Track, target_mean: f64) -> Result<F0Track> {
    if !(target_mean > 0.0 && target_mean.is_finite()) {
        return Err(Error::Prosody(format!(
            "target mean F0 must be positive, got {target_mean}"
        )));
    }
    let source_mean = mean_voiced_f0([source])?;
    let factor = target_mean / source_mean;
    let values = source
        .values
        .iter()
        .map(|&v| if v > 0.0 { v * factor } else { 0.0 })
        .collect();
    Ok(F0Track {
        values,
        frame_shift: source.frame_shift,
    })
}

pub fn pass_aperiodicity(source_ap: &Matrix) -> Matrix {
    source_ap.clone()
}
