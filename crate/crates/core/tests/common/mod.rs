#![allow(dead_code)]

use clvc::corpus::{
    default_speakers, generate_corpus, FeatureUtterance, GeneratorConfig, SyntheticCorpus,
    SPLIT_TRAIN,
};
use clvc::dae::{DaeArchitecture, DaeModel, DaeTrainConfig};

pub fn small_config(dim: usize) -> GeneratorConfig {
    GeneratorConfig {
        feature_dim: dim,
        phones: 4,
        train_utterances: 6,
        test_utterances: 2,
        frames_per_utterance: 40,
        speaker_warp: 0.3,
        speaker_offset: 1.0,
        ..GeneratorConfig::default()
    }
}

pub fn small_corpus(dim: usize) -> SyntheticCorpus {
    let cfg = small_config(dim);
    generate_corpus(&default_speakers(&cfg).unwrap(), &cfg).unwrap()
}

pub fn split(corpus: &SyntheticCorpus, speaker: &str, split: &str) -> Vec<FeatureUtterance> {
    corpus
        .utterances(speaker, split)
        .map(|i| i.utterance.clone())
        .collect()
}

/// A briefly trained autoencoder on the corpus's autoencoder speakers.
pub fn small_dae(corpus: &SyntheticCorpus) -> DaeModel {
    let dim = corpus.config.feature_dim;
    let utts: Vec<FeatureUtterance> = corpus
        .speakers
        .iter()
        .filter(|s| s.role == clvc::corpus::SpeakerRole::Dae)
        .flat_map(|s| split(corpus, &s.speaker_id, SPLIT_TRAIN))
        .collect();
    let arch = DaeArchitecture {
        hidden_widths: vec![16],
        bottleneck: None,
        tied: true,
    };
    let cfg = DaeTrainConfig {
        max_epochs: 40,
        ..DaeTrainConfig::default()
    };
    DaeModel::build(dim, &arch, 1)
        .unwrap()
        .train(&utts, &cfg)
        .unwrap()
        .0
}
