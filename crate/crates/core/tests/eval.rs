mod common;

use clvc::corpus::{pool_frames, FeatureUtterance, SPLIT_TEST, SPLIT_TRAIN};
use clvc::eval::{
    evaluate, mcd, mcd_frames, speaker_classifier_fit, EvalReport, SpeakerClassifier, MCD_SCALE,
};
use clvc::gmm::{GmmConfig, GmmModel};
use clvc::mapper::MapperConfig;
use clvc::nn::Matrix;
use clvc::pipeline::{train_baseline, train_proposed};
use clvc::Error;
use common::{small_corpus, small_dae, split};
use proptest::prelude::*;

fn matrix(n: usize, d: usize) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(-10.0f64..10.0, n * d)
        .prop_map(move |v| Matrix::from_vec(n, d, v).unwrap())
}

fn pair() -> impl Strategy<Value = (Matrix, Matrix)> {
    (1usize..6, 1usize..6).prop_flat_map(|(n, d)| (matrix(n, d), matrix(n, d)))
}

#[test]
fn identical_frames_have_zero_distortion() {
    let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, -4.0, 5.0, 6.0]).unwrap();
    assert_eq!(mcd(&a, &a, true).unwrap(), 0.0);
    assert_eq!(mcd(&a, &a, false).unwrap(), 0.0);
}

#[test]
fn unit_difference_in_one_retained_dimension() {
    let a = Matrix::from_vec(1, 2, vec![5.0, 0.0]).unwrap();
    let b = Matrix::from_vec(1, 2, vec![-3.0, 1.0]).unwrap();
    let v = mcd(&a, &b, true).unwrap();
    assert!((v - 6.1418).abs() < 1e-4, "{v}");
    assert!((v - 10.0 * 2f64.sqrt() / 10f64.ln()).abs() < 1e-12);
    assert_eq!(v, MCD_SCALE);
}

#[test]
fn shape_mismatch_and_empty_input() {
    let a = Matrix::zeros(2, 3);
    assert!(matches!(
        mcd(&a, &Matrix::zeros(2, 4), true),
        Err(Error::Shape(_))
    ));
    assert!(matches!(
        mcd(&a, &Matrix::zeros(3, 3), true),
        Err(Error::Shape(_))
    ));
    assert!(matches!(
        mcd(&Matrix::zeros(0, 3), &Matrix::zeros(0, 3), true),
        Err(Error::Data(_))
    ));
}

proptest! {
    #[test]
    fn matches_scalar_loop((a, b) in pair(), skip: bool) {
        let mut total = 0.0;
        for t in 0..a.rows() {
            let mut sq = 0.0;
            for d in usize::from(skip)..a.cols() {
                let diff = a.get(t, d) - b.get(t, d);
                sq += diff * diff;
            }
            total += 10.0 / std::f64::consts::LN_10 * (2.0 * sq).sqrt();
        }
        let oracle = total / a.rows() as f64;
        let v = mcd(&a, &b, skip).unwrap();
        prop_assert!((v - oracle).abs() <= 1e-9 * oracle.max(1.0), "{} vs {}", v, oracle);
    }

    #[test]
    fn metric_like((a, b) in pair()) {
        let ab = mcd(&a, &b, false).unwrap();
        prop_assert_eq!(ab, mcd(&b, &a, false).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab > 0.0, a != b);
        prop_assert!(mcd_frames(&a, &b, false).unwrap().iter().all(|v| *v >= 0.0));
    }
}

fn classifier(corpus: &clvc::corpus::SyntheticCorpus, speakers: &[&str]) -> SpeakerClassifier {
    let data: Vec<(String, Matrix)> = speakers
        .iter()
        .map(|s| {
            let u = split(corpus, s, SPLIT_TRAIN);
            (
                s.to_string(),
                pool_frames(&u, corpus.config.feature_dim).unwrap(),
            )
        })
        .collect();
    speaker_classifier_fit(&data, 4, &GmmConfig::default()).unwrap()
}

#[test]
fn natural_held_out_speech_is_classified_perfectly() {
    let corpus = small_corpus(8);
    let speakers = ["vc1", "vc2", "vc3", "vc4"];
    let c = classifier(&corpus, &speakers);
    assert_eq!(c.speakers(), speakers);
    for (i, s) in speakers.iter().enumerate() {
        for u in split(&corpus, s, SPLIT_TEST) {
            assert_eq!(c.classify(&u.frames).unwrap(), i);
            assert_eq!(c.classify_speaker(&u.frames).unwrap(), *s);
        }
    }
}

#[test]
fn single_speaker_classifier_always_answers_that_speaker() {
    let corpus = small_corpus(4);
    let c = classifier(&corpus, &["vc2"]);
    for s in ["vc1", "vc3", "dae1"] {
        for u in split(&corpus, s, SPLIT_TEST) {
            assert_eq!(c.classify_speaker(&u.frames).unwrap(), "vc2");
        }
    }
}

#[test]
fn ties_go_to_the_lowest_index() {
    let g = GmmModel::new(
        vec![1.0],
        Matrix::zeros(1, 2),
        Matrix::filled(1, 2, 1.0),
        "a",
    )
    .unwrap();
    let mut h = g.clone();
    h.set_target_speaker_id("b".to_string());
    let c = SpeakerClassifier { models: vec![g, h] };
    assert_eq!(c.classify(&Matrix::filled(3, 2, 0.3)).unwrap(), 0);
}

#[test]
fn classifier_input_checks() {
    assert!(matches!(
        speaker_classifier_fit(&[], 2, &GmmConfig::default()),
        Err(Error::Data(_))
    ));
    let m = Matrix::filled(20, 2, 1.0);
    let dup = [("a".to_string(), m.clone()), ("a".to_string(), m)];
    assert!(matches!(
        speaker_classifier_fit(&dup, 1, &GmmConfig::default()),
        Err(Error::Data(_))
    ));
}

struct Scenario {
    sources: Vec<FeatureUtterance>,
    truth: Vec<FeatureUtterance>,
    classifier: SpeakerClassifier,
}

fn scenario(corpus: &clvc::corpus::SyntheticCorpus) -> Scenario {
    let mut sources = Vec::new();
    let mut truth = Vec::new();
    for s in ["vc2", "vc3"] {
        for item in corpus.utterances(s, SPLIT_TEST) {
            sources.push(item.utterance.clone());
            truth.push(corpus.render_as(item, "vc1").unwrap());
        }
    }
    Scenario {
        sources,
        truth,
        classifier: classifier(corpus, &["vc1", "vc2", "vc3"]),
    }
}

#[test]
fn report_aggregates_round_trip_and_leave_inputs_alone() {
    let corpus = small_corpus(8);
    let sc = scenario(&corpus);
    let target = split(&corpus, "vc1", SPLIT_TRAIN);
    let (system, _) = train_baseline(&target, 8, &GmmConfig::default()).unwrap();
    let before = (system.clone(), sc.sources.clone(), sc.classifier.clone());
    let report = evaluate(&system, &sc.sources, &sc.truth, Some(&sc.classifier), true).unwrap();
    assert_eq!(before, (system, sc.sources.clone(), sc.classifier.clone()));

    assert_eq!(report.utterances.len(), sc.sources.len());
    let mut sum = 0.0;
    let mut src_sum = 0.0;
    for u in &report.utterances {
        sum += u.mcd;
        src_sum += u.source_mcd;
    }
    let n = report.utterances.len() as f64;
    assert!((report.mean_mcd - sum / n).abs() < 1e-12);
    assert!((report.mean_source_mcd - src_sum / n).abs() < 1e-12);
    let acc = report.accuracy.unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(report.source_accuracy, Some(0.0));

    let text = serde_json::to_string(&report).unwrap();
    let back: EvalReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);

    let table = report.to_table();
    assert!(table.lines().any(|l| l.starts_with("vc2 2 ")));
    assert!(table.lines().any(|l| l.starts_with("vc3 2 ")));
}

#[test]
fn identity_scenario_beats_a_different_speaker() {
    let corpus = small_corpus(8);
    let dae = small_dae(&corpus);
    let target = split(&corpus, "vc1", SPLIT_TRAIN);
    let (system, _) = train_proposed(&dae, &target, &MapperConfig::default()).unwrap();
    let sc = scenario(&corpus);
    let identity = evaluate(&system, &sc.truth, &sc.truth, None, true).unwrap();
    let other = evaluate(&system, &sc.sources, &sc.truth, None, true).unwrap();
    assert!(identity.mean_mcd < other.mean_source_mcd);
    assert_eq!(identity.accuracy, None);
}

#[test]
fn evaluation_alignment_errors() {
    let corpus = small_corpus(4);
    let sc = scenario(&corpus);
    let target = split(&corpus, "vc1", SPLIT_TRAIN);
    let (system, _) = train_baseline(&target, 2, &GmmConfig::default()).unwrap();
    let r = evaluate(&system, &sc.sources[..1], &sc.truth, None, true);
    assert!(matches!(r, Err(Error::Alignment(_))));
    let mut short = sc.truth.clone();
    short[0] = FeatureUtterance::new(
        "vc1",
        "x",
        Matrix::zeros(3, 4),
        vec![100.0; 3],
        Matrix::zeros(3, 5),
    )
    .unwrap();
    assert!(matches!(
        evaluate(&system, &sc.sources, &short, None, true),
        Err(Error::Alignment(_))
    ));
    assert!(matches!(
        evaluate(&system, &[], &[], None, true),
        Err(Error::Data(_))
    ));
}
