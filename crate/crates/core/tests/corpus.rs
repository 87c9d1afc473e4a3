use clvc::corpus::{
    decode_features, default_speakers, draw_content, draw_content_space, encode_features,
    generate_corpus, read_features, render_utterance, write_features, FeatureUtterance,
    GeneratorConfig, SyntheticSpeakerSpec, SPLIT_TEST, SPLIT_TRAIN,
};
use clvc::nn::Matrix;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn config(dim: usize) -> GeneratorConfig {
    GeneratorConfig {
        feature_dim: dim,
        phones: 5,
        train_utterances: 3,
        test_utterances: 1,
        frames_per_utterance: 60,
        content_dim: Some(dim),
        ..GeneratorConfig::default()
    }
}

#[test]
fn identical_neutral_speakers_coincide() {
    let cfg = config(4);
    let space = draw_content_space(&cfg).unwrap();
    let content = draw_content(&space, &cfg, "u", 3).unwrap();
    let a = render_utterance(&SyntheticSpeakerSpec::neutral("a", 4, 120.0), &content).unwrap();
    let b = render_utterance(&SyntheticSpeakerSpec::neutral("b", 4, 120.0), &content).unwrap();
    assert_eq!(a.frames, b.frames);
    assert_eq!(a.frames, content.latent);
}

#[test]
fn zero_jitter_frames_of_a_phone_are_identical() {
    let cfg = GeneratorConfig {
        jitter_sigma: 0.0,
        ..config(6)
    };
    let specs = default_speakers(&cfg).unwrap();
    let corpus = generate_corpus(&specs[..2], &cfg).unwrap();
    for item in &corpus.items {
        let spec = &corpus.speakers[item.speaker];
        for (t, &p) in item.content.phones.iter().enumerate() {
            // frame = warp · prototype + offset, exactly.
            let proto = corpus.space.prototypes.row(p);
            for d in 0..6 {
                let expect: f64 = spec
                    .warp
                    .row(d)
                    .iter()
                    .zip(proto)
                    .map(|(w, z)| w * z)
                    .sum::<f64>()
                    + spec.offset[d];
                assert_eq!(item.utterance.frames.get(t, d), expect);
            }
        }
    }
}

#[test]
fn regression_between_parallel_renderings_recovers_relative_warp() {
    let dim = 5;
    let cfg = config(dim);
    let specs = default_speakers(&cfg).unwrap();
    let (a, b) = (&specs[6], &specs[7]);
    let space = draw_content_space(&cfg).unwrap();
    let content = draw_content(&space, &cfg, "u", 17).unwrap();
    let xa = render_utterance(a, &content).unwrap().frames;
    let xb = render_utterance(b, &content).unwrap().frames;

    // Least squares with an intercept column: [xa 1] · C = xb.
    let n = xa.rows();
    let design = DMatrix::from_fn(n, dim + 1, |r, c| if c < dim { xa.get(r, c) } else { 1.0 });
    let target = DMatrix::from_fn(n, dim, |r, c| xb.get(r, c));
    let coef = design.svd(true, true).solve(&target, 1e-14).unwrap();

    let wa = DMatrix::from_row_slice(dim, dim, a.warp.as_slice());
    let wb = DMatrix::from_row_slice(dim, dim, b.warp.as_slice());
    let relative = &wb * wa.try_inverse().unwrap();
    let intercept = nalgebra::DVector::from_vec(b.offset.clone())
        - &relative * nalgebra::DVector::from_vec(a.offset.clone());
    for i in 0..dim {
        for j in 0..dim {
            // coef is (dim+1) × dim with coef[(j, i)] the weight of input j for output i.
            assert!((coef[(j, i)] - relative[(i, j)]).abs() < 1e-6);
        }
        assert!((coef[(dim, i)] - intercept[i]).abs() < 1e-6);
    }
}

#[test]
fn generation_is_a_pure_function_of_the_seed() {
    let cfg = config(4);
    let specs = default_speakers(&cfg).unwrap();
    let x = generate_corpus(&specs, &cfg).unwrap();
    let y = generate_corpus(&specs, &cfg).unwrap();
    assert_eq!(x.items.len(), y.items.len());
    for (a, b) in x.items.iter().zip(&y.items) {
        assert_eq!(a.utterance, b.utterance);
    }
    let other = generate_corpus(&specs, &GeneratorConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(x.items[0].utterance.frames, other.items[0].utterance.frames);
}

#[test]
fn splits_and_truth_renderings() {
    let cfg = config(4);
    let specs = default_speakers(&cfg).unwrap();
    let corpus = generate_corpus(&specs, &cfg).unwrap();
    assert_eq!(corpus.utterances("vc2", SPLIT_TRAIN).count(), 3);
    let test: Vec<_> = corpus.utterances("vc2", SPLIT_TEST).collect();
    assert_eq!(test.len(), 1);
    let truth = corpus.render_as(test[0], "vc1").unwrap();
    assert_eq!(truth.speaker_id, "vc1");
    assert_eq!(truth.utterance_id, test[0].utterance.utterance_id);
    assert_eq!(truth.n_frames(), test[0].utterance.n_frames());
    let voiced_src: Vec<bool> = test[0].utterance.f0.voiced_mask();
    assert_eq!(truth.f0.voiced_mask(), voiced_src);
}

#[test]
fn degenerate_warp_is_a_generation_error() {
    let cfg = config(3);
    let mut spec = SyntheticSpeakerSpec::neutral("bad", 3, 100.0);
    spec.warp.set(0, 0, 1e-6);
    let err = generate_corpus(&[spec], &cfg).unwrap_err();
    assert!(matches!(err, clvc::Error::Generation(_)));
}

#[test]
fn too_few_phones_or_dims_rejected() {
    let specs = [SyntheticSpeakerSpec::neutral("a", 4, 100.0)];
    for cfg in [
        GeneratorConfig {
            phones: 1,
            ..config(4)
        },
        GeneratorConfig {
            feature_dim: 1,
            ..config(4)
        },
    ] {
        assert!(matches!(
            generate_corpus(&specs, &cfg),
            Err(clvc::Error::Generation(_))
        ));
    }
}

#[test]
fn file_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(4);
    let specs = default_speakers(&cfg).unwrap();
    let corpus = generate_corpus(&specs[..1], &cfg).unwrap();
    let utt = &corpus.items[0].utterance;
    let path = dir.path().join("nested/u.cvcf");
    write_features(utt, &path).unwrap();
    assert_eq!(&read_features(&path).unwrap(), utt);
    let missing = read_features(dir.path().join("absent.cvcf")).unwrap_err();
    assert_eq!(missing.exit_code(), 2);
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6f64,
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(f64::MAX),
        Just(5e-324),
    ]
}

prop_compose! {
    fn utterances()(n in 0usize..12, m in 1usize..6, a in 0usize..4)
        (frames in prop::collection::vec(finite(), n * m),
         f0 in prop::collection::vec(prop_oneof![Just(0.0), 50.0..400.0f64], n),
         ap in prop::collection::vec(0.0..1.0f64, n * a),
         shift in 0.001..0.02f64,
         speaker in "[a-z][a-z0-9_]{0,8}",
         id in "[A-Za-z0-9_.-]{1,20}",
         n in Just(n), m in Just(m), a in Just(a)) -> FeatureUtterance
    {
        let mut u = FeatureUtterance::new(
            speaker,
            id,
            Matrix::from_vec(n, m, frames).unwrap(),
            f0,
            Matrix::from_vec(n, a, ap).unwrap(),
        )
        .unwrap();
        u.frame_shift = shift;
        u.f0.frame_shift = shift;
        u
    }
}

proptest! {
    #[test]
    fn feature_round_trip_is_identity(u in utterances()) {
        let bytes = encode_features(&u).unwrap();
        let back = decode_features(&bytes).unwrap();
        prop_assert_eq!(&back, &u);
        for (x, y) in back.frames.as_slice().iter().zip(u.frames.as_slice()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn random_header_corruption_never_panics(u in utterances(), pos in 0usize..34, byte in any::<u8>()) {
        let mut bytes = encode_features(&u).unwrap();
        bytes[pos] = byte;
        // Either the byte was harmless or decoding fails with a format error.
        if let Err(e) = decode_features(&bytes) {
            let is_format = matches!(e, clvc::Error::Format { .. });
            prop_assert!(is_format, "{}", e);
        }
    }
}
