use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clvc::container::{read_model, Artifact};
use clvc::corpus::{read_features, Manifest};

fn clvc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clvc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(args: &[&str]) {
    let out = clvc(args);
    assert_eq!(
        code(&out),
        0,
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen_small(dir: &Path, seed: &str) {
    ok(&[
        "gen-corpus",
        "--out",
        p(dir),
        "--seed",
        seed,
        "--feature-dim",
        "8",
        "--phones",
        "4",
        "--train-utterances",
        "4",
        "--test-utterances",
        "2",
        "--frames",
        "30",
    ]);
}

struct Run {
    dae: PathBuf,
    mapper: PathBuf,
    gmm: PathBuf,
    report_proposed: PathBuf,
    report_gmm: PathBuf,
}

fn full_run(root: &Path) -> Run {
    let corpus = root.join("corpus");
    gen_small(&corpus, "3");
    let r = Run {
        dae: root.join("dae.cvcm"),
        mapper: root.join("mapper.cvcm"),
        gmm: root.join("gmm.cvcm"),
        report_proposed: root.join("proposed.json"),
        report_gmm: root.join("gmm.json"),
    };
    ok(&[
        "train-dae",
        "--corpus",
        p(&corpus),
        "--out",
        p(&r.dae),
        "--hidden-widths",
        "6",
        "--max-epochs",
        "3",
    ]);
    ok(&[
        "train-dnn",
        "--corpus",
        p(&corpus),
        "--dae",
        p(&r.dae),
        "--target",
        "vc1",
        "--out",
        p(&r.mapper),
        "--epochs",
        "3",
    ]);
    ok(&[
        "train-gmm",
        "--corpus",
        p(&corpus),
        "--target",
        "vc1",
        "--out",
        p(&r.gmm),
        "--components",
        "4",
    ]);
    ok(&[
        "evaluate",
        "--system",
        "proposed",
        "--dae",
        p(&r.dae),
        "--mapper",
        p(&r.mapper),
        "--corpus",
        p(&corpus),
        "--report",
        p(&r.report_proposed),
        "--classifier-components",
        "2",
    ]);
    ok(&[
        "evaluate",
        "--system",
        "gmm",
        "--gmm",
        p(&r.gmm),
        "--corpus",
        p(&corpus),
        "--report",
        p(&r.report_gmm),
        "--classifier-components",
        "2",
        "--table",
        p(&root.join("gmm.txt")),
    ]);
    r
}

#[test]
fn gen_corpus_layout() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    gen_small(&corpus, "0");
    let manifest = Manifest::read(corpus.join("manifest.tsv")).unwrap();
    assert_eq!(manifest.speakers().len(), 10);
    assert_eq!(manifest.select("dae1", "train").count(), 4);
    assert_eq!(manifest.select("vc2", "test").count(), 2);
    // Every VC speaker holds the other three speakers' test content.
    assert_eq!(manifest.select("vc1", "truth").count(), 6);
    assert_eq!(manifest.select("dae1", "truth").count(), 0);
    let src = manifest.select("vc2", "test").next().unwrap();
    let truth = manifest.find("vc1", &src.utterance_id, "truth").unwrap();
    let a = read_features(corpus.join(&src.path)).unwrap();
    let b = read_features(corpus.join(&truth.path)).unwrap();
    assert_eq!(a.n_frames(), b.n_frames());
    assert_eq!(a.f0.voiced_mask(), b.f0.voiced_mask());
    assert_eq!(b.speaker_id, "vc1");
    assert!(corpus.join("corpus.json").is_file());
    assert!(dir.path().join("c.log.json").is_file());
}

#[test]
fn gen_corpus_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    gen_small(&a, "7");
    gen_small(&b, "7");
    let manifest = Manifest::read(a.join("manifest.tsv")).unwrap();
    for e in &manifest.entries {
        assert_eq!(
            fs::read(a.join(&e.path)).unwrap(),
            fs::read(b.join(&e.path)).unwrap()
        );
    }
    for f in ["manifest.tsv", "corpus.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn invalid_generator_settings_leave_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let r = clvc(&["gen-corpus", "--out", p(&out), "--feature-dim", "1"]);
    assert_ne!(code(&r), 0);
    assert!(String::from_utf8_lossy(&r.stderr).contains("error"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn full_sequence_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let r = full_run(dir.path());
    for path in [&r.dae, &r.mapper, &r.gmm, &r.report_proposed, &r.report_gmm] {
        assert!(path.is_file(), "{}", path.display());
        let mut log = path.as_os_str().to_owned();
        log.push(".log.json");
        let log: serde_json::Value =
            serde_json::from_slice(&fs::read(PathBuf::from(log)).unwrap()).unwrap();
        assert!(log["command"].is_string());
        assert!(log["elapsed_seconds"].is_number());
    }
    let (dae, dae_hash) = read_model(&r.dae).unwrap();
    let (mapper, _) = read_model(&r.mapper).unwrap();
    let Artifact::Mapper(m) = mapper else {
        panic!()
    };
    assert_eq!(m.dae_hash, dae_hash);
    assert_eq!(
        dae.config()["architecture"]["hidden_widths"],
        serde_json::json!([6])
    );
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(&r.report_proposed).unwrap()).unwrap();
    assert_eq!(report["system"], "proposed");
    assert_eq!(report["target_speaker_id"], "vc1");
    assert_eq!(report["utterances"].as_array().unwrap().len(), 6);
    assert_eq!(
        report["model_hashes"]["dae"],
        serde_json::Value::String(dae_hash)
    );
    assert!(dir.path().join("gmm.txt").is_file());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (full_run(a.path()), full_run(b.path()));
    for (x, y) in [
        (&ra.dae, &rb.dae),
        (&ra.mapper, &rb.mapper),
        (&ra.gmm, &rb.gmm),
        (&ra.report_proposed, &rb.report_proposed),
        (&ra.report_gmm, &rb.report_gmm),
    ] {
        assert_eq!(
            fs::read(x).unwrap(),
            fs::read(y).unwrap(),
            "{}",
            x.display()
        );
    }
}

#[test]
fn outputs_are_not_replaced_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    gen_small(&corpus, "1");
    let again = clvc(&["gen-corpus", "--out", p(&corpus)]);
    assert_eq!(code(&again), 1);
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let gmm = dir.path().join("g.cvcm");
    let args = [
        "train-gmm",
        "--corpus",
        p(&corpus),
        "--target",
        "vc2",
        "--out",
        p(&gmm),
        "--components",
        "2",
    ];
    ok(&args);
    let before = fs::read(&gmm).unwrap();
    assert_eq!(code(&clvc(&args)), 1);
    let mut forced = args.to_vec();
    forced.extend(["--force", "--seed", "9"]);
    ok(&forced);
    assert_ne!(fs::read(&gmm).unwrap(), before);
}

#[test]
fn convert_rejects_a_foreign_autoencoder() {
    let dir = tempfile::tempdir().unwrap();
    let r = full_run(dir.path());
    let corpus = dir.path().join("corpus");
    let other = dir.path().join("other.cvcm");
    ok(&[
        "train-dae",
        "--corpus",
        p(&corpus),
        "--out",
        p(&other),
        "--hidden-widths",
        "6",
        "--max-epochs",
        "3",
        "--seed",
        "1",
    ]);
    let input = corpus.join("features/vc2/vc2_test_000.cvcf");
    let out = dir.path().join("x.cvcf");
    let bad = clvc(&[
        "convert",
        "--system",
        "proposed",
        "--dae",
        p(&other),
        "--mapper",
        p(&r.mapper),
        "--input",
        p(&input),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&bad), 2);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("mismatch"));
    assert!(!out.exists());

    ok(&[
        "convert",
        "--system",
        "proposed",
        "--dae",
        p(&r.dae),
        "--mapper",
        p(&r.mapper),
        "--input",
        p(&input),
        "--out",
        p(&out),
    ]);
    let converted = read_features(&out).unwrap();
    assert_eq!(converted.speaker_id, "vc1");
    assert_eq!(
        converted.n_frames(),
        read_features(&input).unwrap().n_frames()
    );

    let batch = dir.path().join("converted");
    ok(&[
        "convert",
        "--system",
        "gmm",
        "--gmm",
        p(&r.gmm),
        "--corpus",
        p(&corpus),
        "--source",
        "vc3",
        "--out",
        p(&batch),
    ]);
    let m = Manifest::read(batch.join("manifest.tsv")).unwrap();
    assert_eq!(m.entries.len(), 2);
    let (_, gmm_hash) = read_model(&r.gmm).unwrap();
    let provenance = m.entries[0].provenance.as_deref().unwrap();
    assert!(provenance.contains("vc3"), "{provenance}");
    assert!(provenance.contains(&gmm_hash[..12]), "{provenance}");
}

#[test]
fn wrong_model_kind_and_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    let r = full_run(dir.path());
    let corpus = dir.path().join("corpus");
    let swapped = clvc(&[
        "evaluate",
        "--system",
        "gmm",
        "--gmm",
        p(&r.dae),
        "--corpus",
        p(&corpus),
        "--report",
        p(&dir.path().join("x.json")),
    ]);
    assert_eq!(code(&swapped), 2);
    let missing = clvc(&[
        "evaluate",
        "--system",
        "proposed",
        "--dae",
        p(&r.dae),
        "--corpus",
        p(&corpus),
        "--report",
        p(&dir.path().join("y.json")),
    ]);
    assert_eq!(code(&missing), 1);
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(code(&clvc(&["train-dae", "--bogus"])), 1);
    assert_eq!(code(&clvc(&[])), 1);
    assert_eq!(code(&clvc(&["evaluate", "--system", "other"])), 1);
    let expectations: [(&str, &[&str]); 4] = [
        (
            "train-dae",
            &["[default: 0.001]", "[default: 15]", "[default: 512,512]"],
        ),
        (
            "train-dnn",
            &["[default: 0.001]", "[default: 25]", "[default: 50,50]"],
        ),
        ("train-gmm", &["[default: 128]"]),
        ("gen-corpus", &["[default: 40]"]),
    ];
    for (cmd, needles) in expectations {
        let out = clvc(&[cmd, "--help"]);
        assert_eq!(code(&out), 0);
        let text = String::from_utf8_lossy(&out.stdout);
        for n in needles {
            assert!(text.contains(n), "{cmd} --help lacks {n}");
        }
    }
    for cmd in ["convert", "evaluate", "inspect"] {
        assert_eq!(code(&clvc(&[cmd, "--help"])), 0);
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.json");
    fs::write(
        &cfg,
        r#"{"feature_dim": 6, "phones": 3, "train_utterances": 2, "test_utterances": 1, "frames": 20, "seed": 4}"#,
    )
    .unwrap();
    let out = dir.path().join("c");
    ok(&[
        "gen-corpus",
        "--config",
        p(&cfg),
        "--out",
        p(&out),
        "--phones",
        "5",
    ]);
    let desc: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("corpus.json")).unwrap()).unwrap();
    assert_eq!(desc["generator"]["feature_dim"], 6);
    assert_eq!(desc["generator"]["phones"], 5);
    assert_eq!(desc["generator"]["seed"], 4);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "[1, 2]").unwrap();
    assert_eq!(
        code(&clvc(&[
            "gen-corpus",
            "--config",
            p(&bad),
            "--out",
            p(&dir.path().join("d"))
        ])),
        1
    );
}

#[test]
fn inspect_reports_and_rejects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let r = full_run(dir.path());
    let out = clvc(&["inspect", p(&r.gmm)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["kind"], "gmm");
    assert_eq!(v["model"]["components"], 4);
    let feat = dir.path().join("corpus/features/vc1/vc1_train_000.cvcf");
    let out = clvc(&["inspect", p(&feat)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["frames"], 30);

    let mut bytes = fs::read(&r.mapper).unwrap();
    bytes[5] ^= 0xff;
    let broken = dir.path().join("broken.cvcm");
    fs::write(&broken, &bytes).unwrap();
    let out = clvc(&["inspect", p(&broken)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte 4"));
}
