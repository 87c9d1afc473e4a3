//! Command-line front end.
//!
//! Every command writes one artifact plus a run log at `<artifact>.log.json`, and
//! refuses to replace an existing artifact unless `--force` is given. Model files
//! and reports embed the resolved configuration but never input paths, so the
//! same seeds reproduce them byte for byte wherever they are run.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::container::{
    self, decode_model, encode_dae, encode_gmm, encode_mapper, read_model_of, Artifact, ModelKind,
};
use crate::corpus::{
    decode_features, default_speakers, generate_corpus, read_features, write_features,
    FeatureUtterance, GeneratorConfig, Manifest, ManifestEntry, SpeakerRole, SyntheticSpeakerSpec,
    FEATURE_MAGIC, SPLIT_TEST, SPLIT_TRAIN, SPLIT_TRUTH,
};
use crate::dae::{DaeArchitecture, DaeModel, DaeTrainConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, speaker_classifier_fit};
use crate::gmm::GmmConfig;
use crate::mapper::MapperConfig;
use crate::nn::RmspropConfig;
use crate::pipeline::{single_speaker, train_baseline, train_proposed, SystemKind, VcSystem};

pub const CORPUS_FILE: &str = "corpus.json";
pub const MANIFEST_FILE: &str = "manifest.tsv";
const PROVENANCE: &str = "synthetic";

#[derive(Debug, Parser)]
#[command(
    name = "clvc",
    version,
    about = "Voice conversion with autoencoder bottleneck features and a GMM tokenizer baseline",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-speaker corpus with parallel ground truth.
    GenCorpus(GenCorpusArgs),
    /// Train the deep autoencoder on the autoencoder speakers.
    TrainDae(TrainDaeArgs),
    /// Train the mapping network from bottleneck features to one target speaker.
    TrainDnn(TrainDnnArgs),
    /// Fit the target-speaker GMM tokenizer.
    TrainGmm(TrainGmmArgs),
    /// Convert feature files to the target speaker.
    Convert(ConvertArgs),
    /// Score converted test utterances against parallel ground truth.
    Evaluate(EvaluateArgs),
    /// Print a JSON summary of a model or feature file.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON object of flag values keyed by long flag name; explicit flags win.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Replace existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Corpus directory.
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    /// Manifest file; defaults to `<corpus>/manifest.tsv`.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenCorpusArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Spectral feature dimension M.
    #[arg(long, default_value_t = 40)]
    pub feature_dim: usize,
    /// Number of shared phone prototypes.
    #[arg(long, default_value_t = 12)]
    pub phones: usize,
    /// Dimension of the content subspace; defaults to M/2.
    #[arg(long)]
    pub content_dim: Option<usize>,
    #[arg(long, default_value_t = 40)]
    pub train_utterances: usize,
    #[arg(long, default_value_t = 10)]
    pub test_utterances: usize,
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    /// Per-frame jitter around the phone prototype.
    #[arg(long, default_value_t = 1.0)]
    pub jitter: f64,
    /// Scale of each speaker's warp perturbation.
    #[arg(long, default_value_t = 0.1)]
    pub speaker_warp: f64,
    /// Scale of each speaker's offset.
    #[arg(long, default_value_t = 0.3)]
    pub speaker_offset: f64,
    /// Observation noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainDaeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Output model file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Training speakers; defaults to the corpus's autoencoder speakers.
    #[arg(long, value_delimiter = ',')]
    pub speakers: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 15)]
    pub patience: usize,
    #[arg(long, default_value_t = 200)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    #[arg(long, value_delimiter = ',', default_value = "512,512")]
    pub hidden_widths: Vec<usize>,
    /// Bottleneck width; defaults to M/2.
    #[arg(long)]
    pub bottleneck: Option<usize>,
    /// Train separate decoder weights instead of the transposed encoder weights.
    #[arg(long)]
    pub untied: bool,
    /// Share of utterances held out for early stopping.
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainDnnArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Trained autoencoder model.
    #[arg(long, value_name = "FILE")]
    pub dae: PathBuf,
    /// Target speaker.
    #[arg(long)]
    pub target: String,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 25)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, value_delimiter = ',', default_value = "50,50")]
    pub hidden_widths: Vec<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainGmmArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub target: String,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub components: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Relative log-likelihood improvement below which EM stops.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemArg {
    Proposed,
    Gmm,
}

impl From<SystemArg> for SystemKind {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::Proposed => SystemKind::Proposed,
            SystemArg::Gmm => SystemKind::GmmBaseline,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SystemArgs {
    #[arg(long, value_enum)]
    pub system: SystemArg,
    /// Autoencoder model (proposed system).
    #[arg(long, value_name = "FILE")]
    pub dae: Option<PathBuf>,
    /// Mapping network model (proposed system).
    #[arg(long, value_name = "FILE")]
    pub mapper: Option<PathBuf>,
    /// GMM tokenizer model (baseline system).
    #[arg(long, value_name = "FILE")]
    pub gmm: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ConvertArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Feature file to convert; `--out` is then a file.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["corpus", "source"])]
    pub input: Option<PathBuf>,
    /// Corpus directory; converts `--source`'s `--split` utterances into the `--out` directory.
    #[arg(long, value_name = "DIR", requires = "source")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long, default_value = SPLIT_TEST)]
    pub split: String,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Source speakers; defaults to every speaker with ground truth for the target.
    #[arg(long, value_delimiter = ',')]
    pub sources: Option<Vec<String>>,
    /// Report JSON file.
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
    /// Also write a plotting table here.
    #[arg(long, value_name = "FILE")]
    pub table: Option<PathBuf>,
    /// Mixture size of each per-speaker classification GMM; 0 disables classification.
    #[arg(long, default_value_t = 8)]
    pub classifier_components: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Include the first coefficient in the distortion.
    #[arg(long)]
    pub keep_c0: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    /// Model (`CVCM`) or feature (`CVCF`) file.
    pub path: PathBuf,
}

/// Entry point shared by the binary and the tests. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config_file(args) {
        Ok(a) => a,
        Err(e) => return report_error(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &Error) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

/// Splices the flags of a `--config` JSON file in right after the subcommand, so
/// flags given on the command line override them.
fn expand_config_file(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(Error::Config(format!(
            "{} must hold a JSON object",
            path.display()
        )));
    };
    let mut extra = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            Value::Bool(true) => extra.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let parts: Vec<String> = items.iter().map(scalar_text).collect::<Result<_>>()?;
                extra.push(flag);
                extra.push(parts.join(","));
            }
            other => {
                extra.push(flag);
                extra.push(scalar_text(&other)?);
            }
        }
    }
    let at = 2.min(args.len());
    let mut out = args[..at].to_vec();
    out.extend(extra.into_iter().map(OsString::from));
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

fn scalar_text(v: &Value) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(Error::Config(format!("unsupported config value {v}"))),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus(a) => cmd_gen_corpus(&a),
        Command::TrainDae(a) => cmd_train_dae(&a),
        Command::TrainDnn(a) => cmd_train_dnn(&a),
        Command::TrainGmm(a) => cmd_train_gmm(&a),
        Command::Convert(a) => cmd_convert(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    }
}

/// Contents of `corpus.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDescription {
    pub generator: GeneratorConfig,
    pub speakers: Vec<SyntheticSpeakerSpec>,
}

/// `<path>.log.json`.
pub fn log_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".log.json");
    PathBuf::from(s)
}

fn ensure_absent(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Config(format!(
            "{} already exists; pass --force to replace it",
            path.display()
        )));
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    bytes.push(b'\n');
    crate::fsutil::write_atomic(path, &bytes)
}

fn write_run_log(out: &Path, command: &str, started: Instant, body: Value) -> Result<()> {
    let mut log = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "elapsed_seconds": started.elapsed().as_secs_f64(),
    });
    if let (Value::Object(log), Value::Object(body)) = (&mut log, body) {
        log.extend(body);
    }
    write_json(&log_path(out), &log)
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("configuration types serialize to JSON")
}

fn cmd_gen_corpus(a: &GenCorpusArgs) -> Result<()> {
    let started = Instant::now();
    ensure_absent(&a.out, a.common.force)?;
    let cfg = GeneratorConfig {
        feature_dim: a.feature_dim,
        phones: a.phones,
        content_dim: a.content_dim,
        train_utterances: a.train_utterances,
        test_utterances: a.test_utterances,
        frames_per_utterance: a.frames,
        jitter_sigma: a.jitter,
        speaker_warp: a.speaker_warp,
        speaker_offset: a.speaker_offset,
        noise_sigma: a.noise,
        seed: a.seed,
        ..GeneratorConfig::default()
    };
    cfg.validate()?;
    let speakers = default_speakers(&cfg)?;
    let corpus = generate_corpus(&speakers, &cfg)?;

    let staging = staging_dir(&a.out);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    let mut manifest = Manifest::default();
    let result = (|| -> Result<()> {
        for item in &corpus.items {
            let utt = &item.utterance;
            let rel = Path::new("features")
                .join(&utt.speaker_id)
                .join(format!("{}.cvcf", utt.utterance_id));
            write_features(utt, staging.join(&rel))?;
            manifest.push(entry(&utt.speaker_id, &utt.utterance_id, rel, item.split));
        }
        let vc: Vec<&SyntheticSpeakerSpec> = corpus
            .speakers
            .iter()
            .filter(|s| s.role == SpeakerRole::Vc)
            .collect();
        for target in &vc {
            for item in corpus.items.iter().filter(|it| it.split == SPLIT_TEST) {
                let source = &corpus.speakers[item.speaker];
                if source.role != SpeakerRole::Vc || source.speaker_id == target.speaker_id {
                    continue;
                }
                let truth = corpus.render_as(item, &target.speaker_id)?;
                let rel = Path::new("features")
                    .join(SPLIT_TRUTH)
                    .join(&target.speaker_id)
                    .join(format!("{}.cvcf", truth.utterance_id));
                write_features(&truth, staging.join(&rel))?;
                manifest.push(entry(
                    &target.speaker_id,
                    &truth.utterance_id,
                    rel,
                    SPLIT_TRUTH,
                ));
            }
        }
        manifest.write(staging.join(MANIFEST_FILE))?;
        write_json(
            &staging.join(CORPUS_FILE),
            &CorpusDescription {
                generator: cfg.clone(),
                speakers: corpus.speakers.clone(),
            },
        )
    })();
    if let Err(e) = result {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    if a.out.exists() {
        let remove = if a.out.is_dir() {
            fs::remove_dir_all(&a.out)
        } else {
            fs::remove_file(&a.out)
        };
        remove.map_err(|e| Error::io(&a.out, e))?;
    }
    fs::rename(&staging, &a.out).map_err(|e| Error::io(&a.out, e))?;
    info!(
        "wrote {} manifest entries to {}",
        manifest.entries.len(),
        a.out.display()
    );
    write_run_log(
        &a.out,
        "gen-corpus",
        started,
        json!({
            "seed": cfg.seed,
            "config": to_value(&cfg),
            "speakers": corpus.speakers.iter().map(|s| &s.speaker_id).collect::<Vec<_>>(),
            "entries": manifest.entries.len(),
        }),
    )
}

fn staging_dir(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

fn entry(speaker: &str, utterance: &str, path: PathBuf, split: &str) -> ManifestEntry {
    ManifestEntry {
        speaker_id: speaker.to_owned(),
        utterance_id: utterance.to_owned(),
        path,
        split: split.to_owned(),
        provenance: Some(PROVENANCE.to_owned()),
    }
}

/// A corpus on disk: its manifest and the directory paths are relative to.
struct CorpusDir {
    root: PathBuf,
    manifest: Manifest,
}

impl CorpusDir {
    fn open(dir: &Path, manifest: Option<&Path>) -> Result<Self> {
        let path = manifest.map_or_else(|| dir.join(MANIFEST_FILE), Path::to_path_buf);
        let manifest = Manifest::read(&path)?;
        let root = path.parent().map_or_else(PathBuf::new, Path::to_path_buf);
        Ok(Self { root, manifest })
    }

    fn description(dir: &Path) -> Result<Option<CorpusDescription>> {
        let path = dir.join(CORPUS_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::format(e.column() as u64, format!("{}: {e}", path.display())))
    }

    fn load(&self, e: &ManifestEntry) -> Result<FeatureUtterance> {
        let utt = read_features(self.root.join(&e.path))?;
        if utt.speaker_id != e.speaker_id || utt.utterance_id != e.utterance_id {
            return Err(Error::Data(format!(
                "{} holds {}/{}, but the manifest lists {}/{}",
                e.path.display(),
                utt.speaker_id,
                utt.utterance_id,
                e.speaker_id,
                e.utterance_id
            )));
        }
        Ok(utt)
    }

    fn split(&self, speaker: &str, split: &str) -> Result<Vec<FeatureUtterance>> {
        let utts = self
            .manifest
            .select(speaker, split)
            .map(|e| self.load(e))
            .collect::<Result<Vec<_>>>()?;
        if utts.is_empty() {
            return Err(Error::Data(format!(
                "no {split} utterances for speaker {speaker}"
            )));
        }
        Ok(utts)
    }
}

fn rmsprop(lr: f64) -> RmspropConfig {
    RmspropConfig {
        learning_rate: lr,
        ..RmspropConfig::default()
    }
}

fn cmd_train_dae(a: &TrainDaeArgs) -> Result<()> {
    let started = Instant::now();
    ensure_absent(&a.out, a.common.force)?;
    let arch = DaeArchitecture {
        hidden_widths: a.hidden_widths.clone(),
        bottleneck: a.bottleneck,
        tied: !a.untied,
    };
    let train = DaeTrainConfig {
        rmsprop: rmsprop(a.lr),
        patience: a.patience,
        batch_size: a.batch_size,
        max_epochs: a.max_epochs,
        validation_fraction: a.validation_fraction,
        seed: a.seed,
    };
    train.validate()?;
    let corpus = CorpusDir::open(&a.corpus.corpus, a.corpus.manifest.as_deref())?;
    let speakers = match &a.speakers {
        Some(s) => s.clone(),
        None => CorpusDir::description(&a.corpus.corpus)?
            .map(|d| {
                d.speakers
                    .into_iter()
                    .filter(|s| s.role == SpeakerRole::Dae)
                    .map(|s| s.speaker_id)
                    .collect::<Vec<_>>()
            })
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                Error::Config("no autoencoder speakers in corpus.json; pass --speakers".into())
            })?,
    };
    let mut utts = Vec::new();
    for s in &speakers {
        utts.extend(corpus.split(s, SPLIT_TRAIN)?);
    }
    let dim = utts[0].feature_dim();
    let model = DaeModel::build(dim, &arch, a.seed)?;
    let (model, report) = model.train(&utts, &train)?;
    let config = json!({
        "command": "train-dae",
        "speakers": speakers,
        "architecture": to_value(&arch),
        "train": to_value(&train),
    });
    let bytes = encode_dae(&model, &config);
    let hash = container::content_hash(&bytes)?;
    crate::fsutil::write_atomic(&a.out, &bytes)?;
    info!(
        "autoencoder {:?} stopped after {} epochs, best epoch {}",
        model.layer_widths(),
        report.epochs_run(),
        report.best_epoch
    );
    write_run_log(
        &a.out,
        "train-dae",
        started,
        json!({ "seed": a.seed, "config": config, "model_hash": hash, "report": to_value(&report) }),
    )
}

fn cmd_train_dnn(a: &TrainDnnArgs) -> Result<()> {
    let started = Instant::now();
    ensure_absent(&a.out, a.common.force)?;
    let cfg = MapperConfig {
        rmsprop: rmsprop(a.lr),
        epochs: a.epochs,
        batch_size: a.batch_size,
        hidden_widths: a.hidden_widths.clone(),
        seed: a.seed,
    };
    cfg.validate()?;
    let (dae, dae_hash) = read_model_of(&a.dae, ModelKind::Dae)?;
    let Artifact::Dae(dae) = dae else {
        unreachable!("kind checked")
    };
    let corpus = CorpusDir::open(&a.corpus.corpus, a.corpus.manifest.as_deref())?;
    let target = corpus.split(&a.target, SPLIT_TRAIN)?;
    let (system, report) = train_proposed(&dae.model, &target, &cfg)?;
    let mapper = system
        .mapper
        .as_ref()
        .expect("proposed system has a mapper");
    let config = json!({
        "command": "train-dnn",
        "target": a.target,
        "dae_hash": dae_hash,
        "mapper": to_value(&cfg),
    });
    let bytes = encode_mapper(mapper, &system.target_profile, &dae_hash, &config)?;
    let hash = container::content_hash(&bytes)?;
    crate::fsutil::write_atomic(&a.out, &bytes)?;
    write_run_log(
        &a.out,
        "train-dnn",
        started,
        json!({ "seed": a.seed, "config": config, "model_hash": hash, "report": to_value(&report) }),
    )
}

fn cmd_train_gmm(a: &TrainGmmArgs) -> Result<()> {
    let started = Instant::now();
    ensure_absent(&a.out, a.common.force)?;
    let cfg = GmmConfig {
        max_iters: a.max_iters,
        tol: a.tol,
        seed: a.seed,
        ..GmmConfig::default()
    };
    cfg.validate()?;
    let corpus = CorpusDir::open(&a.corpus.corpus, a.corpus.manifest.as_deref())?;
    let target = corpus.split(&a.target, SPLIT_TRAIN)?;
    let (system, trace) = train_baseline(&target, a.components, &cfg)?;
    let gmm = system.gmm.as_ref().expect("baseline system has a GMM");
    let config = json!({
        "command": "train-gmm",
        "target": a.target,
        "components": a.components,
        "gmm": to_value(&cfg),
    });
    let bytes = encode_gmm(gmm, &system.target_profile, &config);
    let hash = container::content_hash(&bytes)?;
    crate::fsutil::write_atomic(&a.out, &bytes)?;
    write_run_log(
        &a.out,
        "train-gmm",
        started,
        json!({ "seed": a.seed, "config": config, "model_hash": hash, "log_likelihood": trace }),
    )
}

/// Loads a conversion system and the digests of its model files.
pub fn load_system(a: &SystemArgs) -> Result<(VcSystem, BTreeMap<String, String>)> {
    let need = |p: &Option<PathBuf>, flag: &str| {
        p.clone().ok_or_else(|| {
            Error::Config(format!(
                "--system {} needs --{flag}",
                SystemKind::from(a.system)
            ))
        })
    };
    let mut hashes = BTreeMap::new();
    let system = match a.system {
        SystemArg::Proposed => {
            let (dae, dae_hash) = read_model_of(need(&a.dae, "dae")?, ModelKind::Dae)?;
            let (mapper, mapper_hash) =
                read_model_of(need(&a.mapper, "mapper")?, ModelKind::Mapper)?;
            let (Artifact::Dae(dae), Artifact::Mapper(mapper)) = (dae, mapper) else {
                unreachable!("kinds checked")
            };
            if mapper.dae_hash != dae_hash {
                return Err(Error::Mismatch(format!(
                    "mapper was trained on autoencoder {} but {dae_hash} was given",
                    mapper.dae_hash
                )));
            }
            if mapper.model.input_dim() != dae.model.bottleneck_dim() {
                return Err(Error::Mismatch(
                    "mapper input does not match the bottleneck width".into(),
                ));
            }
            hashes.insert("dae".to_owned(), dae_hash);
            hashes.insert("mapper".to_owned(), mapper_hash);
            VcSystem {
                kind: SystemKind::Proposed,
                dae: Some(dae.model),
                mapper: Some(mapper.model),
                gmm: None,
                target_profile: mapper.profile,
            }
        }
        SystemArg::Gmm => {
            let (gmm, gmm_hash) = read_model_of(need(&a.gmm, "gmm")?, ModelKind::Gmm)?;
            let Artifact::Gmm(gmm) = gmm else {
                unreachable!("kind checked")
            };
            hashes.insert("gmm".to_owned(), gmm_hash);
            VcSystem {
                kind: SystemKind::GmmBaseline,
                dae: None,
                mapper: None,
                gmm: Some(gmm.model),
                target_profile: gmm.profile,
            }
        }
    };
    Ok((system, hashes))
}

fn cmd_convert(a: &ConvertArgs) -> Result<()> {
    let started = Instant::now();
    ensure_absent(&a.out, a.common.force)?;
    let (system, hashes) = load_system(&a.system)?;
    let converted = match (&a.input, &a.corpus, &a.source) {
        (Some(input), None, None) => {
            let utt = system.convert(&read_features(input)?)?;
            write_features(&utt, &a.out)?;
            1
        }
        (None, Some(dir), Some(source)) => {
            let corpus = CorpusDir::open(dir, a.manifest.as_deref())?;
            let utts = corpus.split(source, &a.split)?;
            let models: Vec<String> = hashes
                .iter()
                .map(|(k, h)| format!("{k} {}", &h[..12]))
                .collect();
            let provenance = format!(
                "converted from {source} by {} ({})",
                system.kind,
                models.join(", ")
            );
            let mut manifest = Manifest::default();
            for u in &utts {
                let out = system.convert(u)?;
                let rel = PathBuf::from(format!("{}.cvcf", out.utterance_id));
                write_features(&out, a.out.join(&rel))?;
                manifest.push(ManifestEntry {
                    speaker_id: out.speaker_id.clone(),
                    utterance_id: out.utterance_id.clone(),
                    path: rel,
                    split: a.split.clone(),
                    provenance: Some(provenance.clone()),
                });
            }
            manifest.write(a.out.join(MANIFEST_FILE))?;
            utts.len()
        }
        _ => {
            return Err(Error::Config(
                "give either --input or both --corpus and --source".into(),
            ))
        }
    };
    info!(
        "converted {converted} utterances to {}",
        system.target_speaker_id()
    );
    write_run_log(
        &a.out,
        "convert",
        started,
        json!({
            "system": system.kind,
            "target": system.target_speaker_id(),
            "model_hashes": hashes,
            "utterances": converted,
        }),
    )
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let started = Instant::now();
    ensure_absent(&a.report, a.common.force)?;
    if let Some(t) = &a.table {
        ensure_absent(t, a.common.force)?;
    }
    let (system, hashes) = load_system(&a.system)?;
    let target = system.target_speaker_id().to_owned();
    let corpus = CorpusDir::open(&a.corpus.corpus, a.corpus.manifest.as_deref())?;
    let sources = match &a.sources {
        Some(s) => s.clone(),
        None => corpus
            .manifest
            .speakers()
            .into_iter()
            .filter(|s| *s != target && has_truth(&corpus.manifest, s, &target))
            .collect(),
    };
    if sources.is_empty() {
        return Err(Error::Data(format!(
            "no source speakers with ground truth for {target}"
        )));
    }
    let mut src_utts = Vec::new();
    let mut truth = Vec::new();
    for s in &sources {
        for u in corpus.split(s, SPLIT_TEST)? {
            let e = corpus
                .manifest
                .find(&target, &u.utterance_id, SPLIT_TRUTH)
                .ok_or_else(|| {
                    Error::Alignment(format!(
                        "no ground truth of {} for {target}",
                        u.utterance_id
                    ))
                })?;
            truth.push(corpus.load(e)?);
            src_utts.push(u);
        }
    }
    let gmm_cfg = GmmConfig {
        seed: a.seed,
        ..GmmConfig::default()
    };
    let classifier = if a.classifier_components > 0 {
        let mut data = Vec::new();
        for s in std::iter::once(&target).chain(&sources) {
            let utts = corpus.split(s, SPLIT_TRAIN)?;
            single_speaker(&utts)?;
            let dim = utts[0].feature_dim();
            data.push((s.clone(), crate::corpus::pool_frames(&utts, dim)?));
        }
        Some(speaker_classifier_fit(
            &data,
            a.classifier_components,
            &gmm_cfg,
        )?)
    } else {
        None
    };
    let mut report = evaluate(&system, &src_utts, &truth, classifier.as_ref(), !a.keep_c0)?;
    report.model_hashes = hashes;
    report.config = json!({
        "command": "evaluate",
        "sources": sources,
        "classifier_components": a.classifier_components,
        "classifier_gmm": to_value(&gmm_cfg),
    });
    write_json(&a.report, &report)?;
    if let Some(t) = &a.table {
        crate::fsutil::write_atomic(t, report.to_table().as_bytes())?;
    }
    info!(
        "{}: mean distortion {:.3} dB (unconverted {:.3} dB), accuracy {:?}",
        report.system, report.mean_mcd, report.mean_source_mcd, report.accuracy
    );
    write_run_log(
        &a.report,
        "evaluate",
        started,
        json!({
            "seed": a.seed,
            "config": report.config,
            "model_hashes": report.model_hashes,
            "mean_mcd": report.mean_mcd,
            "mean_source_mcd": report.mean_source_mcd,
            "accuracy": report.accuracy,
            "source_accuracy": report.source_accuracy,
        }),
    )
}

fn has_truth(manifest: &Manifest, source: &str, target: &str) -> bool {
    manifest.select(source, SPLIT_TEST).any(|e| {
        manifest
            .find(target, &e.utterance_id, SPLIT_TRUTH)
            .is_some()
    })
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let bytes = fs::read(&a.path).map_err(|e| Error::io(&a.path, e))?;
    let summary = inspect_bytes(&bytes)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("JSON values serialize")
    );
    Ok(())
}

/// JSON summary of an encoded model or feature file.
pub fn inspect_bytes(bytes: &[u8]) -> Result<Value> {
    if bytes.starts_with(FEATURE_MAGIC) {
        let u = decode_features(bytes)?;
        let voiced = u.f0.voiced().count();
        return Ok(json!({
            "format": "CVCF",
            "speaker_id": u.speaker_id,
            "utterance_id": u.utterance_id,
            "frames": u.n_frames(),
            "feature_dim": u.feature_dim(),
            "ap_dim": u.ap_dim(),
            "voiced_frames": voiced,
            "frame_shift": u.frame_shift,
            "frame_length": u.frame_length,
        }));
    }
    let (artifact, hash) = decode_model(bytes)?;
    let detail = match &artifact {
        Artifact::Dae(d) => json!({
            "layer_widths": d.model.layer_widths(),
            "tied": d.model.is_tied(),
            "seed": d.model.seed(),
        }),
        Artifact::Mapper(m) => json!({
            "layer_widths": m.model.layer_widths(),
            "target_speaker_id": m.model.target_speaker_id,
            "dae_hash": m.dae_hash,
            "mean_voiced_f0": m.profile.mean_voiced_f0,
        }),
        Artifact::Gmm(g) => json!({
            "components": g.model.components(),
            "feature_dim": g.model.feature_dim(),
            "target_speaker_id": g.model.target_speaker_id(),
            "mean_voiced_f0": g.profile.mean_voiced_f0,
        }),
    };
    Ok(json!({
        "format": "CVCM",
        "kind": artifact.kind().to_string(),
        "hash": hash,
        "config": artifact.config(),
        "model": detail,
    }))
}
