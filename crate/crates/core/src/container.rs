//! `CVCM` model files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CVCM"
//! 4       2     version (u16)
//! 6       1     kind: 1 DAE, 2 mapper, 3 GMM
//! 7       8     payload length n (u64)
//! 15      n     payload
//! 15+n    32    SHA-256 of bytes [0, 15+n)
//! ```
//!
//! Every payload starts with the JSON configuration that produced the model. The
//! trailing digest doubles as the model's identity: a mapper file records the
//! digest of the DAE file it was trained against.

use std::fmt;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dae::DaeModel;
use crate::error::{Error, Result};
use crate::gmm::GmmModel;
use crate::mapper::MapperModel;
use crate::nn::{Activation, Layer, Mlp, NormStats};
use crate::prosody::SpeakerProfile;
use crate::wire::{Reader, Writer};

pub const MODEL_MAGIC: &[u8; 4] = b"CVCM";
pub const MODEL_VERSION: u16 = 1;
const HEADER_LEN: usize = 15;
const HASH_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Dae,
    Mapper,
    Gmm,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::Dae => 1,
            ModelKind::Mapper => 2,
            ModelKind::Gmm => 3,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(ModelKind::Dae),
            2 => Some(ModelKind::Mapper),
            3 => Some(ModelKind::Gmm),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Dae => "dae",
            ModelKind::Mapper => "mapper",
            ModelKind::Gmm => "gmm",
        })
    }
}

/// Lowercase hex SHA-256.
pub type ContentHash = String;

#[derive(Debug, Clone, PartialEq)]
pub struct DaeArtifact {
    pub model: DaeModel,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapperArtifact {
    pub model: MapperModel,
    pub profile: SpeakerProfile,
    /// Digest of the DAE file whose bottleneck features trained this mapper.
    pub dae_hash: ContentHash,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmArtifact {
    pub model: GmmModel,
    pub profile: SpeakerProfile,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Dae(DaeArtifact),
    Mapper(MapperArtifact),
    Gmm(GmmArtifact),
}

impl Artifact {
    pub fn kind(&self) -> ModelKind {
        match self {
            Artifact::Dae(_) => ModelKind::Dae,
            Artifact::Mapper(_) => ModelKind::Mapper,
            Artifact::Gmm(_) => ModelKind::Gmm,
        }
    }

    pub fn config(&self) -> &serde_json::Value {
        match self {
            Artifact::Dae(a) => &a.config,
            Artifact::Mapper(a) => &a.config,
            Artifact::Gmm(a) => &a.config,
        }
    }
}

/// Wraps a payload in the header and digest.
fn seal(kind: ModelKind, payload: Vec<u8>) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MODEL_MAGIC);
    w.u16(MODEL_VERSION);
    w.u8(kind.tag());
    w.u64(payload.len() as u64);
    w.bytes(&payload);
    let mut bytes = w.into_inner();
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);
    bytes
}

/// Checks the header and digest; returns the kind, the payload and the digest.
pub fn open(bytes: &[u8]) -> Result<(ModelKind, &[u8], ContentHash)> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4)?;
    if magic != MODEL_MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {magic:?}, expected \"CVCM\""),
        ));
    }
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(Error::format(
            4,
            format!("unsupported model version {version}"),
        ));
    }
    let tag = r.u8()?;
    let kind = ModelKind::from_tag(tag)
        .ok_or_else(|| Error::format(6, format!("unknown model kind {tag}")))?;
    let len = r.u64()?;
    let expected = (r.remaining() as u64).checked_sub(HASH_LEN as u64);
    if expected != Some(len) {
        return Err(Error::format(
            7,
            format!(
                "payload length {len} does not match the {} bytes after the header",
                r.remaining()
            ),
        ));
    }
    let end = HEADER_LEN + len as usize;
    let digest = Sha256::digest(&bytes[..end]);
    if digest.as_slice() != &bytes[end..] {
        return Err(Error::format(end as u64, "content hash mismatch"));
    }
    Ok((kind, &bytes[HEADER_LEN..end], hex::encode(digest)))
}

/// Digest of an encoded model file, as stored in its trailer.
pub fn content_hash(bytes: &[u8]) -> Result<ContentHash> {
    Ok(open(bytes)?.2)
}

fn write_config(w: &mut Writer, config: &serde_json::Value) {
    let text = serde_json::to_string(config).expect("JSON values always serialize");
    w.str_long(&text);
}

fn read_config(r: &mut Reader) -> Result<serde_json::Value> {
    let at = r.offset();
    let text = r.text()?;
    serde_json::from_str(&text)
        .map_err(|e| Error::format(at, format!("bad configuration JSON: {e}")))
}

fn write_norm(w: &mut Writer, n: &NormStats) {
    w.vec(&n.mean);
    w.vec(&n.std);
}

fn read_norm(r: &mut Reader) -> Result<NormStats> {
    let at = r.offset();
    let mean = r.vec()?;
    let std = r.vec()?;
    if mean.len() != std.len() || std.iter().any(|s| *s <= 0.0) {
        return Err(Error::format(at, "invalid normalization statistics"));
    }
    NormStats::new(mean, std).map_err(|e| Error::format(at, e.to_string()))
}

fn write_layer(w: &mut Writer, l: &Layer) {
    w.u8(l.activation.tag());
    w.matrix(&l.weights);
    w.vec(&l.bias);
}

fn read_layer(r: &mut Reader) -> Result<Layer> {
    let at = r.offset();
    let tag = r.u8()?;
    let act = Activation::from_tag(tag)
        .ok_or_else(|| Error::format(at, format!("unknown activation {tag}")))?;
    let weights = r.matrix()?;
    let bias = r.vec()?;
    Layer::new(weights, bias, act).map_err(|e| Error::format(at, e.to_string()))
}

fn write_profile(w: &mut Writer, p: &SpeakerProfile) {
    w.str(&p.speaker_id);
    w.f64(p.mean_voiced_f0);
    match &p.norm_stats {
        Some(n) => {
            w.u8(1);
            write_norm(w, n);
        }
        None => w.u8(0),
    }
}

fn read_profile(r: &mut Reader) -> Result<SpeakerProfile> {
    let speaker_id = r.str()?;
    let at = r.offset();
    let mean_voiced_f0 = r.finite_f64()?;
    if mean_voiced_f0 <= 0.0 {
        return Err(Error::format(at, "mean voiced F0 must be positive"));
    }
    let at = r.offset();
    let norm_stats = match r.u8()? {
        0 => None,
        1 => Some(read_norm(r)?),
        t => return Err(Error::format(at, format!("bad optional flag {t}"))),
    };
    Ok(SpeakerProfile {
        speaker_id,
        mean_voiced_f0,
        norm_stats,
    })
}

fn read_count(r: &mut Reader, what: &str) -> Result<usize> {
    let at = r.offset();
    let n = r.u32()? as usize;
    // Each counted item occupies at least four bytes, so larger counts are truncation.
    if n > r.remaining() / 4 {
        return Err(Error::format(
            at,
            format!("{what} count {n} exceeds the remaining data"),
        ));
    }
    Ok(n)
}

pub fn encode_dae(model: &DaeModel, config: &serde_json::Value) -> Vec<u8> {
    let mut w = Writer::new();
    write_config(&mut w, config);
    w.len_u32(model.feature_dim());
    w.u64(model.seed());
    write_norm(&mut w, model.norm());
    w.len_u32(model.encoder_layers().len());
    for l in model.encoder_layers() {
        write_layer(&mut w, l);
    }
    for b in model.decoder_biases() {
        w.vec(b);
    }
    match model.untied_weights() {
        Some(ws) => {
            w.u8(0);
            for m in ws {
                w.matrix(m);
            }
        }
        None => w.u8(1),
    }
    seal(ModelKind::Dae, w.into_inner())
}

fn read_dae(r: &mut Reader) -> Result<DaeArtifact> {
    let config = read_config(r)?;
    let at = r.offset();
    let feature_dim = r.u32()? as usize;
    let seed = r.u64()?;
    let norm = read_norm(r)?;
    let depth = read_count(r, "layer")?;
    let encoder = (0..depth)
        .map(|_| read_layer(r))
        .collect::<Result<Vec<_>>>()?;
    let decoder_biases = (0..depth).map(|_| r.vec()).collect::<Result<Vec<_>>>()?;
    let flag_at = r.offset();
    let untied = match r.u8()? {
        1 => None,
        0 => Some((0..depth).map(|_| r.matrix()).collect::<Result<Vec<_>>>()?),
        t => return Err(Error::format(flag_at, format!("bad tied flag {t}"))),
    };
    let model = DaeModel::from_parts(feature_dim, encoder, decoder_biases, untied, norm, seed)
        .map_err(|e| Error::format(at, e.to_string()))?;
    Ok(DaeArtifact { model, config })
}

pub fn encode_mapper(
    model: &MapperModel,
    profile: &SpeakerProfile,
    dae_hash: &str,
    config: &serde_json::Value,
) -> Result<Vec<u8>> {
    let digest = hex::decode(dae_hash)
        .ok()
        .filter(|d| d.len() == HASH_LEN)
        .ok_or_else(|| Error::Mismatch(format!("{dae_hash:?} is not a SHA-256 digest")))?;
    let mut w = Writer::new();
    write_config(&mut w, config);
    w.bytes(&digest);
    w.str(&model.target_speaker_id);
    w.u64(model.seed);
    w.len_u32(model.epochs);
    write_profile(&mut w, profile);
    write_norm(&mut w, &model.input_norm);
    write_norm(&mut w, &model.output_norm);
    w.len_u32(model.net.input_dim());
    w.len_u32(model.net.layers().len());
    for l in model.net.layers() {
        write_layer(&mut w, l);
    }
    Ok(seal(ModelKind::Mapper, w.into_inner()))
}

fn read_mapper(r: &mut Reader) -> Result<MapperArtifact> {
    let config = read_config(r)?;
    let dae_hash = hex::encode(r.take(HASH_LEN)?);
    let target_speaker_id = r.str()?;
    let seed = r.u64()?;
    let epochs = r.u32()? as usize;
    let profile = read_profile(r)?;
    let input_norm = read_norm(r)?;
    let output_norm = read_norm(r)?;
    let at = r.offset();
    let input_dim = r.u32()? as usize;
    let depth = read_count(r, "layer")?;
    let layers = (0..depth)
        .map(|_| read_layer(r))
        .collect::<Result<Vec<_>>>()?;
    let net = Mlp::new(input_dim, layers).map_err(|e| Error::format(at, e.to_string()))?;
    let model = MapperModel {
        net,
        input_norm,
        output_norm,
        target_speaker_id,
        seed,
        epochs,
    };
    model
        .validate()
        .map_err(|e| Error::format(at, e.to_string()))?;
    Ok(MapperArtifact {
        model,
        profile,
        dae_hash,
        config,
    })
}

pub fn encode_gmm(
    model: &GmmModel,
    profile: &SpeakerProfile,
    config: &serde_json::Value,
) -> Vec<u8> {
    let mut w = Writer::new();
    write_config(&mut w, config);
    w.str(model.target_speaker_id());
    write_profile(&mut w, profile);
    w.vec(model.weights());
    w.matrix(model.means());
    w.matrix(model.variances());
    seal(ModelKind::Gmm, w.into_inner())
}

fn read_gmm(r: &mut Reader) -> Result<GmmArtifact> {
    let config = read_config(r)?;
    let target = r.str()?;
    let profile = read_profile(r)?;
    let at = r.offset();
    let weights = r.vec()?;
    let means = r.matrix()?;
    let variances = r.matrix()?;
    let model = GmmModel::new(weights, means, variances, target)
        .map_err(|e| Error::format(at, e.to_string()))?;
    Ok(GmmArtifact {
        model,
        profile,
        config,
    })
}

/// Decodes any model file. Returns the artifact and its content digest.
pub fn decode_model(bytes: &[u8]) -> Result<(Artifact, ContentHash)> {
    let (kind, payload, hash) = open(bytes)?;
    let mut r = Reader::with_base(payload, HEADER_LEN as u64);
    let artifact = match kind {
        ModelKind::Dae => Artifact::Dae(read_dae(&mut r)?),
        ModelKind::Mapper => Artifact::Mapper(read_mapper(&mut r)?),
        ModelKind::Gmm => Artifact::Gmm(read_gmm(&mut r)?),
    };
    r.expect_end()?;
    Ok((artifact, hash))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<(Artifact, ContentHash)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

/// Reads a model file and requires it to be of `kind`.
pub fn read_model_of(path: impl AsRef<Path>, kind: ModelKind) -> Result<(Artifact, ContentHash)> {
    let path = path.as_ref();
    let (artifact, hash) = read_model(path)?;
    if artifact.kind() != kind {
        return Err(Error::Mismatch(format!(
            "{} holds a {} model, expected {kind}",
            path.display(),
            artifact.kind()
        )));
    }
    Ok((artifact, hash))
}
