//! Synthetic multi-speaker corpus.
//!
//! Every speaker shares one set of phone prototypes inside a `K`-dimensional
//! content subspace of the `M`-dimensional latent space. An utterance is a random
//! phone sequence; each frame is its phone's prototype plus Gaussian jitter within
//! the subspace, and a speaker renders it as `warp · latent + offset + noise`.
//! Default speaker offsets lie outside the content subspace. Because the content is kept separately from
//! the rendering, the same utterance can be rendered under any speaker, which
//! gives frame-aligned ground truth for conversion experiments.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureUtterance, DEFAULT_FRAME_LENGTH, SPLIT_TEST, SPLIT_TRAIN};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::prosody::{F0Track, DEFAULT_FRAME_SHIFT};

/// Warps whose condition number reaches this value are rejected.
pub const MAX_WARP_CONDITION: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerRole {
    /// Only used to train the autoencoder.
    Dae,
    /// Conversion source or target.
    Vc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpeakerSpec {
    pub speaker_id: String,
    pub role: SpeakerRole,
    /// `M × M` mixing matrix applied to the latent frame.
    pub warp: Matrix,
    pub offset: Vec<f64>,
    pub base_f0: f64,
    /// Peak deviation of the pitch contour from `base_f0`, in Hz.
    pub f0_range: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpeakerSpec {
    /// Identity warp, zero offset, no noise.
    pub fn neutral(speaker_id: impl Into<String>, dim: usize, base_f0: f64) -> Self {
        Self {
            speaker_id: speaker_id.into(),
            role: SpeakerRole::Vc,
            warp: Matrix::identity(dim),
            offset: vec![0.0; dim],
            base_f0,
            f0_range: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| {
            Err(Error::Generation(format!(
                "speaker {}: {msg}",
                self.speaker_id
            )))
        };
        if self.warp.shape() != (dim, dim) || self.offset.len() != dim {
            return bad(format!(
                "warp {:?} and offset {} do not match feature dimension {dim}",
                self.warp.shape(),
                self.offset.len()
            ));
        }
        if !self.warp.is_finite() || self.offset.iter().any(|v| !v.is_finite()) {
            return bad("non-finite warp or offset".into());
        }
        let cond = warp_condition(&self.warp);
        if cond.is_nan() || cond >= MAX_WARP_CONDITION {
            return bad(format!("degenerate warp, condition number {cond:.3e}"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise sigma {} must be nonnegative",
                self.noise_sigma
            ));
        }
        if !(self.f0_range >= 0.0 && self.base_f0 > self.f0_range && self.base_f0.is_finite()) {
            return bad(format!(
                "base F0 {} must exceed the F0 range {}",
                self.base_f0, self.f0_range
            ));
        }
        if self.speaker_id.is_empty() || self.speaker_id.contains(['\t', '\n', '\r', '/', '\\']) {
            return bad("invalid speaker id".into());
        }
        Ok(())
    }
}

/// Ratio of the largest to the smallest singular value; infinite when singular.
pub fn warp_condition(warp: &Matrix) -> f64 {
    let m = DMatrix::from_row_slice(warp.rows(), warp.cols(), warp.as_slice());
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub feature_dim: usize,
    pub phones: usize,
    /// Dimension `K` of the content subspace; `None` uses half the feature dimension.
    pub content_dim: Option<usize>,
    pub train_utterances: usize,
    pub test_utterances: usize,
    pub frames_per_utterance: usize,
    /// Inclusive range of phone segment lengths in frames.
    pub min_segment: usize,
    pub max_segment: usize,
    /// Standard deviation of the per-frame jitter around the prototype, tilted like
    /// the prototypes.
    pub jitter_sigma: f64,
    /// Content coordinate `d` has standard deviation `1 / (1 + tilt · d)`.
    pub spectral_tilt: f64,
    /// Probability that a phone segment is unvoiced.
    pub unvoiced_fraction: f64,
    pub ap_bands: usize,
    /// Scale of the random perturbation added to the identity warp of each default speaker.
    pub speaker_warp: f64,
    /// Standard deviation of each default speaker's offset, per coordinate before it is
    /// projected out of the content subspace.
    pub speaker_offset: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            feature_dim: 40,
            phones: 12,
            content_dim: None,
            train_utterances: 40,
            test_utterances: 10,
            frames_per_utterance: 100,
            min_segment: 5,
            max_segment: 15,
            jitter_sigma: 1.0,
            spectral_tilt: 0.0,
            unvoiced_fraction: 0.2,
            ap_bands: 5,
            speaker_warp: 0.1,
            speaker_offset: 0.3,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    /// The small configuration used for quick experiments: `M = 16`.
    pub fn desk_scale() -> Self {
        Self {
            feature_dim: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Generation(msg.to_owned()));
        if self.phones < 2 {
            return fail("need at least 2 phones");
        }
        if self.feature_dim < 2 {
            return fail("feature dimension must be at least 2");
        }
        if matches!(self.content_dim, Some(k) if k == 0 || k > self.feature_dim) {
            return fail("content dimension must lie in 1..=feature dimension");
        }
        if self.min_segment == 0 || self.min_segment > self.max_segment {
            return fail("segment lengths must satisfy 1 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.unvoiced_fraction) {
            return fail("unvoiced fraction must lie in [0, 1]");
        }
        for v in [
            self.jitter_sigma,
            self.spectral_tilt,
            self.speaker_warp,
            self.speaker_offset,
            self.noise_sigma,
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail("scales must be finite and nonnegative");
            }
        }
        Ok(())
    }

    pub fn content_dim(&self) -> usize {
        self.content_dim.unwrap_or((self.feature_dim / 2).max(1))
    }

    fn coordinate_scale(&self, d: usize) -> f64 {
        1.0 / (1.0 + self.spectral_tilt * d as f64)
    }
}

/// Speaker-independent content of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceContent {
    pub utterance_id: String,
    /// Phone label per frame.
    pub phones: Vec<usize>,
    /// `n × M` prototype plus jitter.
    pub latent: Matrix,
    pub voiced: Vec<bool>,
    /// Pitch contour in `[-1, 1]`, scaled by each speaker's F0 range.
    pub contour: Vec<f64>,
    pub ap_bands: usize,
    pub seed: u64,
}

impl UtteranceContent {
    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }
}

/// Renders `content` under `spec`. The noise stream depends on both seeds only.
pub fn render_utterance(
    spec: &SyntheticSpeakerSpec,
    content: &UtteranceContent,
) -> Result<FeatureUtterance> {
    let dim = content.latent.cols();
    spec.validate(dim)?;
    let n = content.len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[content.seed]));
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Generation(e.to_string()))?;
    let mut frames = Matrix::zeros(n, dim);
    for t in 0..n {
        let z = content.latent.row(t);
        let out = frames.row_mut(t);
        for (i, o) in out.iter_mut().enumerate() {
            let w = spec.warp.row(i);
            *o = w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + spec.offset[i];
            if spec.noise_sigma > 0.0 {
                *o += noise.sample(&mut rng);
            }
        }
    }
    let f0 = content
        .voiced
        .iter()
        .zip(&content.contour)
        .map(|(&v, &c)| {
            if v {
                spec.base_f0 + spec.f0_range * c
            } else {
                0.0
            }
        })
        .collect();
    let mut ap = Matrix::zeros(n, content.ap_bands);
    for t in 0..n {
        for (b, a) in ap.row_mut(t).iter_mut().enumerate() {
            *a = aperiodicity(b, content.ap_bands, content.voiced[t]);
        }
    }
    let utt = FeatureUtterance {
        speaker_id: spec.speaker_id.clone(),
        utterance_id: content.utterance_id.clone(),
        frames,
        f0: F0Track::new(f0, DEFAULT_FRAME_SHIFT)?,
        ap,
        frame_shift: DEFAULT_FRAME_SHIFT,
        frame_length: DEFAULT_FRAME_LENGTH,
    };
    utt.validate()?;
    Ok(utt)
}

/// Smooth band pattern: rising with band index, near 1 for unvoiced frames.
fn aperiodicity(band: usize, bands: usize, voiced: bool) -> f64 {
    if !voiced {
        return 0.95;
    }
    let x = if bands > 1 {
        band as f64 / (bands - 1) as f64
    } else {
        0.0
    };
    0.05 + 0.6 * x * x
}

/// Splitmix64 mixing of a base seed with a path of indices.
pub(crate) fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    path.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// The shared content space: an orthonormal `M × K` basis and `P` phone
/// prototypes embedded in it.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentSpace {
    pub basis: Matrix,
    /// `P × M`.
    pub prototypes: Matrix,
    /// Per-coordinate scale of the `K` content coordinates.
    scales: Vec<f64>,
}

impl ContentSpace {
    pub fn content_dim(&self) -> usize {
        self.basis.cols()
    }

    /// Maps content coordinates into the `M`-dimensional latent space.
    fn embed(&self, coords: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self
                .basis
                .row(i)
                .iter()
                .zip(coords)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    /// Removes the content-space component of `v`.
    pub fn project_out(&self, v: &[f64]) -> Vec<f64> {
        let k = self.content_dim();
        let coords: Vec<f64> = (0..k)
            .map(|j| (0..v.len()).map(|i| self.basis.get(i, j) * v[i]).sum())
            .collect();
        let mut inside = vec![0.0; v.len()];
        self.embed(&coords, &mut inside);
        v.iter().zip(inside).map(|(a, b)| a - b).collect()
    }
}

/// Draws the shared content basis and phone prototypes.
pub fn draw_content_space(cfg: &GeneratorConfig) -> Result<ContentSpace> {
    cfg.validate()?;
    let (m, k) = (cfg.feature_dim, cfg.content_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[3]));
    let gauss = DMatrix::<f64>::from_fn(m, k, |_, _| StandardNormal.sample(&mut rng));
    let q = gauss.qr().q();
    let basis = Matrix::from_vec(m, k, (0..m * k).map(|i| q[(i / k, i % k)]).collect())?;
    let scales: Vec<f64> = (0..k).map(|d| cfg.coordinate_scale(d)).collect();
    let mut space = ContentSpace {
        basis,
        prototypes: Matrix::zeros(cfg.phones, m),
        scales,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0]));
    let mut coords = vec![0.0; k];
    for p in 0..cfg.phones {
        for (c, s) in coords.iter_mut().zip(&space.scales) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *c = z * s;
        }
        let mut row = vec![0.0; m];
        space.embed(&coords, &mut row);
        space.prototypes.row_mut(p).copy_from_slice(&row);
    }
    Ok(space)
}

/// Draws one utterance's content from the shared prototypes.
pub fn draw_content(
    space: &ContentSpace,
    cfg: &GeneratorConfig,
    utterance_id: impl Into<String>,
    seed: u64,
) -> Result<UtteranceContent> {
    cfg.validate()?;
    let n = cfg.frames_per_utterance;
    let dim = space.prototypes.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phones = Vec::with_capacity(n);
    let mut voiced = Vec::with_capacity(n);
    while phones.len() < n {
        let p = rng.random_range(0..space.prototypes.rows());
        let len = rng.random_range(cfg.min_segment..=cfg.max_segment);
        let v = !rng.random_bool(cfg.unvoiced_fraction);
        for _ in 0..len.min(n - phones.len()) {
            phones.push(p);
            voiced.push(v);
        }
    }
    let mut latent = Matrix::zeros(n, dim);
    let mut jitter = vec![0.0; space.content_dim()];
    let mut embedded = vec![0.0; dim];
    for (t, &p) in phones.iter().enumerate() {
        for (j, s) in jitter.iter_mut().zip(&space.scales) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *j = cfg.jitter_sigma * s * z;
        }
        space.embed(&jitter, &mut embedded);
        let proto = space.prototypes.row(p);
        for ((v, a), b) in latent.row_mut(t).iter_mut().zip(proto).zip(&embedded) {
            *v = a + b;
        }
    }
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let cycles = rng.random_range(0.5..2.0);
    let contour = (0..n)
        .map(|t| (phase + std::f64::consts::TAU * cycles * t as f64 / n.max(1) as f64).sin())
        .collect();
    Ok(UtteranceContent {
        utterance_id: utterance_id.into(),
        phones,
        latent,
        voiced,
        contour,
        ap_bands: cfg.ap_bands,
        seed,
    })
}

/// Six autoencoder speakers (three female, three male) and four conversion speakers.
///
/// Each warp is the identity plus a scaled Gaussian perturbation, redrawn until
/// well conditioned. Each offset is a Gaussian vector with the content-space
/// component removed.
pub fn default_speakers(cfg: &GeneratorConfig) -> Result<Vec<SyntheticSpeakerSpec>> {
    cfg.validate()?;
    let dim = cfg.feature_dim;
    let roster = [
        ("dae1", SpeakerRole::Dae, 215.0),
        ("dae2", SpeakerRole::Dae, 200.0),
        ("dae3", SpeakerRole::Dae, 230.0),
        ("dae4", SpeakerRole::Dae, 115.0),
        ("dae5", SpeakerRole::Dae, 125.0),
        ("dae6", SpeakerRole::Dae, 105.0),
        ("vc1", SpeakerRole::Vc, 220.0),
        ("vc2", SpeakerRole::Vc, 120.0),
        ("vc3", SpeakerRole::Vc, 195.0),
        ("vc4", SpeakerRole::Vc, 110.0),
    ];
    let space = draw_content_space(cfg)?;
    let mut out = Vec::with_capacity(roster.len());
    for (k, (id, role, base_f0)) in roster.into_iter().enumerate() {
        let seed = derive_seed(cfg.seed, &[1, k as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = cfg.speaker_warp / (dim as f64).sqrt();
        let mut warp = None;
        for _ in 0..1000 {
            let mut w = Matrix::identity(dim);
            for v in w.as_mut_slice() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += scale * z;
            }
            if warp_condition(&w) < MAX_WARP_CONDITION {
                warp = Some(w);
                break;
            }
        }
        let warp = warp.ok_or_else(|| {
            Error::Generation(format!("could not draw a well-conditioned warp for {id}"))
        })?;
        let raw: Vec<f64> = (0..dim)
            .map(|_| cfg.speaker_offset * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let offset = space.project_out(&raw);
        out.push(SyntheticSpeakerSpec {
            speaker_id: id.to_owned(),
            role,
            warp,
            offset,
            base_f0,
            f0_range: 0.15 * base_f0,
            noise_sigma: cfg.noise_sigma,
            seed,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct CorpusItem {
    /// Index into [`SyntheticCorpus::speakers`].
    pub speaker: usize,
    pub split: &'static str,
    pub content: UtteranceContent,
    pub utterance: FeatureUtterance,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: GeneratorConfig,
    pub speakers: Vec<SyntheticSpeakerSpec>,
    pub space: ContentSpace,
    pub items: Vec<CorpusItem>,
}

impl SyntheticCorpus {
    pub fn speaker(&self, speaker_id: &str) -> Option<&SyntheticSpeakerSpec> {
        self.speakers.iter().find(|s| s.speaker_id == speaker_id)
    }

    /// Utterances of one speaker in one split, in generation order.
    pub fn utterances<'a>(
        &'a self,
        speaker_id: &'a str,
        split: &'a str,
    ) -> impl Iterator<Item = &'a CorpusItem> + 'a {
        self.items.iter().filter(move |it| {
            it.split == split && self.speakers[it.speaker].speaker_id == speaker_id
        })
    }

    /// Renders an item's content under another speaker.
    pub fn render_as(&self, item: &CorpusItem, speaker_id: &str) -> Result<FeatureUtterance> {
        let spec = self
            .speaker(speaker_id)
            .ok_or_else(|| Error::Generation(format!("unknown speaker {speaker_id}")))?;
        render_utterance(spec, &item.content)
    }
}

/// Generates `train_utterances + test_utterances` utterances per speaker.
///
/// Utterance `i` of the speaker at position `s` draws its content from a seed
/// derived from `(cfg.seed, s, i)`, so the corpus is a pure function of the
/// speaker list and the configuration.
pub fn generate_corpus(
    specs: &[SyntheticSpeakerSpec],
    cfg: &GeneratorConfig,
) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    for (i, s) in specs.iter().enumerate() {
        s.validate(cfg.feature_dim)?;
        if specs[..i].iter().any(|o| o.speaker_id == s.speaker_id) {
            return Err(Error::Generation(format!(
                "duplicate speaker {}",
                s.speaker_id
            )));
        }
    }
    let space = draw_content_space(cfg)?;
    let mut items = Vec::new();
    for (s, spec) in specs.iter().enumerate() {
        let total = cfg.train_utterances + cfg.test_utterances;
        for i in 0..total {
            let (split, j) = if i < cfg.train_utterances {
                (SPLIT_TRAIN, i)
            } else {
                (SPLIT_TEST, i - cfg.train_utterances)
            };
            let id = format!("{}_{split}_{j:03}", spec.speaker_id);
            let seed = derive_seed(cfg.seed, &[2, s as u64, i as u64]);
            let content = draw_content(&space, cfg, id, seed)?;
            let utterance = render_utterance(spec, &content)?;
            items.push(CorpusItem {
                speaker: s,
                split,
                content,
                utterance,
            });
        }
    }
    Ok(SyntheticCorpus {
        config: cfg.clone(),
        speakers: specs.to_vec(),
        space,
        items,
    })
}
