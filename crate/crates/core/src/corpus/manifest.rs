//! Corpus manifest: a tab-separated text file, one utterance per line.
//!
//! ```text
//! # speaker_id  utterance_id  path  split  [provenance]
//! vc1  vc1_train_000  features/vc1/vc1_train_000.cvcf  train
//! ```
//!
//! Fields are separated by single tabs (shown as spaces above). Paths are relative to the
//! manifest's directory. Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const SPLIT_TRAIN: &str = "train";
pub const SPLIT_TEST: &str = "test";
/// Parallel rendering of another speaker's utterance content under this entry's speaker.
pub const SPLIT_TRUTH: &str = "truth";

const HEADER: &str = "# speaker_id\tutterance_id\tpath\tsplit\tprovenance";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub speaker_id: String,
    pub utterance_id: String,
    pub path: PathBuf,
    pub split: String,
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut offset = 0u64;
        for (lineno, line) in text.lines().enumerate() {
            let line_offset = offset;
            offset += line.len() as u64 + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !(4..=5).contains(&fields.len()) || fields[..4].iter().any(|f| f.is_empty()) {
                return Err(Error::format(
                    line_offset,
                    format!(
                        "manifest line {} needs 4 or 5 tab-separated fields",
                        lineno + 1
                    ),
                ));
            }
            entries.push(ManifestEntry {
                speaker_id: fields[0].to_owned(),
                utterance_id: fields[1].to_owned(),
                path: PathBuf::from(fields[2]),
                split: fields[3].to_owned(),
                provenance: fields
                    .get(4)
                    .filter(|p| !p.is_empty())
                    .map(|p| (*p).to_owned()),
            });
        }
        Ok(Self { entries })
    }

    pub fn render(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for e in &self.entries {
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}",
                e.speaker_id,
                e.utterance_id,
                e.path.display(),
                e.split
            );
            if let Some(p) = &e.provenance {
                let _ = write!(out, "\t{p}");
            }
            out.push('\n');
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::fsutil::write_atomic(path.as_ref(), self.render().as_bytes())
    }

    pub fn push(&mut self, entry: ManifestEntry) {
        self.entries.push(entry);
    }

    pub fn select<'a>(
        &'a self,
        speaker: &'a str,
        split: &'a str,
    ) -> impl Iterator<Item = &'a ManifestEntry> + 'a {
        self.entries
            .iter()
            .filter(move |e| e.speaker_id == speaker && e.split == split)
    }

    pub fn find(&self, speaker: &str, utterance: &str, split: &str) -> Option<&ManifestEntry> {
        self.entries
            .iter()
            .find(|e| e.speaker_id == speaker && e.utterance_id == utterance && e.split == split)
    }

    /// Speaker ids in first-appearance order.
    pub fn speakers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.speaker_id) {
                out.push(e.speaker_id.clone());
            }
        }
        out
    }
}
