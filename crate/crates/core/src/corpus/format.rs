//! `CVCF` feature files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CVCF"
//! 4       2     version (u16)
//! 6       4     frame count n (u32)
//! 10      4     spectral dimension M (u32)
//! 14      4     aperiodicity bands A (u32)
//! 18      8     frame shift, seconds (f64)
//! 26      8     frame length, seconds (f64)
//! 34      8nM   spectral frames, row-major
//!         8n    F0 (Hz, 0 = unvoiced)
//!         8nA   aperiodicity, row-major
//!         ...   speaker id, utterance id (u32 byte length + UTF-8 each)
//!         32    SHA-256 of every preceding byte
//! ```
//!
//! All integers and reals are little-endian.

use std::fs;
use std::path::Path;

use crate::corpus::FeatureUtterance;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::prosody::F0Track;
use crate::wire::{Reader, Writer};
use sha2::{Digest, Sha256};

pub const FEATURE_MAGIC: &[u8; 4] = b"CVCF";
pub const FEATURE_VERSION: u16 = 1;

/// Largest spectral or aperiodicity width accepted when decoding.
const MAX_DIM: u32 = 1 << 16;

const HASH_LEN: usize = 32;

pub fn encode_features(utt: &FeatureUtterance) -> Result<Vec<u8>> {
    utt.validate()?;
    let dims = [utt.n_frames(), utt.feature_dim(), utt.ap_dim()];
    if dims.iter().any(|&d| u32::try_from(d).is_err()) {
        return Err(Error::Data(
            "utterance too large for the feature format".into(),
        ));
    }
    let mut w = Writer::new();
    w.bytes(FEATURE_MAGIC);
    w.u16(FEATURE_VERSION);
    for d in dims {
        w.len_u32(d);
    }
    w.f64(utt.frame_shift);
    w.f64(utt.frame_length);
    w.f64s(utt.frames.as_slice());
    w.f64s(&utt.f0.values);
    w.f64s(utt.ap.as_slice());
    w.str(&utt.speaker_id);
    w.str(&utt.utterance_id);
    let mut bytes = w.into_inner();
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);
    Ok(bytes)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureUtterance> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4)?;
    if magic != FEATURE_MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {magic:?}, expected \"CVCF\""),
        ));
    }
    let version = r.u16()?;
    if version != FEATURE_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let Some(end) = bytes.len().checked_sub(HASH_LEN).filter(|&e| e >= 6) else {
        return Err(Error::format(
            bytes.len() as u64,
            "truncated: missing checksum",
        ));
    };
    if Sha256::digest(&bytes[..end]).as_slice() != &bytes[end..] {
        return Err(Error::format(end as u64, "checksum mismatch"));
    }
    let mut r = Reader::new(&bytes[..end]);
    r.take(6)?;
    let n = r.u32()?;
    let m = r.u32()?;
    if m == 0 || m > MAX_DIM {
        return Err(Error::format(
            10,
            format!("spectral dimension {m} out of range"),
        ));
    }
    let a = r.u32()?;
    if a > MAX_DIM {
        return Err(Error::format(
            14,
            format!("aperiodicity width {a} out of range"),
        ));
    }
    let frame_shift = r.finite_f64()?;
    let frame_length = r.finite_f64()?;
    if frame_shift <= 0.0 || frame_length <= 0.0 {
        return Err(Error::format(18, "frame shift and length must be positive"));
    }
    let (n, m, a) = (n as usize, m as usize, a as usize);
    let needed = n
        .checked_mul(m + a + 1)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| Error::format(6, "frame count overflows"))?;
    if r.remaining() < needed {
        return Err(r.error(format!(
            "truncated: header promises {needed} bytes of frame data, {} remain",
            r.remaining()
        )));
    }
    let frames = Matrix::from_vec(n, m, r.f64s(n * m)?)?;
    let f0_at = r.offset();
    let f0 = r.f64s(n)?;
    if let Some(i) = f0.iter().position(|v| *v < 0.0) {
        return Err(Error::format(f0_at + 8 * i as u64, "negative F0"));
    }
    let ap = Matrix::from_vec(n, a, r.f64s(n * a)?)?;
    let ids_at = r.offset();
    let speaker_id = r.str()?;
    let utterance_id = r.str()?;
    r.expect_end()?;
    let utt = FeatureUtterance {
        speaker_id,
        utterance_id,
        frames,
        f0: F0Track {
            values: f0,
            frame_shift,
        },
        ap,
        frame_shift,
        frame_length,
    };
    utt.validate()
        .map_err(|e| Error::format(ids_at, e.to_string()))?;
    Ok(utt)
}

/// Writes through a temporary sibling so a failed write never leaves a partial file.
pub fn write_features(utt: &FeatureUtterance, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_features(utt)?;
    crate::fsutil::write_atomic(path.as_ref(), &bytes)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureUtterance> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureUtterance {
        FeatureUtterance::new(
            "vc1",
            "vc1_test_000",
            Matrix::from_vec(2, 3, vec![1.0, -2.0, 3.5, 0.0, 1e-300, -7.25]).unwrap(),
            vec![120.0, 0.0],
            Matrix::from_vec(2, 1, vec![0.5, 0.25]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = encode_features(&sample()).unwrap();
        assert_eq!(&bytes[0..4], b"CVCF");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[14..18].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(bytes[18..26].try_into().unwrap()), 0.005);
        assert_eq!(f64::from_le_bytes(bytes[26..34].try_into().unwrap()), 0.025);
        assert_eq!(f64::from_le_bytes(bytes[34..42].try_into().unwrap()), 1.0);
    }

    #[test]
    fn round_trip() {
        let u = sample();
        assert_eq!(decode_features(&encode_features(&u).unwrap()).unwrap(), u);
    }

    #[test]
    fn zero_frames_round_trip() {
        let u = FeatureUtterance::new("s", "u", Matrix::zeros(0, 4), vec![], Matrix::zeros(0, 5))
            .unwrap();
        assert_eq!(decode_features(&encode_features(&u).unwrap()).unwrap(), u);
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = encode_features(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            decode_features(&bytes),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn wrong_version() {
        let mut bytes = encode_features(&sample()).unwrap();
        bytes[4] = 9;
        assert!(matches!(
            decode_features(&bytes),
            Err(Error::Format { offset: 4, .. })
        ));
    }

    #[test]
    fn truncation_is_detected_everywhere() {
        let bytes = encode_features(&sample()).unwrap();
        for cut in 0..bytes.len() {
            assert!(
                matches!(decode_features(&bytes[..cut]), Err(Error::Format { .. })),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn inflated_frame_count_is_truncation() {
        let mut bytes = encode_features(&sample()).unwrap();
        bytes[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_features(&bytes), Err(Error::Format { .. })));
    }
}
