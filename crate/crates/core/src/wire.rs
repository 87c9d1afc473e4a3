//! Little-endian binary reader/writer shared by the feature and model containers.

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Longest label accepted when decoding.
pub(crate) const MAX_LABEL_BYTES: u32 = 4096;
/// Longest free-form text block (configuration echoes) accepted when decoding.
pub(crate) const MAX_TEXT_BYTES: u32 = 1 << 24;

#[derive(Debug, Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        self.buf.reserve(vs.len() * 8);
        for v in vs {
            self.f64(*v);
        }
    }

    pub fn len_u32(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("length fits in u32"));
    }

    pub fn str(&mut self, s: &str) {
        self.len_u32(s.len());
        self.bytes(s.as_bytes());
    }

    /// Same encoding as [`Writer::str`]; read back with `Reader::text`.
    pub fn str_long(&mut self, s: &str) {
        self.str(s);
    }

    pub fn vec(&mut self, v: &[f64]) {
        self.len_u32(v.len());
        self.f64s(v);
    }

    pub fn matrix(&mut self, m: &Matrix) {
        self.len_u32(m.rows());
        self.len_u32(m.cols());
        self.f64s(m.as_slice());
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    base: u64,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self {
            buf,
            pos: 0,
            base: 0,
        }
    }

    /// Reader over a sub-slice, reporting offsets relative to the enclosing file.
    pub fn with_base(buf: &'a [u8], base: u64) -> Self {
        Self { buf, pos: 0, base }
    }

    pub fn offset(&self) -> u64 {
        self.base + self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::format(self.offset(), message)
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.error(format!(
                "truncated: need {n} bytes, {} remain",
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn finite_f64(&mut self) -> Result<f64> {
        let at = self.offset();
        let v = self.f64()?;
        if !v.is_finite() {
            return Err(Error::format(at, format!("non-finite value {v}")));
        }
        Ok(v)
    }

    /// Reads `n` finite values, checking the length before allocating.
    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| self.error("element count overflows"))?;
        if self.remaining() < bytes {
            return Err(self.error(format!(
                "truncated: need {bytes} bytes for {n} values, {} remain",
                self.remaining()
            )));
        }
        (0..n).map(|_| self.finite_f64()).collect()
    }

    pub fn str(&mut self) -> Result<String> {
        self.bounded_str(MAX_LABEL_BYTES)
    }

    pub fn text(&mut self) -> Result<String> {
        self.bounded_str(MAX_TEXT_BYTES)
    }

    fn bounded_str(&mut self, max: u32) -> Result<String> {
        let at = self.offset();
        let len = self.u32()?;
        if len > max {
            return Err(Error::format(
                at,
                format!("string length {len} exceeds {max}"),
            ));
        }
        let raw = self.take(len as usize)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::format(at, "string is not UTF-8"))
    }

    pub fn vec(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        self.f64s(n)
    }

    pub fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| self.error("matrix size overflows"))?;
        let data = self.f64s(n)?;
        Matrix::from_vec(rows, cols, data)
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.error(format!("{} unexpected trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_round_trip() {
        let mut w = Writer::new();
        w.u16(7);
        w.str("vc1");
        w.vec(&[1.5, -2.0]);
        w.matrix(&Matrix::identity(2));
        let bytes = w.into_inner();
        let mut r = Reader::new(&bytes);
        assert_eq!(r.u16().unwrap(), 7);
        assert_eq!(r.str().unwrap(), "vc1");
        assert_eq!(r.vec().unwrap(), vec![1.5, -2.0]);
        assert_eq!(r.matrix().unwrap(), Matrix::identity(2));
        r.expect_end().unwrap();
    }

    #[test]
    fn huge_counts_fail_without_allocating() {
        let mut w = Writer::new();
        w.u32(u32::MAX);
        w.u32(u32::MAX);
        let bytes = w.into_inner();
        let err = Reader::new(&bytes).matrix().unwrap_err();
        assert!(matches!(err, Error::Format { offset: 8, .. }));
    }

    #[test]
    fn nan_is_rejected_with_offset() {
        let mut w = Writer::new();
        w.f64(1.0);
        w.f64(f64::NAN);
        let bytes = w.into_inner();
        let err = Reader::new(&bytes).f64s(2).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 8, .. }));
    }
}
