use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Smallest standard deviation a [`NormStats`] will divide by.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension zero-mean / unit-variance statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::Shape(format!(
                "mean has {} entries, std has {}",
                mean.len(),
                std.len()
            )));
        }
        let std = std.into_iter().map(|s| s.max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    /// Population statistics of the rows of `data`, std floored at [`STD_FLOOR`].
    pub fn from_data(data: &Matrix) -> Self {
        let mean = data.column_means();
        let std = data
            .column_variances()
            .into_iter()
            .map(|v| v.sqrt().max(STD_FLOOR))
            .collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, data: &Matrix) -> Result<Matrix> {
        self.check(data)?;
        let mut out = data.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn denormalize(&self, data: &Matrix) -> Result<Matrix> {
        self.check(data)?;
        let mut out = data.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    fn check(&self, data: &Matrix) -> Result<()> {
        if data.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "normalization expects {} columns, got {}",
                self.dim(),
                data.cols()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_column_is_floored() {
        let m = Matrix::from_rows(&[vec![3.0], vec![3.0]], 1).unwrap();
        let s = NormStats::from_data(&m);
        assert_eq!(s.std, vec![STD_FLOOR]);
        let n = s.normalize(&m).unwrap();
        assert!(n.as_slice().iter().all(|v| *v == 0.0));
    }

    proptest! {
        #[test]
        fn round_trip(values in prop::collection::vec(-1e3f64..1e3, 12),
                      stds in prop::collection::vec(1e-3f64..1e2, 3),
                      means in prop::collection::vec(-50f64..50.0, 3)) {
            let data = Matrix::from_vec(4, 3, values).unwrap();
            let s = NormStats::new(means, stds).unwrap();
            let back = s.denormalize(&s.normalize(&data).unwrap()).unwrap();
            for (a, b) in back.as_slice().iter().zip(data.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
