use serde::{Deserialize, Serialize};

/// Per-feature affine rescaling to zero mean and unit variance.
/// Features with zero spread keep a scale of one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fits on `rows` stored row-major with `dim` columns (Welford updates).
    pub fn fit(rows: &[f64], dim: usize) -> Self {
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        let mut count = 0.0;
        for row in rows.chunks_exact(dim) {
            count += 1.0;
            for j in 0..dim {
                let d = row[j] - mean[j];
                mean[j] += d / count;
                m2[j] += d * (row[j] - mean[j]);
            }
        }
        let std = m2
            .iter()
            .map(|&s| {
                let sd = if count > 0.0 { (s / count).sqrt() } else { 0.0 };
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &[f64], out: &mut Vec<f64>) {
        out.extend(row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s));
    }

    pub fn transform(&self, rows: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len());
        for row in rows.chunks_exact(self.dim()) {
            self.apply(row, &mut out);
        }
        out
    }

    pub fn inverse(&self, rows: &[f64]) -> Vec<f64> {
        rows.chunks_exact(self.dim())
            .flat_map(|r| r.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m))
            .collect()
    }
}
