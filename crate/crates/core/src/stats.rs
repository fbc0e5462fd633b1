//! Order-fixed summaries of per-replicate values.

use serde::{Deserialize, Serialize};

/// Pairwise summation over a slice in index order. The result depends only on
/// the values and their order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = pairwise_sum(xs) / n as f64;
        if n < 2 {
            return Self { mean, se: 0.0, n };
        }
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Self { mean, se: (var / n as f64).sqrt(), n }
    }

    /// Number of standard errors separating the mean from `value`.
    pub fn z_from(&self, value: f64) -> f64 {
        (self.mean - value) / self.se
    }
}

/// Elementwise difference `a - b` of two equally long series.
pub fn paired(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "paired series must have equal length");
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
