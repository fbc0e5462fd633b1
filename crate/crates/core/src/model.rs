//! Observation containers and the dispersion statistics every formula reuses.
//!
//! All containers validate on construction and are immutable afterwards.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n x m` matrix of worker answers: row `i` is worker `i`, column `j` is
/// question `j`. Stored row-major. Every entry is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMatrix {
    n: usize,
    m: usize,
    values: Vec<f64>,
    worker_ids: Option<Vec<String>>,
    question_ids: Option<Vec<String>>,
}

/// Validates raw rows into an [`ObservationMatrix`]. Never repairs data.
pub fn validate_matrix(rows: &[Vec<f64>]) -> Result<ObservationMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut values = Vec::with_capacity(n * m);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != m {
            return Err(Error::RaggedRows { row: i, expected: m, got: row.len() });
        }
        for (j, &x) in row.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            values.push(x);
        }
    }
    Ok(ObservationMatrix { n, m, values, worker_ids: None, question_ids: None })
}

impl ObservationMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        validate_matrix(rows)
    }

    /// Builds a matrix from row-major storage.
    pub fn from_row_major(n: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::EmptyMatrix);
        }
        if values.len() != n * m {
            return Err(Error::LengthMismatch { expected: n * m, got: values.len() });
        }
        if let Some(k) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { row: k / m, col: k % m });
        }
        Ok(Self { n, m, values, worker_ids: None, question_ids: None })
    }

    /// Attaches worker and question labels.
    pub fn with_ids(mut self, worker_ids: Vec<String>, question_ids: Vec<String>) -> Result<Self> {
        if worker_ids.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, got: worker_ids.len() });
        }
        if question_ids.len() != self.m {
            return Err(Error::LengthMismatch { expected: self.m, got: question_ids.len() });
        }
        self.worker_ids = Some(worker_ids);
        self.question_ids = Some(question_ids);
        Ok(self)
    }

    pub fn n_workers(&self) -> usize {
        self.n
    }

    pub fn n_questions(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, worker: usize, question: usize) -> f64 {
        self.values[worker * self.m + question]
    }

    pub fn row(&self, worker: usize) -> &[f64] {
        &self.values[worker * self.m..(worker + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.m)
    }

    pub fn column(&self, question: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, question)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn worker_id(&self, worker: usize) -> String {
        match &self.worker_ids {
            Some(ids) => ids[worker].clone(),
            None => format!("w{}", worker + 1),
        }
    }

    pub fn question_id(&self, question: usize) -> String {
        match &self.question_ids {
            Some(ids) => ids[question].clone(),
            None => (question + 1).to_string(),
        }
    }

    /// Sub-matrix on the given rows and columns, in the given order. Labels follow.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let mut values = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            for &j in cols {
                values.push(self.get(i, j));
            }
        }
        Ok(Self {
            n: rows.len(),
            m: cols.len(),
            values,
            worker_ids: Some(rows.iter().map(|&i| self.worker_id(i)).collect()),
            question_ids: Some(cols.iter().map(|&j| self.question_id(j)).collect()),
        })
    }
}

/// A length-`m` vector of finite answers: ground truth, an aggregate, or an
/// estimator's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AnswerVector(Vec<f64>);

impl AnswerVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(col) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { row: 0, col });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Construction from already-validated arithmetic on finite inputs.
    pub(crate) fn from_trusted(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        Self(values)
    }
}

impl Deref for AnswerVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for AnswerVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AnswerVector> for Vec<f64> {
    fn from(v: AnswerVector) -> Self {
        v.0
    }
}

/// Per-worker variances, each strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct VarianceVector(Vec<f64>);

impl VarianceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        for (index, &value) in values.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveVariance { index, value });
            }
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `(sum 1/s_i)^-1`: the variance of the inverse-variance weighted mean.
    pub fn reduced(&self) -> f64 {
        1.0 / self.0.iter().map(|s| 1.0 / s).sum::<f64>()
    }
}

impl Deref for VarianceVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for VarianceVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<VarianceVector> for Vec<f64> {
    fn from(v: VarianceVector) -> Self {
        v.0
    }
}

/// Mean, unnormalized sum of squares, and sample variance of a vector.
///
/// `ss` is the denominator of the EBE shrink weight; `sample_variance` is
/// `ss / (m - 1)` and is `None` when `m < 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionStats {
    pub mean: f64,
    pub ss: f64,
    pub sample_variance: Option<f64>,
}

pub fn dispersion(v: &[f64]) -> DispersionStats {
    debug_assert!(!v.is_empty());
    let m = v.len() as f64;
    if v.iter().all(|&x| x == v[0]) {
        // floating-point summation can leave a residual ulp on constant input
        return DispersionStats { mean: v[0], ss: 0.0, sample_variance: (v.len() >= 2).then_some(0.0) };
    }
    let mean = v.iter().sum::<f64>() / m;
    let ss = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    let sample_variance = (v.len() >= 2).then(|| ss / (m - 1.0));
    DispersionStats { mean, ss, sample_variance }
}
