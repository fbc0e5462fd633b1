//! Truth-discovery algorithms that the second stage wraps.
//!
//! All are treated as black boxes producing one answer per question. The
//! iterative ones (CRH, CATD) follow the continuous-data recurrences in a
//! simplified form: alternate weighted column means with per-worker weights
//! computed from the squared distance to the current truth estimate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::model::{AnswerVector, ObservationMatrix, VarianceVector};

/// Added to every per-worker distance so that a worker matching the current
/// truth exactly does not produce an infinite weight.
pub const DISTANCE_EPS: f64 = 1e-12;
pub const DEFAULT_MAX_ITERATIONS: usize = 14;
pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-8;
pub const DEFAULT_CATD_LEVEL: f64 = 0.975;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TdKind {
    /// Inverse-variance weighted mean. `None` means the variances are supplied
    /// at run time (e.g. the generator's true variances in a simulation).
    Blue { variances: Option<VarianceVector> },
    Mean,
    Median,
    Crh,
    /// CATD; `level` is the chi-squared quantile level used in the weights.
    Catd { level: f64 },
    DistanceWeighted,
    /// Answers computed elsewhere (GTM, KDEm, ...), returned verbatim.
    External { answers: AnswerVector },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdAlgorithm {
    pub kind: TdKind,
    pub max_iterations: usize,
    pub convergence_tol: f64,
}

impl TdAlgorithm {
    pub fn new(kind: TdKind) -> Self {
        Self { kind, max_iterations: DEFAULT_MAX_ITERATIONS, convergence_tol: DEFAULT_CONVERGENCE_TOL }
    }

    pub fn mean() -> Self {
        Self::new(TdKind::Mean)
    }

    pub fn median() -> Self {
        Self::new(TdKind::Median)
    }

    pub fn crh() -> Self {
        Self::new(TdKind::Crh)
    }

    pub fn catd() -> Self {
        Self::new(TdKind::Catd { level: DEFAULT_CATD_LEVEL })
    }

    pub fn distance_weighted() -> Self {
        Self::new(TdKind::DistanceWeighted)
    }

    /// BLUE with variances resolved at run time.
    pub fn blue_oracle() -> Self {
        Self::new(TdKind::Blue { variances: None })
    }

    pub fn blue(variances: VarianceVector) -> Self {
        Self::new(TdKind::Blue { variances: Some(variances) })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            TdKind::Blue { .. } => "blue",
            TdKind::Mean => "mean",
            TdKind::Median => "median",
            TdKind::Crh => "crh",
            TdKind::Catd { .. } => "catd",
            TdKind::DistanceWeighted => "dw",
            TdKind::External { .. } => "external",
        }
    }

    pub fn is_blue(&self) -> bool {
        matches!(self.kind, TdKind::Blue { .. })
    }
}

impl fmt::Display for TdAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses `mean`, `median`, `crh`, `catd`, `dw` or `blue` (run-time variances).
impl FromStr for TdAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "mean" => Self::mean(),
            "median" => Self::median(),
            "crh" => Self::crh(),
            "catd" => Self::catd(),
            "dw" | "distance_weighted" => Self::distance_weighted(),
            "blue" => Self::blue_oracle(),
            other => return Err(Error::InvalidArgument(format!("unknown truth-discovery algorithm '{other}'"))),
        })
    }
}

/// Inverse-variance weighted mean per question, plus the variance of that
/// aggregate, `(sum 1/s_i)^-1`.
pub fn blue_aggregate(x: &ObservationMatrix, sigma2s: &VarianceVector) -> Result<(AnswerVector, f64)> {
    if sigma2s.len() != x.n_workers() {
        return Err(Error::LengthMismatch { expected: x.n_workers(), got: sigma2s.len() });
    }
    let weights: Vec<f64> = sigma2s.iter().map(|s| 1.0 / s).collect();
    let aggregated_variance = 1.0 / weights.iter().sum::<f64>();
    let answers = weighted_column_means(x, &weights);
    Ok((AnswerVector::new(answers)?, aggregated_variance))
}

pub fn run_td(alg: &TdAlgorithm, x: &ObservationMatrix) -> Result<AnswerVector> {
    run_td_with(alg, x, None)
}

/// Runs `alg`; `true_variances` resolves a BLUE whose variances were left to
/// run time.
pub fn run_td_with(alg: &TdAlgorithm, x: &ObservationMatrix, true_variances: Option<&VarianceVector>) -> Result<AnswerVector> {
    let m = x.n_questions();
    match &alg.kind {
        TdKind::Blue { variances } => {
            let v = variances.as_ref().or(true_variances).ok_or(Error::MissingVariances)?;
            Ok(blue_aggregate(x, v)?.0)
        }
        TdKind::Mean => AnswerVector::new(weighted_column_means(x, &vec![1.0; x.n_workers()])),
        TdKind::Median => AnswerVector::new((0..m).map(|j| median(&mut x.column(j))).collect()),
        TdKind::Crh => iterate(alg, x, |d| {
            let total: f64 = d.iter().sum();
            d.iter().map(|di| -(di / total).ln()).collect()
        }),
        TdKind::Catd { level } => {
            let q = ChiSquared::new(m as f64)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .inverse_cdf(*level);
            iterate(alg, x, |d| d.iter().map(|di| q / di).collect())
        }
        TdKind::DistanceWeighted => distance_weighted(x),
        TdKind::External { answers } => {
            if answers.len() != m {
                return Err(Error::LengthMismatch { expected: m, got: answers.len() });
            }
            Ok(answers.clone())
        }
    }
}

fn weighted_column_means(x: &ObservationMatrix, weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut out = vec![0.0; x.n_questions()];
    for (row, w) in x.rows().zip(weights) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += w * v;
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    out
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Alternates per-worker weights (from squared distance to the current truth)
/// with weighted column means, starting from the plain column means.
fn iterate<W>(alg: &TdAlgorithm, x: &ObservationMatrix, weight_fn: W) -> Result<AnswerVector>
where
    W: Fn(&[f64]) -> Vec<f64>,
{
    if x.n_workers() == 1 {
        return AnswerVector::new(x.row(0).to_vec());
    }
    let mut truth = weighted_column_means(x, &vec![1.0; x.n_workers()]);
    let mut previous: Option<Vec<f64>> = None;
    for iteration in 0..alg.max_iterations {
        let dist: Vec<f64> = x
            .rows()
            .map(|row| row.iter().zip(&truth).map(|(v, t)| (v - t) * (v - t)).sum::<f64>() + DISTANCE_EPS)
            .collect();
        let weights = weight_fn(&dist);
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite()) || !(total.is_finite() && total > 0.0) {
            return Err(Error::IterationDivergence { iteration });
        }
        truth = weighted_column_means(x, &weights);
        if let Some(prev) = &previous {
            let change = prev.iter().zip(&weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if change < alg.convergence_tol {
                break;
            }
        }
        previous = Some(weights);
    }
    AnswerVector::new(truth)
}

fn distance_weighted(x: &ObservationMatrix) -> Result<AnswerVector> {
    let n = x.n_workers();
    if n == 1 {
        return AnswerVector::new(x.row(0).to_vec());
    }
    let m = x.n_questions() as f64;
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            let total: f64 = (0..n)
                .filter(|&k| k != i)
                .map(|k| x.row(i).iter().zip(x.row(k)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / m)
                .sum();
            1.0 / (total / (n - 1) as f64 + DISTANCE_EPS)
        })
        .collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::IterationDivergence { iteration: 0 });
    }
    AnswerVector::new(weighted_column_means(x, &weights))
}
