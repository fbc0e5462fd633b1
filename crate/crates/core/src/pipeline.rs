//! Two-stage pipelines: aggregate with a truth-discovery algorithm, then
//! shrink the aggregate with the EBE.
//!
//! [`eb_blue`] is the known-variance variant (BLUE plus its exact aggregated
//! variance). [`eb_wrap`] wraps any algorithm with a variance estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{ebe, ebe_alpha, stein};
use crate::model::{dispersion, AnswerVector, ObservationMatrix, VarianceVector};
use crate::stats::MeanSe;
use crate::td::{blue_aggregate, run_td, run_td_with, TdAlgorithm};
use crate::variance::{psi_value, VarianceEstimator};

/// BLUE, then EBE with the aggregated variance `(sum 1/s_i)^-1`.
pub fn eb_blue(x: &ObservationMatrix, sigma2s: &VarianceVector) -> Result<AnswerVector> {
    let (aggregate, aggregated_variance) = blue_aggregate(x, sigma2s)?;
    Ok(ebe(&aggregate, aggregated_variance)?.estimate)
}

/// Runs `base`, estimates the aggregated variance with `psi`, and applies the
/// EBE. A zero variance estimate returns the base output unchanged.
pub fn eb_wrap(x: &ObservationMatrix, base: &TdAlgorithm, psi: &VarianceEstimator) -> Result<AnswerVector> {
    let aggregate = run_td(base, x)?;
    let sigma2 = psi_value(psi, x, &aggregate)?;
    shrink_aggregate(aggregate, sigma2, None)
}

/// [`eb_wrap`] with the shrink constant `(m - 3)` replaced by `alpha`.
pub fn eb_wrap_alpha(x: &ObservationMatrix, base: &TdAlgorithm, psi: &VarianceEstimator, alpha: f64) -> Result<AnswerVector> {
    let aggregate = run_td(base, x)?;
    let sigma2 = psi_value(psi, x, &aggregate)?;
    shrink_aggregate(aggregate, sigma2, Some(alpha))
}

/// Second stage on a precomputed aggregate: EBE with `sigma2` (and `alpha` in
/// place of `m - 3` when given). A zero variance returns the aggregate.
pub fn shrink_aggregate(aggregate: AnswerVector, sigma2: f64, alpha: Option<f64>) -> Result<AnswerVector> {
    if sigma2 == 0.0 {
        if let Some(a) = alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::InvalidAlpha(a));
            }
        }
        return Ok(aggregate);
    }
    let result = match alpha {
        None => ebe(&aggregate, sigma2)?,
        Some(a) => ebe_alpha(&aggregate, sigma2, a)?,
    };
    Ok(result.estimate)
}

/// Where the second stage gets its variance from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "snake_case")]
pub enum VarianceSource {
    /// Known worker variances, reduced to `(sum 1/s_i)^-1`.
    Known(VarianceVector),
    /// The replicate's true worker variances (synthetic runs only).
    TrueVariances,
    Estimator(VarianceEstimator),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "snake_case")]
pub enum AlphaMode {
    /// `m - 3`.
    Default,
    Fixed(f64),
    /// Plug-in estimate of the risk-minimizing alpha from a pilot run of the
    /// given number of synthetic replicates. Must be resolved to `Fixed`
    /// before the pipeline runs.
    Star { budget: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Base output as is.
    Identity,
    EmpiricalBayes,
    Stein,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub name: String,
    pub base: TdAlgorithm,
    pub variance_source: VarianceSource,
    pub alpha: AlphaMode,
    pub stage: Stage,
}

impl PipelineSpec {
    /// The base algorithm alone.
    pub fn base_only(base: TdAlgorithm) -> Self {
        Self {
            name: base.name().to_string(),
            base,
            variance_source: VarianceSource::Estimator(VarianceEstimator::Constant(0.0)),
            alpha: AlphaMode::Default,
            stage: Stage::Identity,
        }
    }

    /// `EbBlue` driven by the replicate's true variances.
    pub fn eb_blue_oracle() -> Self {
        Self {
            name: "eb_blue".into(),
            base: TdAlgorithm::blue_oracle(),
            variance_source: VarianceSource::TrueVariances,
            alpha: AlphaMode::Default,
            stage: Stage::EmpiricalBayes,
        }
    }

    pub fn stein_blue_oracle() -> Self {
        Self { name: "stein_blue".into(), stage: Stage::Stein, ..Self::eb_blue_oracle() }
    }

    /// `Eb(A, psi)`.
    pub fn eb_wrap(base: TdAlgorithm, psi: VarianceEstimator) -> Self {
        Self {
            name: format!("eb_{}_{}", base.name(), psi.name()),
            base,
            variance_source: VarianceSource::Estimator(psi),
            alpha: AlphaMode::Default,
            stage: Stage::EmpiricalBayes,
        }
    }

    pub fn with_alpha(mut self, alpha: AlphaMode) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let known = matches!(self.variance_source, VarianceSource::Known(_) | VarianceSource::TrueVariances);
        if known && self.stage != Stage::Identity && !self.base.is_blue() {
            return Err(Error::InvalidPipeline(format!(
                "{}: known variances describe the BLUE aggregate only, base is {}",
                self.name, self.base
            )));
        }
        match self.alpha {
            AlphaMode::Fixed(a) if !(a >= 0.0 && a.is_finite()) => Err(Error::InvalidAlpha(a)),
            AlphaMode::Star { budget } if budget < 30 => {
                Err(Error::InsufficientReplicates { needed: 30, got: budget })
            }
            _ => Ok(()),
        }
    }

    /// Applies the pipeline to one matrix. `true_variances` feeds
    /// [`VarianceSource::TrueVariances`] and run-time BLUE.
    pub fn run(&self, x: &ObservationMatrix, true_variances: Option<&VarianceVector>) -> Result<AnswerVector> {
        let aggregate = run_td_with(&self.base, x, true_variances)?;
        if self.stage == Stage::Identity {
            return Ok(aggregate);
        }
        let sigma2 = match &self.variance_source {
            VarianceSource::Known(v) => v.reduced(),
            VarianceSource::TrueVariances => true_variances.ok_or(Error::MissingVariances)?.reduced(),
            VarianceSource::Estimator(psi) => psi_value(psi, x, &aggregate)?,
        };
        match self.stage {
            Stage::Identity => unreachable!(),
            Stage::Stein => {
                if sigma2 == 0.0 {
                    return Ok(aggregate);
                }
                Ok(stein(&aggregate, sigma2)?.estimate)
            }
            Stage::EmpiricalBayes => match self.alpha {
                AlphaMode::Default => shrink_aggregate(aggregate, sigma2, None),
                AlphaMode::Fixed(a) => shrink_aggregate(aggregate, sigma2, Some(a)),
                AlphaMode::Star { .. } => Err(Error::UnresolvedAlpha),
            },
        }
    }
}

/// One replicate of an aggregated answer vector with its variance estimate
/// and the ground truth it estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkSample {
    pub aggregate: Vec<f64>,
    pub truth: Vec<f64>,
    /// `psi` evaluated on this replicate.
    pub psi: f64,
    /// `sum_j dpsi/dX_j (X_j - mean)`.
    pub psi_directional: f64,
}

impl ShrinkSample {
    pub fn m(&self) -> usize {
        self.aggregate.len()
    }

    pub fn ss(&self) -> f64 {
        dispersion(&self.aggregate).ss
    }

    /// `sum_j (X_j - mu_j)(X_j - mean)`.
    pub fn error_cross(&self) -> f64 {
        let mean = dispersion(&self.aggregate).mean;
        self.aggregate.iter().zip(&self.truth).map(|(x, mu)| (x - mu) * (x - mean)).sum()
    }
}

/// Plug-in risk-minimizing alpha:
/// `sum_j Cov(X_j, psi (X_j - mean)/ss) / E[psi^2 / ss]`.
///
/// The covariance is estimated as `E[(X_j - mu_j) psi (X_j - mean)/ss]`, which
/// equals it for an unbiased aggregate and needs the ground truth.
pub fn estimate_alpha_star(samples: &[ShrinkSample]) -> Result<f64> {
    if samples.len() < 30 {
        return Err(Error::InsufficientReplicates { needed: 30, got: samples.len() });
    }
    let mut numer = Vec::with_capacity(samples.len());
    let mut denom = Vec::with_capacity(samples.len());
    for s in samples {
        let ss = s.ss();
        if ss == 0.0 {
            continue;
        }
        numer.push(s.psi * s.error_cross() / ss);
        denom.push(s.psi * s.psi / ss);
    }
    let denom = MeanSe::of(&denom).mean;
    if !(denom > 0.0) {
        return Err(Error::InsufficientSignal("E[psi^2 / ss] is zero"));
    }
    Ok(MeanSe::of(&numer).mean / denom)
}
