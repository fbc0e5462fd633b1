//! Losses, Monte Carlo risk, the improvement ratio, and numeric checks of the
//! risk identities and dominance conditions.

mod conditions;
mod report;
mod risk;

pub use conditions::{
    bayes_risk_gap, cor12_identity, corollary_conditions, ebe_risk_identity, shrink_stream, thm3_condition,
    thm4_decomposition, ConditionReport, DecompositionReport, Direction, PsiBounds,
};
pub use report::{write_records_csv, write_records_jsonl, Record};
pub use risk::{
    improvement_ratio, mc_risk, mc_risk_paired, resolve_alpha, IrReport, IrSource, PairedRisk, RiskReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sum of squared errors, or its per-question mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossConvention {
    #[default]
    SumSquared,
    MeanSquared,
}

impl LossConvention {
    pub fn name(self) -> &'static str {
        match self {
            Self::SumSquared => "sum",
            Self::MeanSquared => "mean",
        }
    }
}

impl std::str::FromStr for LossConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" | "sum_squared" => Ok(Self::SumSquared),
            "mean" | "mean_squared" => Ok(Self::MeanSquared),
            _ => Err(Error::InvalidArgument(format!("unknown loss convention {s:?} (expected sum or mean)"))),
        }
    }
}

/// Squared error of `estimate` against `mu`.
pub fn loss(estimate: &[f64], mu: &[f64], convention: LossConvention) -> Result<f64> {
    if estimate.len() != mu.len() {
        return Err(Error::LengthMismatch { expected: mu.len(), got: estimate.len() });
    }
    let sum: f64 = estimate.iter().zip(mu).map(|(e, m)| (e - m) * (e - m)).sum();
    Ok(match convention {
        LossConvention::SumSquared => sum,
        LossConvention::MeanSquared => sum / mu.len() as f64,
    })
}
