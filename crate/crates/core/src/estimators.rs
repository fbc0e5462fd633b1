//! Single-vector modifying estimators.
//!
//! Each takes the answers of one (possibly aggregated) worker plus a variance
//! and returns a modified answer vector. The EBE shrinks toward the vector's
//! own mean; Stein shrinks toward the origin; the posterior mean needs a
//! known prior and serves as a Bayes-risk oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dispersion, AnswerVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageResult {
    pub estimate: AnswerVector,
    /// The bracketed weight `1 - alpha * sigma2 / ss`. Unclipped unless the
    /// positive-part variant was requested; may be negative.
    pub shrink_factor: f64,
    /// Set when `ss = 0` (full shrink) or `m <= 3` for the plain EBE (identity).
    pub degenerate: bool,
}

fn check_variance(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveVariance { index: 0, value: sigma2 })
    }
}

pub fn identity(v: &AnswerVector) -> AnswerVector {
    v.clone()
}

/// Empirical Bayes estimator with shrink weight `(m - 3) sigma2 / ss`.
///
/// For `m <= 3` the input is returned unchanged (at `m = 3` the weight is zero;
/// smaller `m` is extended the same way).
pub fn ebe(v: &AnswerVector, sigma2: f64) -> Result<ShrinkageResult> {
    check_variance(sigma2)?;
    let m = v.len();
    if m <= 3 {
        return Ok(ShrinkageResult { estimate: v.clone(), shrink_factor: 1.0, degenerate: true });
    }
    shrink_toward_mean(v, sigma2, (m - 3) as f64, false)
}

/// EBE with `(m - 3)` replaced by `alpha`.
pub fn ebe_alpha(v: &AnswerVector, sigma2: f64, alpha: f64) -> Result<ShrinkageResult> {
    ebe_alpha_with(v, sigma2, alpha, false)
}

/// Generalized EBE with an optional positive-part clip of the shrink factor at 0.
pub fn ebe_alpha_with(v: &AnswerVector, sigma2: f64, alpha: f64, positive_part: bool) -> Result<ShrinkageResult> {
    check_variance(sigma2)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidAlpha(alpha));
    }
    shrink_toward_mean(v, sigma2, alpha, positive_part)
}

fn shrink_toward_mean(v: &AnswerVector, sigma2: f64, alpha: f64, positive_part: bool) -> Result<ShrinkageResult> {
    let d = dispersion(v);
    if d.ss == 0.0 {
        let estimate = AnswerVector::from_trusted(vec![d.mean; v.len()]);
        return Ok(ShrinkageResult { estimate, shrink_factor: 0.0, degenerate: true });
    }
    let mut factor = 1.0 - alpha * sigma2 / d.ss;
    if positive_part {
        factor = factor.max(0.0);
    }
    let estimate = v.iter().map(|x| d.mean + factor * (x - d.mean)).collect();
    Ok(ShrinkageResult { estimate: AnswerVector::new(estimate)?, shrink_factor: factor, degenerate: false })
}

/// Stein's estimator `[1 - (m - 2) sigma2 / |v|^2] v`, shrinking toward 0.
/// For `m <= 2` the input is returned unchanged.
pub fn stein(v: &AnswerVector, sigma2: f64) -> Result<ShrinkageResult> {
    check_variance(sigma2)?;
    let m = v.len();
    if m <= 2 {
        return Ok(ShrinkageResult { estimate: v.clone(), shrink_factor: 1.0, degenerate: true });
    }
    let norm2: f64 = v.iter().map(|x| x * x).sum();
    if norm2 == 0.0 {
        return Err(Error::ZeroNormInput);
    }
    let factor = 1.0 - (m - 2) as f64 * sigma2 / norm2;
    let estimate = AnswerVector::new(v.iter().map(|x| factor * x).collect())?;
    Ok(ShrinkageResult { estimate, shrink_factor: factor, degenerate: false })
}

/// Posterior mean of each `mu_j` under the prior `N(mu0, sigma0_2)` and noise
/// variance `sigma2`.
pub fn bayes_posterior_mean(v: &AnswerVector, sigma2: f64, mu0: f64, sigma0_2: f64) -> Result<AnswerVector> {
    check_variance(sigma2)?;
    check_variance(sigma0_2)?;
    let total = sigma0_2 + sigma2;
    let w_data = sigma0_2 / total;
    let w_prior = sigma2 / total;
    AnswerVector::new(v.iter().map(|x| x * w_data + mu0 * w_prior).collect())
}
