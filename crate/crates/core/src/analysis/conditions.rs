use serde::{Deserialize, Serialize};

use super::report::Record;
use super::{loss, LossConvention};
use crate::error::{Error, Result};
use crate::experiments::{gen_synthetic, SyntheticSpec};
use crate::model::AnswerVector;
use crate::pipeline::{shrink_aggregate, ShrinkSample, VarianceSource};
use crate::rng::{derive_seed, Role};
use crate::stats::{paired, MeanSe};
use crate::td::{run_td_with, TdAlgorithm};
use crate::try_par_map;
use crate::variance::{directional_term, is_mean_adjusted, psi_value, VarianceEstimator};

/// Which comparison a [`ConditionReport`] encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Satisfied iff `lhs < rhs`.
    Less,
    /// Satisfied iff `lhs > rhs`.
    Greater,
    /// Satisfied iff `lhs` and `rhs` agree within three standard errors.
    Agree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub direction: Direction,
    /// Standard errors of the Monte Carlo terms, leading with the one that
    /// governs the comparison. Empty for exact expressions.
    pub std_errors: Vec<f64>,
    pub note: Option<String>,
}

impl ConditionReport {
    fn compare(name: &str, lhs: f64, rhs: f64, direction: Direction, std_errors: Vec<f64>) -> Self {
        let satisfied = match direction {
            Direction::Less => lhs < rhs,
            Direction::Greater => lhs > rhs,
            Direction::Agree => agree(lhs, rhs, std_errors.first().copied().unwrap_or(0.0)),
        };
        Self { name: name.to_string(), lhs, rhs, satisfied, direction, std_errors, note: None }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn record(&self, seed: u64) -> Record {
        Record {
            name: self.name.clone(),
            lhs: self.lhs,
            rhs: self.rhs,
            se: self.std_errors.first().copied().unwrap_or(0.0),
            seed,
        }
    }
}

fn agree(lhs: f64, rhs: f64, se: f64) -> bool {
    let diff = (lhs - rhs).abs();
    diff <= 3.0 * se || diff <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0)
}

/// A Monte Carlo risk gap set against a closed-form expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub name: String,
    /// Observed mean of the per-replicate loss difference.
    pub lhs_gap: f64,
    pub lhs_se: f64,
    /// Mean of the per-replicate closed-form term.
    pub rhs_formula: f64,
    pub rhs_se: f64,
    /// Standard error of the paired difference `gap - formula`.
    pub diff_se: f64,
    pub agree: bool,
    pub replicates: usize,
}

impl DecompositionReport {
    fn from_series(name: &str, gaps: &[f64], formula: &[f64]) -> Self {
        let g = MeanSe::of(gaps);
        let f = MeanSe::of(formula);
        let d = MeanSe::of(&paired(gaps, formula));
        Self {
            name: name.to_string(),
            lhs_gap: g.mean,
            lhs_se: g.se,
            rhs_formula: f.mean,
            rhs_se: f.se,
            diff_se: d.se,
            agree: agree(g.mean, f.mean, d.se),
            replicates: gaps.len(),
        }
    }

    pub fn condition(&self) -> ConditionReport {
        ConditionReport {
            name: self.name.clone(),
            lhs: self.lhs_gap,
            rhs: self.rhs_formula,
            satisfied: self.agree,
            direction: Direction::Agree,
            std_errors: vec![self.diff_se, self.lhs_se, self.rhs_se],
            note: None,
        }
    }
}

/// Declared properties of a variance estimator: `|psi - sigma^2| < epsilon`
/// with probability `delta` (1 when absent), and `psi < bound` surely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiBounds {
    pub epsilon: f64,
    pub delta: Option<f64>,
    pub bound: Option<f64>,
}

/// Draws `replicates` aggregated vectors with their variance estimates and the
/// truth. Replicate `r` uses the dataset `generator` produces under a seed
/// derived from `(seed, r)`, so the same seed pairs streams across calls.
pub fn shrink_stream(
    generator: &SyntheticSpec,
    base: &TdAlgorithm,
    source: &VarianceSource,
    replicates: usize,
    seed: u64,
) -> Result<Vec<ShrinkSample>> {
    generator.validate()?;
    try_par_map(replicates, |r| {
        let syn = gen_synthetic(&generator.with_seed(derive_seed(seed, Role::Replicate, r as u64)))?;
        let x = &syn.dataset.matrix;
        let aggregate = run_td_with(base, x, Some(&syn.variances))?;
        let (psi, psi_directional) = match source {
            VarianceSource::Known(v) => (v.reduced(), 0.0),
            VarianceSource::TrueVariances => (syn.variances.reduced(), 0.0),
            VarianceSource::Estimator(est) => (psi_value(est, x, &aggregate)?, directional_term(est, Some(x), &aggregate)?),
        };
        Ok(ShrinkSample { aggregate: aggregate.into_vec(), truth: syn.dataset.truth()?.to_vec(), psi, psi_directional })
    })
}

fn check_stream(samples: &[ShrinkSample]) -> Result<usize> {
    if samples.len() < 30 {
        return Err(Error::InsufficientReplicates { needed: 30, got: samples.len() });
    }
    let m = samples[0].m();
    if m <= 3 {
        return Err(Error::TooFewQuestions { needed: 4, got: m });
    }
    Ok(m)
}

/// `L(Eb) - L(A)` on one replicate, by actually applying the shrinkage.
fn observed_gap(s: &ShrinkSample) -> Result<f64> {
    let aggregate = AnswerVector::new(s.aggregate.clone())?;
    let base = loss(&aggregate, &s.truth, LossConvention::SumSquared)?;
    let eb = shrink_aggregate(aggregate, s.psi, None)?;
    Ok(loss(&eb, &s.truth, LossConvention::SumSquared)? - base)
}

/// The general unbiased-aggregate condition:
/// `2(m-3) sum_j Cov(X_j, psi (X_j - mean)/ss) - (m-3)^2 E[psi^2/ss] > 0`.
///
/// Covariances are estimated around the known truth, so `lhs` is the
/// Monte Carlo mean of the exact per-replicate risk reduction.
pub fn thm3_condition(samples: &[ShrinkSample]) -> Result<ConditionReport> {
    let m = check_stream(samples)?;
    let k = (m - 3) as f64;
    let terms: Vec<f64> = samples
        .iter()
        .map(|s| {
            let ss = s.ss();
            if ss == 0.0 {
                return 0.0;
            }
            2.0 * k * s.psi * s.error_cross() / ss - k * k * s.psi * s.psi / ss
        })
        .collect();
    let t = MeanSe::of(&terms);
    Ok(ConditionReport::compare("thm3", t.mean, 0.0, Direction::Greater, vec![t.se]))
}

/// Normal-model decomposition of `R(Eb) - R(A)` into
/// `(m-3)^2/(m-1) (E[psi^2/S^2] - 2 sigma^2 (E[psi/S^2] + E[D/((m-3) S^2)]))`
/// with `S^2 = ss/(m-1)` and `D = sum_j dpsi/dX_j (X_j - mean)`, compared with
/// the observed paired loss difference.
pub fn thm4_decomposition(samples: &[ShrinkSample], sigma2: f64) -> Result<DecompositionReport> {
    let m = check_stream(samples)?;
    let (k, m1) = ((m - 3) as f64, (m - 1) as f64);
    let gaps = samples.iter().map(observed_gap).collect::<Result<Vec<f64>>>()?;
    let formula: Vec<f64> = samples
        .iter()
        .map(|s| {
            let s2 = s.ss() / m1;
            k * k / m1 * (s.psi * s.psi / s2 - 2.0 * sigma2 * (s.psi / s2 + s.psi_directional / (k * s2)))
        })
        .collect();
    Ok(DecompositionReport::from_series("thm4", &gaps, &formula))
}

/// `R(I) - R(EBE) = sigma^4 (m-3)^2 E[1/ss]` for the EBE with the true
/// variance. The stream's `psi` must equal `sigma2`.
pub fn ebe_risk_identity(samples: &[ShrinkSample], sigma2: f64) -> Result<DecompositionReport> {
    let m = check_stream(samples)?;
    if samples.iter().any(|s| s.psi != sigma2) {
        return Err(Error::InvalidArgument("stream variance differs from sigma2".into()));
    }
    let k = (m - 3) as f64;
    let gains = samples.iter().map(|s| observed_gap(s).map(|g| -g)).collect::<Result<Vec<f64>>>()?;
    let formula: Vec<f64> = samples.iter().map(|s| sigma2 * sigma2 * k * k / s.ss()).collect();
    Ok(DecompositionReport::from_series("ebe_identity", &gains, &formula))
}

/// For a data-independent estimate `c`:
/// `R(Eb) - R(A) = (m-3)^2 E[1/ss] (c^2 - 2 sigma^2 c)`.
pub fn cor12_identity(samples: &[ShrinkSample], sigma2: f64) -> Result<DecompositionReport> {
    let m = check_stream(samples)?;
    let k = (m - 3) as f64;
    let gaps = samples.iter().map(observed_gap).collect::<Result<Vec<f64>>>()?;
    let formula: Vec<f64> = samples.iter().map(|s| k * k * (s.psi * s.psi - 2.0 * sigma2 * s.psi) / s.ss()).collect();
    Ok(DecompositionReport::from_series("cor12_identity", &gaps, &formula))
}

fn ratio_se(num: &MeanSe, den: &MeanSe) -> f64 {
    // first-order bound ignoring the covariance of the two means
    let r = num.mean / den.mean;
    (r * r * ((num.se / num.mean).powi(2) + (den.se / den.mean).powi(2))).sqrt()
}

/// The sufficient dominance conditions that follow from the normal-model
/// decomposition, evaluated with Monte Carlo plug-ins. `psi` is the estimator
/// that produced `samples`; `bounds` are its declared properties, if any.
pub fn corollary_conditions(
    samples: &[ShrinkSample],
    psi: &VarianceEstimator,
    sigma2: f64,
    bounds: Option<PsiBounds>,
) -> Result<Vec<ConditionReport>> {
    let m = check_stream(samples)?;
    let (k, m1) = ((m - 3) as f64, (m - 1) as f64);
    let mut sq = Vec::with_capacity(samples.len());
    let mut lin = Vec::with_capacity(samples.len());
    let mut deriv = Vec::with_capacity(samples.len());
    for s in samples {
        let s2 = s.ss() / m1;
        sq.push(s.psi * s.psi / s2);
        lin.push(s.psi / s2);
        deriv.push(s.psi_directional / (k * s2));
    }
    let (a, b) = (MeanSe::of(&sq), MeanSe::of(&lin));
    let lin_plus: Vec<f64> = lin.iter().zip(&deriv).map(|(l, d)| l + d).collect();
    let bd = MeanSe::of(&lin_plus);
    let two_sigma2 = 2.0 * sigma2;
    let mut out = Vec::new();

    let mut eq6 = ConditionReport::compare("eq6", a.mean / bd.mean, two_sigma2, Direction::Less, vec![ratio_se(&a, &bd)]);
    if !(bd.mean > 0.0) {
        eq6.satisfied = false;
        eq6 = eq6.with_note("denominator is not positive");
    }
    out.push(eq6);

    let eq7 = ConditionReport::compare("eq7", a.mean / b.mean, two_sigma2, Direction::Less, vec![ratio_se(&a, &b)]);
    let note = if psi.needs_observations() {
        "mean-adjustedness not checked: estimator depends on the raw matrix".to_string()
    } else {
        let adjusted = samples
            .iter()
            .take(200)
            .map(|s| is_mean_adjusted(psi, None, &s.aggregate))
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .all(|b| b);
        format!("mean-adjusted on sampled points: {adjusted}")
    };
    out.push(eq7.with_note(note));

    if psi.is_data_independent() {
        let plain: Vec<f64> = samples.iter().map(|s| s.psi).collect();
        let squares: Vec<f64> = plain.iter().map(|p| p * p).collect();
        let (p1, p2) = (MeanSe::of(&plain), MeanSe::of(&squares));
        out.push(ConditionReport::compare("cor12", p2.mean / p1.mean, two_sigma2, Direction::Less, vec![ratio_se(&p2, &p1)]));
    }
    if let VarianceEstimator::Constant(c) = psi {
        out.push(ConditionReport::compare("constant_rule", *c, two_sigma2, Direction::Less, vec![]));
    }

    if let Some(bounds) = bounds {
        let eps = bounds.epsilon;
        let inside = samples.iter().filter(|s| (s.psi - sigma2).abs() < eps).count() as f64 / samples.len() as f64;
        match (bounds.delta, bounds.bound) {
            (None, _) => {
                let mut c = ConditionReport::compare("cor13", eps, sigma2, Direction::Less, vec![]);
                c.satisfied &= eps > 0.0;
                out.push(c.with_note(format!("observed P(|psi - sigma^2| < epsilon) = {inside}")));
            }
            (Some(delta), Some(bound)) => {
                let b_max = delta / (1.0 - delta) * sigma2 * sigma2;
                out.push(ConditionReport::compare("cor14_bound", bound, b_max, Direction::Less, vec![]));
                let eps_max = -two_sigma2 + (5.0 * sigma2 * sigma2 + bound * (1.0 - 1.0 / delta)).sqrt();
                let mut c = ConditionReport::compare("cor14_epsilon", eps, eps_max, Direction::Less, vec![]);
                c.satisfied &= eps > 0.0;
                let above = samples.iter().filter(|s| s.psi >= bound).count();
                out.push(c.with_note(format!(
                    "observed P(|psi - sigma^2| < epsilon) = {inside} (declared {delta}); draws at or above bound: {above}"
                )));
            }
            (Some(_), None) => return Err(Error::InvalidArgument("a probability bound needs an upper bound B".into())),
        }
    }
    Ok(out)
}

/// Per-coordinate risk reduction of the Bayes posterior mean over the
/// identity when `mu_j ~ N(mu0, sigma0^2)` and `X_j ~ N(mu_j, sigma^2)`:
/// `sigma^4 / (sigma0^2 + sigma^2)`.
pub fn bayes_risk_gap(sigma2: f64, sigma0_2: f64) -> Result<f64> {
    for (index, value) in [sigma2, sigma0_2].into_iter().enumerate() {
        if !(value > 0.0) || value.is_nan() {
            return Err(Error::NonPositiveVariance { index, value });
        }
    }
    Ok(sigma2 * sigma2 / (sigma0_2 + sigma2))
}
