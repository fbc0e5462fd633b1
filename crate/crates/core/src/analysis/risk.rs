use serde::{Deserialize, Serialize};

use super::conditions::shrink_stream;
use super::{loss, LossConvention};
use crate::error::{Error, Result};
use crate::experiments::{gen_synthetic, subsample, Dataset, SyntheticSpec};
use crate::model::VarianceVector;
use crate::pipeline::{estimate_alpha_star, shrink_aggregate, AlphaMode, PipelineSpec, Stage};
use crate::rng::{derive_seed, Role};
use crate::stats::{paired, MeanSe};
use crate::td::{run_td_with, TdAlgorithm};
use crate::try_par_map;
use crate::variance::{psi_value, VarianceEstimator};

/// Monte Carlo estimate of one pipeline's risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub name: String,
    pub mean_loss: f64,
    pub std_error: f64,
    pub replicates: usize,
    pub seed: u64,
    pub loss_convention: LossConvention,
}

impl RiskReport {
    fn from_losses(name: String, losses: &[f64], seed: u64, loss_convention: LossConvention) -> Self {
        let s = MeanSe::of(losses);
        Self { name, mean_loss: s.mean, std_error: s.se, replicates: s.n, seed, loss_convention }
    }
}

/// Several pipelines evaluated on identical replicate data.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRisk {
    pub reports: Vec<RiskReport>,
    /// `losses[k][r]`: loss of pipeline `k` on replicate `r`.
    pub losses: Vec<Vec<f64>>,
    /// Alpha values substituted for [`AlphaMode::Star`] pipelines.
    pub resolved_alpha: Vec<Option<f64>>,
}

impl PairedRisk {
    /// Mean and standard error of `loss[a] - loss[b]` over replicates.
    pub fn gap(&self, a: usize, b: usize) -> MeanSe {
        MeanSe::of(&paired(&self.losses[a], &self.losses[b]))
    }
}

fn replicate_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed, Role::Replicate, r as u64)
}

/// Replaces `Star` alpha with a plug-in estimate from `budget` replicates on
/// a stream disjoint from the evaluation stream.
pub fn resolve_alpha(generator: &SyntheticSpec, pipeline: &PipelineSpec, seed: u64) -> Result<Option<f64>> {
    let AlphaMode::Star { budget } = pipeline.alpha else {
        return Ok(None);
    };
    if pipeline.stage != Stage::EmpiricalBayes {
        return Err(Error::InvalidPipeline("alpha* applies to the empirical Bayes stage".into()));
    }
    let samples = shrink_stream(generator, &pipeline.base, &pipeline.variance_source, budget, derive_seed(seed, Role::Sample, 0))?;
    estimate_alpha_star(&samples).map(Some)
}

/// Paired Monte Carlo risk: replicate `r` draws a fresh dataset from
/// `generator` reseeded with a key derived from `(seed, r)`, and every
/// pipeline runs on it.
pub fn mc_risk_paired(
    generator: &SyntheticSpec,
    pipelines: &[PipelineSpec],
    replicates: usize,
    seed: u64,
    convention: LossConvention,
) -> Result<PairedRisk> {
    if replicates < 2 {
        return Err(Error::InsufficientReplicates { needed: 2, got: replicates });
    }
    generator.validate()?;
    let mut resolved_alpha = Vec::with_capacity(pipelines.len());
    let mut runnable = Vec::with_capacity(pipelines.len());
    for p in pipelines {
        p.validate()?;
        let alpha = resolve_alpha(generator, p, seed)?;
        resolved_alpha.push(alpha);
        runnable.push(match alpha {
            Some(a) => p.clone().with_alpha(AlphaMode::Fixed(a.max(0.0))),
            None => p.clone(),
        });
    }

    let per_replicate = try_par_map(replicates, |r| {
        let syn = gen_synthetic(&generator.with_seed(replicate_seed(seed, r)))?;
        let truth = syn.dataset.truth()?;
        runnable
            .iter()
            .map(|p| loss(&p.run(&syn.dataset.matrix, Some(&syn.variances))?, truth, convention))
            .collect::<Result<Vec<f64>>>()
    })?;

    let losses: Vec<Vec<f64>> = (0..pipelines.len()).map(|k| per_replicate.iter().map(|l| l[k]).collect()).collect();
    let reports = pipelines
        .iter()
        .zip(&losses)
        .map(|(p, l)| RiskReport::from_losses(p.name.clone(), l, seed, convention))
        .collect();
    Ok(PairedRisk { reports, losses, resolved_alpha })
}

pub fn mc_risk(
    generator: &SyntheticSpec,
    pipeline: &PipelineSpec,
    replicates: usize,
    seed: u64,
    convention: LossConvention,
) -> Result<RiskReport> {
    let mut paired = mc_risk_paired(generator, std::slice::from_ref(pipeline), replicates, seed, convention)?;
    Ok(paired.reports.remove(0))
}

/// Where improvement-ratio samples come from.
#[derive(Debug, Clone, Copy)]
pub enum IrSource<'a> {
    /// Each sample is a fresh `n x m` draw.
    Generator(&'a SyntheticSpec),
    /// Each sample is an `n x m` sub-matrix of a dataset with ground truth.
    Dataset(&'a Dataset),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrReport {
    pub base: String,
    pub psi: String,
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    pub seed: u64,
    /// Risk of the wrapped pipeline over risk of the base algorithm.
    pub ir: f64,
    pub base_risk: RiskReport,
    pub eb_risk: RiskReport,
    /// Paired `loss(eb) - loss(base)`.
    pub gap: MeanSe,
}

/// Improvement ratio of `Eb(base, psi)` over `base`: the ratio of summed
/// losses over `samples` sub-problems of shape `n x m`.
#[allow(clippy::too_many_arguments)]
pub fn improvement_ratio(
    source: IrSource<'_>,
    base: &TdAlgorithm,
    psi: &VarianceEstimator,
    n: usize,
    m: usize,
    samples: usize,
    seed: u64,
    convention: LossConvention,
) -> Result<IrReport> {
    psi.validate()?;
    if samples == 0 {
        return Err(Error::InsufficientReplicates { needed: 1, got: 0 });
    }
    if let IrSource::Dataset(ds) = source {
        ds.truth()?;
        let (rows, cols) = (ds.matrix.n_workers(), ds.matrix.n_questions());
        if n > rows || m > cols || n == 0 || m == 0 {
            return Err(Error::InsufficientData(format!("cannot sample {n}x{m} from a {rows}x{cols} dataset")));
        }
    }
    let generator = match source {
        IrSource::Generator(g) => {
            let g = g.with_shape(n, m);
            g.validate()?;
            Some(g)
        }
        IrSource::Dataset(_) => None,
    };

    let pairs = try_par_map(samples, |k| {
        let sample_seed = derive_seed(seed, Role::Sample, k as u64);
        let (ds, vars): (Dataset, Option<VarianceVector>) = match (source, &generator) {
            (IrSource::Generator(_), Some(g)) => {
                let syn = gen_synthetic(&g.with_seed(sample_seed))?;
                (syn.dataset, Some(syn.variances))
            }
            (IrSource::Dataset(d), _) => (subsample(d, n, m, sample_seed)?, None),
            _ => unreachable!("generator is prepared for generator sources"),
        };
        let truth = ds.truth()?;
        let aggregate = run_td_with(base, &ds.matrix, vars.as_ref())?;
        let sigma2 = psi_value(psi, &ds.matrix, &aggregate)?;
        let base_loss = loss(&aggregate, truth, convention)?;
        let eb = shrink_aggregate(aggregate, sigma2, None)?;
        Ok((base_loss, loss(&eb, truth, convention)?))
    })?;

    let base_losses: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let eb_losses: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let base_risk = RiskReport::from_losses(base.name().to_string(), &base_losses, seed, convention);
    let eb_risk = RiskReport::from_losses(format!("eb({}, {psi})", base.name()), &eb_losses, seed, convention);
    if !(base_risk.mean_loss > 0.0) {
        return Err(Error::InsufficientSignal("base algorithm has zero loss on every sample"));
    }
    Ok(IrReport {
        base: base.name().to_string(),
        psi: psi.to_string(),
        n,
        m,
        samples,
        seed,
        ir: eb_risk.mean_loss / base_risk.mean_loss,
        gap: MeanSe::of(&paired(&eb_losses, &base_losses)),
        base_risk,
        eb_risk,
    })
}
