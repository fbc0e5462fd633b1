//! Command-line arguments, the optional TOML config file, and their merge
//! into fully resolved per-command configurations.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ebtd::analysis::{LossConvention, PsiBounds};
use ebtd::experiments::{GroundTruthModel, SyntheticSpec, WorkerSigmas};
use ebtd::pipeline::{AlphaMode, PipelineSpec};
use ebtd::td::TdAlgorithm;
use ebtd::variance::VarianceEstimator;
use ebtd::VarianceVector;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Parser, Debug)]
#[command(name = "ebtd", version, about = "Empirical Bayes shrinkage for truth discovery: demos, risk sweeps and condition checks")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Recompute the four-worker worked example and check it.
    #[command(name = "demo-table1")]
    DemoTable1,
    /// Sweep an (n, m) grid and report paired Monte Carlo risks.
    Simulate(SimulateArgs),
    /// Improvement ratios on a CSV dataset or a synthetic generator.
    Evaluate(EvaluateArgs),
    /// Evaluate the dominance conditions and risk identities on synthetic data.
    Conditions(ConditionsArgs),
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommonArgs {
    /// Base seed; every random stream is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo replicates (samples for `evaluate`).
    #[arg(long, global = true)]
    pub replicates: Option<usize>,
    /// Directory for CSV and JSONL reports; CSV goes to stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Loss convention: `sum` or `mean`.
    #[arg(long, global = true)]
    pub loss: Option<String>,
    /// Worker threads: a number or `auto`.
    #[arg(long, global = true)]
    #[serde(deserialize_with = "threads_from_toml")]
    pub threads: Option<String>,
    /// Dataset in the `worker_id,q_<id>,...` CSV format.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// TOML config file; its values win over flags.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn threads_from_toml<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Threads {
        Count(u64),
        Text(String),
    }
    Ok(Option::<Threads>::deserialize(d)?.map(|t| match t {
        Threads::Count(n) => n.to_string(),
        Threads::Text(s) => s,
    }))
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Worker counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Question counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    /// Ground truth: `constant:v`, `gaussian:mean:var`, `bimodal:lo:hi:var` or `fixed:a/b/...`.
    #[arg(long)]
    pub gt: Option<String>,
    /// Worker variances: `indexed`, `gaussian[:mean:var:floor]` or `explicit:a/b/...`.
    #[arg(long)]
    pub sigmas: Option<String>,
    /// Pipelines; the first is the reference for ratios and gaps.
    #[arg(long, value_delimiter = ',')]
    pub pipelines: Option<Vec<String>>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    /// Base algorithms: mean, median, crh, catd, dw, blue.
    #[arg(long, value_delimiter = ',')]
    pub bases: Option<Vec<String>>,
    /// Variance estimators: h, h-agg, s[:c], const:c.
    #[arg(long, value_delimiter = ',')]
    pub psi: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    /// Sub-problems per cell.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Split questions into this many ground-truth quantile buckets.
    #[arg(long)]
    pub partition: Option<usize>,
    /// Synthetic ground truth, used when no dataset is given.
    #[arg(long)]
    pub gt: Option<String>,
    /// Synthetic worker variances, used when no dataset is given.
    #[arg(long)]
    pub sigmas: Option<String>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionsArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub gt: Option<String>,
    #[arg(long)]
    pub sigmas: Option<String>,
    #[arg(long)]
    pub base: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub psi: Option<Vec<String>>,
    /// True variance of the aggregate; derived for mean and BLUE when omitted.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Declared |psi - sigma^2| < epsilon bound.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Probability with which the epsilon bound holds.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Declared almost-sure upper bound B on psi.
    #[arg(long)]
    pub bound: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    #[serde(flatten)]
    pub common: CommonArgs,
    pub simulate: Option<SimulateArgs>,
    pub evaluate: Option<EvaluateArgs>,
    pub conditions: Option<ConditionsArgs>,
}

pub fn read_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

macro_rules! prefer_file {
    ($flags:expr, $file:expr, $($field:ident),+) => {
        $( $flags.$field = $file.$field.or($flags.$field.take()); )+
    };
}

impl CommonArgs {
    pub fn merge(mut self, file: CommonArgs) -> Self {
        prefer_file!(self, file, seed, replicates, out, loss, threads, data);
        self
    }
}

impl SimulateArgs {
    pub fn merge(mut self, file: Option<SimulateArgs>) -> Self {
        if let Some(file) = file {
            prefer_file!(self, file, n, m, gt, sigmas, pipelines);
        }
        self
    }
}

impl EvaluateArgs {
    pub fn merge(mut self, file: Option<EvaluateArgs>) -> Self {
        if let Some(file) = file {
            prefer_file!(self, file, bases, psi, n, m, samples, partition, gt, sigmas);
        }
        self
    }
}

impl ConditionsArgs {
    pub fn merge(mut self, file: Option<ConditionsArgs>) -> Self {
        if let Some(file) = file {
            prefer_file!(self, file, n, m, gt, sigmas, base, psi, sigma2, epsilon, delta, bound);
        }
        self
    }
}

/// Thread count for the worker pool; 0 lets rayon decide.
pub fn parse_threads(s: Option<&str>) -> Result<usize, CliError> {
    match s {
        None | Some("auto") => Ok(0),
        Some(t) => match t.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Validation(format!("--threads expects a positive number or `auto`, got {t:?}"))),
        },
    }
}

fn number(s: &str, what: &str) -> Result<f64, CliError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::Validation(format!("{what}: not a number: {s:?}")))
}

fn numbers(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split('/').map(|p| number(p, what)).collect()
}

pub fn parse_gt(s: &str) -> Result<GroundTruthModel, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Validation(format!("unknown ground truth {s:?}"));
    Ok(match parts.as_slice() {
        ["constant", v] => GroundTruthModel::Constant { value: number(v, "gt")? },
        ["gaussian", mean, var] => GroundTruthModel::Gaussian { mean: number(mean, "gt")?, variance: number(var, "gt")? },
        ["bimodal", lo, hi, var] => {
            GroundTruthModel::Bimodal { low: number(lo, "gt")?, high: number(hi, "gt")?, jitter_variance: number(var, "gt")? }
        }
        ["fixed", vals] => GroundTruthModel::Fixed { values: numbers(vals, "gt")? },
        _ => return Err(bad()),
    })
}

pub fn parse_sigmas(s: &str) -> Result<WorkerSigmas, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    Ok(match parts.as_slice() {
        ["indexed"] => WorkerSigmas::Indexed,
        ["gaussian"] => WorkerSigmas::default_gaussian(),
        ["gaussian", mean, var, floor] => WorkerSigmas::GaussianSq {
            mean: number(mean, "sigmas")?,
            variance: number(var, "sigmas")?,
            floor: number(floor, "sigmas")?,
        },
        ["explicit", vals] => WorkerSigmas::Explicit { variances: VarianceVector::new(numbers(vals, "sigmas")?)? },
        _ => return Err(CliError::Validation(format!("unknown worker variances {s:?}"))),
    })
}

pub fn parse_base(s: &str) -> Result<TdAlgorithm, CliError> {
    Ok(s.parse::<TdAlgorithm>()?)
}

pub fn parse_psi(s: &str) -> Result<VarianceEstimator, CliError> {
    Ok(s.parse::<VarianceEstimator>()?)
}

/// Replicates spent estimating alpha* for `star` pipelines.
pub const STAR_BUDGET: usize = 10_000;

/// `blue`, `eb_blue`, `stein_blue`, a base name, or `eb:<base>:<psi>[:<alpha>|:star]`.
pub fn parse_pipeline(s: &str) -> Result<PipelineSpec, CliError> {
    let spec = match s {
        "eb_blue" => PipelineSpec::eb_blue_oracle(),
        "stein_blue" => PipelineSpec::stein_blue_oracle(),
        _ => match s.strip_prefix("eb:") {
            Some(rest) => {
                let mut parts = rest.splitn(3, ':');
                let base = parse_base(parts.next().unwrap_or_default())?;
                let psi_and_alpha = parts.collect::<Vec<_>>().join(":");
                // the estimator syntax itself may contain ':' (s:c, const:c)
                let (psi, alpha) = match psi_and_alpha.rsplit_once(":alpha=") {
                    Some((p, a)) => (p.to_string(), Some(a.to_string())),
                    None => (psi_and_alpha, None),
                };
                let mut spec = PipelineSpec::eb_wrap(base, parse_psi(&psi)?);
                match alpha.as_deref() {
                    None => {}
                    Some("star") => spec = spec.with_alpha(AlphaMode::Star { budget: STAR_BUDGET }),
                    Some(a) => spec = spec.with_alpha(AlphaMode::Fixed(number(a, "alpha")?)),
                }
                spec
            }
            None => PipelineSpec::base_only(parse_base(s)?),
        },
    }
    .named(s);
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateConfig {
    pub seed: u64,
    pub replicates: usize,
    pub loss: LossConvention,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub gt: String,
    pub sigmas: String,
    pub pipelines: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateConfig {
    pub seed: u64,
    pub samples: usize,
    pub loss: LossConvention,
    pub data: Option<PathBuf>,
    pub gt: Option<String>,
    pub sigmas: Option<String>,
    pub bases: Vec<String>,
    pub psi: Vec<String>,
    /// `None` uses every worker (question) of the dataset or bucket.
    pub n: Option<Vec<usize>>,
    pub m: Option<Vec<usize>>,
    pub partition: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionsConfig {
    pub seed: u64,
    pub replicates: usize,
    pub n: usize,
    pub m: usize,
    pub gt: String,
    pub sigmas: String,
    pub base: String,
    pub psi: Vec<String>,
    pub sigma2: Option<f64>,
    pub bounds: Option<PsiBounds>,
}

fn loss_of(common: &CommonArgs) -> Result<LossConvention, CliError> {
    Ok(common.loss.as_deref().unwrap_or("sum").parse::<LossConvention>()?)
}

fn nonempty<T>(v: Vec<T>, what: &str) -> Result<Vec<T>, CliError> {
    if v.is_empty() {
        return Err(CliError::Validation(format!("{what} must not be empty")));
    }
    Ok(v)
}

impl SimulateConfig {
    pub fn resolve(common: &CommonArgs, a: SimulateArgs) -> Result<Self, CliError> {
        let cfg = Self {
            seed: common.seed.unwrap_or(0),
            replicates: common.replicates.unwrap_or(10_000),
            loss: loss_of(common)?,
            n: nonempty(a.n.unwrap_or_else(|| vec![1, 2, 4, 8]), "n")?,
            m: nonempty(a.m.unwrap_or_else(|| vec![5, 10, 25, 100]), "m")?,
            gt: a.gt.unwrap_or_else(|| "gaussian:2:1".into()),
            sigmas: a.sigmas.unwrap_or_else(|| "indexed".into()),
            pipelines: nonempty(
                a.pipelines.unwrap_or_else(|| vec!["blue".into(), "eb_blue".into(), "stein_blue".into()]),
                "pipelines",
            )?,
        };
        if common.data.is_some() {
            return Err(CliError::Validation("simulate draws synthetic data; --data is not used".into()));
        }
        cfg.generator(1, 1)?;
        cfg.pipeline_specs()?;
        Ok(cfg)
    }

    pub fn generator(&self, n: usize, m: usize) -> Result<SyntheticSpec, CliError> {
        let spec = SyntheticSpec::new(parse_gt(&self.gt)?, parse_sigmas(&self.sigmas)?, n, m);
        Ok(spec)
    }

    pub fn pipeline_specs(&self) -> Result<Vec<PipelineSpec>, CliError> {
        self.pipelines.iter().map(|p| parse_pipeline(p)).collect()
    }
}

impl EvaluateConfig {
    pub fn resolve(common: &CommonArgs, a: EvaluateArgs) -> Result<Self, CliError> {
        let synthetic = common.data.is_none();
        let cfg = Self {
            seed: common.seed.unwrap_or(0),
            samples: a.samples.or(common.replicates).unwrap_or(1000),
            loss: loss_of(common)?,
            data: common.data.clone(),
            gt: if synthetic { Some(a.gt.unwrap_or_else(|| "constant:2".into())) } else { a.gt },
            sigmas: if synthetic { Some(a.sigmas.unwrap_or_else(|| "gaussian".into())) } else { a.sigmas },
            bases: nonempty(
                a.bases.unwrap_or_else(|| ["mean", "median", "crh", "catd", "dw"].map(String::from).to_vec()),
                "bases",
            )?,
            psi: nonempty(a.psi.unwrap_or_else(|| vec!["h-agg".into()]), "psi")?,
            n: a.n.or(synthetic.then(|| vec![10])).map(|v| nonempty(v, "n")).transpose()?,
            m: a.m.or(synthetic.then(|| vec![50])).map(|v| nonempty(v, "m")).transpose()?,
            partition: a.partition,
        };
        if !synthetic && (cfg.gt.is_some() || cfg.sigmas.is_some()) {
            return Err(CliError::Validation("--gt/--sigmas describe synthetic data and cannot be combined with --data".into()));
        }
        if synthetic && cfg.partition.is_some() {
            return Err(CliError::Validation("--partition needs a dataset (--data)".into()));
        }
        if cfg.partition == Some(0) {
            return Err(CliError::Validation("--partition must be at least 1".into()));
        }
        for b in &cfg.bases {
            parse_base(b)?;
        }
        for p in &cfg.psi {
            parse_psi(p)?;
        }
        if let (Some(gt), Some(s)) = (&cfg.gt, &cfg.sigmas) {
            parse_gt(gt)?;
            parse_sigmas(s)?;
        }
        Ok(cfg)
    }
}

impl ConditionsConfig {
    pub fn resolve(common: &CommonArgs, a: ConditionsArgs) -> Result<Self, CliError> {
        if common.data.is_some() {
            return Err(CliError::Validation("conditions need the synthetic truth; --data is not used".into()));
        }
        let bounds = match (a.epsilon, a.delta, a.bound) {
            (None, None, None) => None,
            (Some(epsilon), delta, bound) => Some(PsiBounds { epsilon, delta, bound }),
            _ => return Err(CliError::Validation("--delta/--bound need --epsilon".into())),
        };
        let cfg = Self {
            seed: common.seed.unwrap_or(0),
            replicates: common.replicates.unwrap_or(20_000),
            n: a.n.unwrap_or(1),
            m: a.m.unwrap_or(10),
            gt: a.gt.unwrap_or_else(|| "constant:2".into()),
            sigmas: a.sigmas.unwrap_or_else(|| "explicit:1".into()),
            base: a.base.unwrap_or_else(|| "mean".into()),
            psi: nonempty(a.psi.unwrap_or_else(|| vec!["s:1".into()]), "psi")?,
            sigma2: a.sigma2,
            bounds,
        };
        if common.loss.is_some() {
            loss_of(common)?;
        }
        cfg.generator()?.validate()?;
        parse_base(&cfg.base)?;
        for p in &cfg.psi {
            parse_psi(p)?;
        }
        cfg.aggregate_variance()?;
        Ok(cfg)
    }

    pub fn generator(&self) -> Result<SyntheticSpec, CliError> {
        Ok(SyntheticSpec::new(parse_gt(&self.gt)?, parse_sigmas(&self.sigmas)?, self.n, self.m))
    }

    /// Variance of one aggregated answer under the configured workers.
    pub fn aggregate_variance(&self) -> Result<f64, CliError> {
        if let Some(s) = self.sigma2 {
            if !(s > 0.0 && s.is_finite()) {
                return Err(CliError::Validation(format!("--sigma2 must be positive, got {s}")));
            }
            return Ok(s);
        }
        let vars: Vec<f64> = match parse_sigmas(&self.sigmas)? {
            WorkerSigmas::Indexed => (1..=self.n).map(|i| (i * i) as f64).collect(),
            WorkerSigmas::Explicit { variances } => variances.to_vec(),
            WorkerSigmas::GaussianSq { .. } => {
                return Err(CliError::Validation("random worker variances: pass --sigma2".into()))
            }
        };
        let base = parse_base(&self.base)?;
        match base.name() {
            "mean" => Ok(vars.iter().sum::<f64>() / (vars.len() * vars.len()) as f64),
            "blue" => Ok(VarianceVector::new(vars)?.reduced()),
            other => Err(CliError::Validation(format!("aggregate variance of {other} is not closed-form: pass --sigma2"))),
        }
    }
}
