//! The four subcommands. Each returns a [`Report`]; emitting it is the
//! caller's job.

use std::fmt::Write as _;

use ebtd::analysis::{
    corollary_conditions, improvement_ratio, loss, mc_risk_paired, shrink_stream, thm3_condition, thm4_decomposition,
    cor12_identity, ConditionReport, IrReport, IrSource, LossConvention, Record,
};
use ebtd::experiments::{load_csv, partition_questions, Dataset, PartitionBasis};
use ebtd::pipeline::{eb_blue, VarianceSource};
use ebtd::td::{blue_aggregate, run_td, TdAlgorithm};

use crate::config::{parse_base, parse_psi, ConditionsConfig, EvaluateConfig, SimulateConfig};
use crate::output::{num, opt_num, Report};
use crate::CliError;

fn to_json<T: serde::Serialize>(cfg: &T) -> String {
    serde_json::to_string(cfg).expect("configs serialize")
}

/// Printed values of the worked example.
const PAPER_AVG: [f64; 4] = [11.0, 9.25, 12.75, 10.0];
const PAPER_AVG_LOSS: f64 = 9.41;
const PAPER_BLUE: [f64; 4] = [9.85, 10.6, 16.6, 12.95];
const PAPER_BLUE_LOSS: f64 = 8.22;
const PAPER_EB_BLUE_LOSS: f64 = 6.68;
const LOSS_TOL: f64 = 0.05;

/// Half a unit in the last printed decimal of `printed`, never below 0.01.
pub fn display_tolerance(printed: f64) -> f64 {
    let decimals = (0..=6).find(|&d| {
        let scaled = printed * 10f64.powi(d);
        (scaled - scaled.round()).abs() < 1e-9
    });
    let half_unit = 0.5 * 10f64.powi(-(decimals.unwrap_or(6) as i32));
    half_unit.max(0.01)
}

fn within_display(value: f64, printed: f64) -> bool {
    (value - printed).abs() <= display_tolerance(printed) + 1e-12
}

pub fn demo_table1() -> Result<Report, CliError> {
    let ds = Dataset::table1();
    let vars = Dataset::table1_variances();
    let truth = ds.truth()?;
    let avg = run_td(&TdAlgorithm::mean(), &ds.matrix)?;
    let (blue, blue_var) = blue_aggregate(&ds.matrix, &vars)?;
    let eb = eb_blue(&ds.matrix, &vars)?;
    let mse = |v: &[f64]| loss(v, truth, LossConvention::MeanSquared);
    let (avg_loss, blue_loss, eb_loss) = (mse(&avg)?, mse(&blue)?, mse(&eb)?);

    let mut failed = Vec::new();
    if avg.as_slice() != PAPER_AVG || (avg_loss - PAPER_AVG_LOSS).abs() > 0.005 {
        failed.push(format!("AVG row {:?} (loss {avg_loss}) differs from the printed {PAPER_AVG:?} ({PAPER_AVG_LOSS})", avg.as_slice()));
    }
    for (j, (&v, &p)) in blue.iter().zip(&PAPER_BLUE).enumerate() {
        if !within_display(v, p) {
            failed.push(format!("BLUE q{} = {v} is outside display rounding of {p}", j + 1));
        }
    }
    if (blue_loss - PAPER_BLUE_LOSS).abs() > LOSS_TOL {
        failed.push(format!("BLUE loss {blue_loss} differs from {PAPER_BLUE_LOSS} by more than {LOSS_TOL}"));
    }
    if !(eb_loss < blue_loss) {
        failed.push(format!("EbBlue loss {eb_loss} is not below the BLUE loss {blue_loss}"));
    }

    let mut text = String::new();
    let qs: Vec<String> = (0..ds.matrix.n_questions()).map(|j| ds.matrix.question_id(j)).collect();
    let _ = writeln!(text, "{:<8}{}{:>10}", "worker", qs.iter().map(|q| format!("{q:>9}")).collect::<String>(), "sigma^2");
    for i in 0..ds.matrix.n_workers() {
        let cells: String = ds.matrix.row(i).iter().map(|v| format!("{v:>9}")).collect();
        let _ = writeln!(text, "{:<8}{cells}{:>10}", ds.matrix.worker_id(i), vars[i]);
    }
    let row = |name: &str, v: &[f64], l: f64, printed: &str| {
        let cells: String = v.iter().map(|x| format!("{x:>9.4}")).collect();
        format!("{name:<8}{cells}   mse {l:.4}  (printed {printed})\n")
    };
    text.push_str(&row("GT", truth, 0.0, "-"));
    text.push_str(&row("AVG", &avg, avg_loss, &PAPER_AVG_LOSS.to_string()));
    text.push_str(&row("BLUE", &blue, blue_loss, &PAPER_BLUE_LOSS.to_string()));
    text.push_str(&row("EbBlue", &eb, eb_loss, &format!("{PAPER_EB_BLUE_LOSS}, row not reproducible")));
    let _ = writeln!(text, "aggregate variance of BLUE: {blue_var:.4}");
    let _ = writeln!(text, "checks: {}", if failed.is_empty() { "all within display rounding".to_string() } else { failed.join("; ") });

    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (name, v, l, printed) in
        [("avg", &avg, avg_loss, PAPER_AVG_LOSS), ("blue", &blue, blue_loss, PAPER_BLUE_LOSS), ("eb_blue", &eb, eb_loss, PAPER_EB_BLUE_LOSS)]
    {
        let mut r = vec![name.to_string()];
        r.extend(v.iter().map(|x| num(*x)));
        r.extend([num(l), num(printed)]);
        rows.push(r);
        records.push(Record { name: name.into(), lhs: l, rhs: printed, se: 0.0, seed: 0 });
    }
    Ok(Report {
        command: "demo-table1",
        config_json: "{\"loss\":\"mean\"}".into(),
        columns: vec!["row", "q1", "q2", "q3", "q4", "mse", "printed_mse"],
        rows,
        records,
        text: Some(text),
        failed_checks: failed,
    })
}

pub fn simulate(cfg: &SimulateConfig) -> Result<Report, CliError> {
    let pipelines = cfg.pipeline_specs()?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &n in &cfg.n {
        for &m in &cfg.m {
            let generator = cfg.generator(n, m)?;
            let paired = mc_risk_paired(&generator, &pipelines, cfg.replicates, cfg.seed, cfg.loss)?;
            let reference = &paired.reports[0];
            for (k, report) in paired.reports.iter().enumerate() {
                let gap = paired.gap(k, 0);
                rows.push(vec![
                    n.to_string(),
                    m.to_string(),
                    report.name.clone(),
                    num(report.mean_loss),
                    num(report.std_error),
                    num(report.mean_loss / reference.mean_loss),
                    num(gap.mean),
                    num(gap.se),
                    opt_num(paired.resolved_alpha[k]),
                ]);
                records.push(Record {
                    name: format!("n{n}_m{m}/{}", report.name),
                    lhs: report.mean_loss,
                    rhs: reference.mean_loss,
                    se: gap.se,
                    seed: cfg.seed,
                });
            }
        }
    }
    Ok(Report {
        command: "simulate",
        config_json: to_json(cfg),
        columns: vec!["n", "m", "pipeline", "risk", "se", "ratio_to_reference", "gap_to_reference", "gap_se", "alpha_star"],
        rows,
        records,
        ..Default::default()
    })
}

fn ir_row(bucket: &str, gt_variance: Option<f64>, r: &IrReport) -> Vec<String> {
    vec![
        bucket.to_string(),
        opt_num(gt_variance),
        r.base.clone(),
        r.psi.clone(),
        r.n.to_string(),
        r.m.to_string(),
        r.samples.to_string(),
        num(r.ir),
        num(r.base_risk.mean_loss),
        num(r.eb_risk.mean_loss),
        num(r.gap.mean),
        num(r.gap.se),
    ]
}

pub fn evaluate(cfg: &EvaluateConfig) -> Result<Report, CliError> {
    let bases = cfg.bases.iter().map(|b| parse_base(b)).collect::<Result<Vec<_>, _>>()?;
    let psis = cfg.psi.iter().map(|p| parse_psi(p)).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut run = |bucket: &str, gt_variance: Option<f64>, source: IrSource<'_>, full: (usize, usize)| -> Result<(), CliError> {
        let ns = cfg.n.clone().unwrap_or_else(|| vec![full.0]);
        let ms = cfg.m.clone().unwrap_or_else(|| vec![full.1]);
        for (base, base_name) in bases.iter().zip(&cfg.bases) {
            for (psi, psi_name) in psis.iter().zip(&cfg.psi) {
                for &n in &ns {
                    for &m in &ms {
                        let mut r = improvement_ratio(source, base, psi, n, m, cfg.samples, cfg.seed, cfg.loss)?;
                        r.base = base_name.clone();
                        r.psi = psi_name.clone();
                        rows.push(ir_row(bucket, gt_variance, &r));
                        records.push(Record {
                            name: format!("{bucket}/{base_name}/{psi_name}/n{n}_m{m}"),
                            lhs: r.eb_risk.mean_loss,
                            rhs: r.base_risk.mean_loss,
                            se: r.gap.se,
                            seed: cfg.seed,
                        });
                    }
                }
            }
        }
        Ok(())
    };
    match &cfg.data {
        Some(path) => {
            let ds = load_csv(path)?;
            match cfg.partition {
                None => run("all", ebtd::dispersion(ds.truth()?).sample_variance, IrSource::Dataset(&ds), (ds.matrix.n_workers(), ds.matrix.n_questions()))?,
                Some(k) => {
                    for (b, part) in partition_questions(&ds, k)?.iter().enumerate() {
                        debug_assert_eq!(part.basis, PartitionBasis::GroundTruth);
                        let d = &part.dataset;
                        let label = if k == 1 { "all".to_string() } else { format!("bucket{}", b + 1) };
                        run(&label, part.gt_variance, IrSource::Dataset(d), (d.matrix.n_workers(), d.matrix.n_questions()))?;
                    }
                }
            }
        }
        None => {
            let gt = cfg.gt.as_deref().expect("synthetic configs carry a ground truth spec");
            let sigmas = cfg.sigmas.as_deref().expect("synthetic configs carry worker variances");
            let spec = ebtd::experiments::SyntheticSpec::new(crate::config::parse_gt(gt)?, crate::config::parse_sigmas(sigmas)?, 1, 1);
            run("all", None, IrSource::Generator(&spec), (10, 50))?;
        }
    }
    Ok(Report {
        command: "evaluate",
        config_json: to_json(cfg),
        columns: vec!["bucket", "gt_variance", "base", "psi", "n", "m", "samples", "ir", "base_risk", "eb_risk", "gap", "gap_se"],
        rows,
        records,
        ..Default::default()
    })
}

fn condition_row(psi: &str, c: &ConditionReport) -> Vec<String> {
    vec![
        psi.to_string(),
        c.name.clone(),
        num(c.lhs),
        num(c.rhs),
        opt_num(c.std_errors.first().copied()),
        format!("{:?}", c.direction).to_lowercase(),
        c.satisfied.to_string(),
        c.note.clone().unwrap_or_default(),
    ]
}

pub fn conditions(cfg: &ConditionsConfig) -> Result<Report, CliError> {
    let generator = cfg.generator()?;
    let base = parse_base(&cfg.base)?;
    let sigma2 = cfg.aggregate_variance()?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for name in &cfg.psi {
        let psi = parse_psi(name)?;
        let source = VarianceSource::Estimator(psi.clone());
        let samples = shrink_stream(&generator, &base, &source, cfg.replicates, cfg.seed)?;
        let mut reports = vec![thm3_condition(&samples)?];
        reports.extend(corollary_conditions(&samples, &psi, sigma2, cfg.bounds)?);
        reports.push(thm4_decomposition(&samples, sigma2)?.condition());
        if psi.is_data_independent() {
            reports.push(cor12_identity(&samples, sigma2)?.condition());
        }
        for c in &reports {
            rows.push(condition_row(name, c));
            let mut rec = c.record(cfg.seed);
            rec.name = format!("{name}/{}", c.name);
            records.push(rec);
        }
    }
    Ok(Report {
        command: "conditions",
        config_json: to_json(cfg),
        columns: vec!["psi", "condition", "lhs", "rhs", "se", "direction", "satisfied", "note"],
        rows,
        records,
        ..Default::default()
    })
}
