//! WebAssembly bindings behind `www/index.html`. Each export takes plain
//! numbers and returns JSON, so the page needs no bundler.

use ebtd::analysis::{cor12_identity, loss, shrink_stream, LossConvention};
use ebtd::estimators::ebe;
use ebtd::experiments::{Dataset, GroundTruthModel, SyntheticSpec, WorkerSigmas};
use ebtd::pipeline::{shrink_aggregate, VarianceSource};
use ebtd::td::{blue_aggregate, run_td, TdAlgorithm};
use ebtd::variance::VarianceEstimator;
use ebtd::{AnswerVector, VarianceVector};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Row {
    pub name: &'static str,
    pub values: Vec<f64>,
    pub mse: f64,
}

#[derive(Debug, Serialize)]
pub struct Table1 {
    pub matrix: Vec<Vec<f64>>,
    pub truth: Vec<f64>,
    pub blue_variance: f64,
    pub rows: Vec<Row>,
}

/// The worked example with caller-chosen worker variances.
pub fn table1_report(variances: &[f64]) -> ebtd::Result<Table1> {
    let ds = Dataset::table1();
    let truth = ds.truth()?;
    let vars = VarianceVector::new(variances.to_vec())?;
    let avg = run_td(&TdAlgorithm::mean(), &ds.matrix)?;
    let (blue, blue_variance) = blue_aggregate(&ds.matrix, &vars)?;
    let eb = shrink_aggregate(blue.clone(), blue_variance, None)?;
    let row = |name, v: AnswerVector| -> ebtd::Result<Row> {
        let mse = loss(&v, truth, LossConvention::MeanSquared)?;
        Ok(Row { name, values: v.into_vec(), mse })
    };
    Ok(Table1 {
        matrix: ds.matrix.rows().map(<[f64]>::to_vec).collect(),
        truth: truth.to_vec(),
        blue_variance,
        rows: vec![row("AVG", avg)?, row("BLUE", blue)?, row("EbBlue", eb)?],
    })
}

#[derive(Debug, Serialize)]
pub struct Shrunk {
    pub estimate: Vec<f64>,
    pub shrink_factor: f64,
    pub degenerate: bool,
}

pub fn shrink_report(values: &[f64], sigma2: f64) -> ebtd::Result<Shrunk> {
    let r = ebe(&AnswerVector::new(values.to_vec())?, sigma2)?;
    Ok(Shrunk { estimate: r.estimate.into_vec(), shrink_factor: r.shrink_factor, degenerate: r.degenerate })
}

#[derive(Debug, Serialize)]
pub struct GuessCurve {
    pub guesses: Vec<f64>,
    /// Observed `risk(Eb) - risk(identity)` per guess.
    pub gap: Vec<f64>,
    pub gap_se: Vec<f64>,
    /// `(m-3)^2 E[1/ss] (c^2 - 2 sigma^2 c)` on the same draws.
    pub formula: Vec<f64>,
}

/// Risk change from shrinking one unit-variance worker's answers with a fixed
/// variance guess `c * sigma^2`, over a grid of `c` in `[0, 3]`.
pub fn guess_curve(m: usize, points: usize, replicates: usize, seed: u64) -> ebtd::Result<GuessCurve> {
    let sigma2 = 1.0;
    let worker = WorkerSigmas::Explicit { variances: VarianceVector::new(vec![sigma2])? };
    let spec = SyntheticSpec::new(GroundTruthModel::Gaussian { mean: 0.0, variance: 1.0 }, worker, 1, m);
    let points = points.max(2);
    let mut out = GuessCurve { guesses: vec![], gap: vec![], gap_se: vec![], formula: vec![] };
    for k in 0..points {
        let c = 3.0 * sigma2 * k as f64 / (points - 1) as f64;
        let source = VarianceSource::Estimator(VarianceEstimator::Constant(c));
        let samples = shrink_stream(&spec, &TdAlgorithm::mean(), &source, replicates, seed)?;
        let r = cor12_identity(&samples, sigma2)?;
        out.guesses.push(c);
        out.gap.push(r.lhs_gap);
        out.gap_se.push(r.lhs_se);
        out.formula.push(r.rhs_formula);
    }
    Ok(out)
}

fn to_js<T: Serialize>(r: ebtd::Result<T>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn table1(variances: &[f64]) -> Result<String, JsError> {
    to_js(table1_report(variances))
}

#[wasm_bindgen]
pub fn shrink(values: &[f64], sigma2: f64) -> Result<String, JsError> {
    to_js(shrink_report(values, sigma2))
}

#[wasm_bindgen]
pub fn constant_guess_curve(m: usize, points: usize, replicates: usize, seed: u64) -> Result<String, JsError> {
    to_js(guess_curve(m, points, replicates, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_defaults() {
        let t = table1_report(&[93.5, 11.0, 34.5, 56.5]).unwrap();
        assert_eq!(t.rows[0].values, [11.0, 9.25, 12.75, 10.0]);
        assert!((t.rows[0].mse - 9.40625).abs() < 1e-12);
        assert!((t.rows[2].mse - 6.8315).abs() < 1e-4);
        assert!(t.rows[2].mse < t.rows[1].mse);
        assert!(table1_report(&[1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(table1_report(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn equal_variances_make_blue_the_mean() {
        let t = table1_report(&[2.0; 4]).unwrap();
        for (b, a) in t.rows[1].values.iter().zip(&t.rows[0].values) {
            assert!((b - a).abs() < 1e-12);
        }
        assert_eq!(t.blue_variance, 0.5);
    }

    #[test]
    fn shrink_moves_toward_mean() {
        let s = shrink_report(&[0.0, 1.0, 2.0, 3.0, 4.0], 1.0).unwrap();
        // ss = 10, factor 1 - 2/10
        assert!((s.shrink_factor - 0.8).abs() < 1e-15);
        assert!((s.estimate[0] - 0.4).abs() < 1e-12);
        assert!(shrink_report(&[1.0, 2.0, 3.0], 1.0).unwrap().degenerate);
    }

    #[test]
    fn curve_changes_sign_near_two_sigma2() {
        let c = guess_curve(10, 7, 2000, 1).unwrap();
        assert_eq!(c.guesses.first(), Some(&0.0));
        assert_eq!(c.gap[0], 0.0);
        assert!(c.gap[2] < 0.0 && c.gap[6] > 0.0, "{:?}", c.gap);
        assert!(serde_json::from_str::<serde_json::Value>(&constant_guess_curve(10, 3, 100, 1).unwrap()).is_ok());
    }
}
