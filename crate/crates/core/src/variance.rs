//! Variance estimators (psi) for the aggregated worker.
//!
//! Two call shapes exist. The heuristic estimators read the raw observation
//! matrix and use the aggregate as a proxy for the truth; the others are
//! functions of the aggregated vector alone, which is the shape the
//! normal-model risk decomposition assumes. Derivatives are always taken with
//! respect to the aggregated vector, with the raw matrix held fixed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dispersion, ObservationMatrix, VarianceVector};

/// Tolerance used by [`is_mean_adjusted`].
pub const MEAN_ADJUSTED_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "snake_case")]
pub enum VarianceEstimator {
    /// Per-worker residual variance around the aggregate, averaged over workers.
    Heuristic,
    /// [`VarianceEstimator::Heuristic`] divided by `n`: the same per-worker
    /// average rescaled to the variance of a mean of `n` answers.
    HeuristicAggregated,
    /// `c * S^2(aggregate)`.
    SampleScaled(f64),
    /// A fixed guess, independent of the data.
    Constant(f64),
    /// Fixed per-worker guesses reduced to `(sum 1/s_i)^-1`.
    OracleReduced(VarianceVector),
}

impl VarianceEstimator {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Heuristic => "heuristic",
            Self::HeuristicAggregated => "heuristic_aggregated",
            Self::SampleScaled(_) => "sample_scaled",
            Self::Constant(_) => "constant",
            Self::OracleReduced(_) => "oracle_reduced",
        }
    }

    /// True when the value does not depend on the data at all.
    pub fn is_data_independent(&self) -> bool {
        matches!(self, Self::Constant(_) | Self::OracleReduced(_))
    }

    pub fn needs_observations(&self) -> bool {
        matches!(self, Self::Heuristic | Self::HeuristicAggregated)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::SampleScaled(c) | Self::Constant(c) if !(*c >= 0.0 && c.is_finite()) => {
                Err(Error::InvalidArgument(format!("{} parameter must be finite and >= 0, got {c}", self.name())))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for VarianceEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Heuristic => write!(f, "h"),
            Self::HeuristicAggregated => write!(f, "h-agg"),
            Self::SampleScaled(c) => write!(f, "s:{c}"),
            Self::Constant(c) => write!(f, "const:{c}"),
            Self::OracleReduced(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "oracle:{}", parts.join("/"))
            }
        }
    }
}

/// Parses `h`, `h-agg`, `s:<c>`, `const:<c>` or `oracle:<s1>/<s2>/...`.
impl FromStr for VarianceEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown variance estimator '{s}'"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h.trim(), Some(t)),
            None => (s.trim(), None),
        };
        let est = match (head, tail) {
            ("h", None) => Self::Heuristic,
            ("h-agg", None) => Self::HeuristicAggregated,
            ("s", None) => Self::SampleScaled(1.0),
            ("s", Some(c)) => Self::SampleScaled(num(c)?),
            ("const", Some(c)) => Self::Constant(num(c)?),
            ("oracle", Some(list)) => {
                let vals = list.split('/').map(num).collect::<Result<Vec<_>>>()?;
                Self::OracleReduced(VarianceVector::new(vals)?)
            }
            _ => return Err(bad()),
        };
        est.validate()?;
        Ok(est)
    }
}

/// `(1/n) sum_i (1/(m-1)) sum_j (X_ij - a_j)^2`.
pub fn psi_h(x: &ObservationMatrix, aggregate: &[f64]) -> Result<f64> {
    let m = x.n_questions();
    if aggregate.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: aggregate.len() });
    }
    if m < 2 {
        return Err(Error::TooFewQuestions { needed: 2, got: m });
    }
    let total: f64 = x
        .rows()
        .map(|row| row.iter().zip(aggregate).map(|(xij, a)| (xij - a) * (xij - a)).sum::<f64>() / (m - 1) as f64)
        .sum();
    Ok(total / x.n_workers() as f64)
}

/// `c * S^2(v)`; zero when `m < 2`.
pub fn psi_s(v: &[f64], c: f64) -> f64 {
    c * dispersion(v).sample_variance.unwrap_or(0.0)
}

/// Evaluates `psi` on the observations and the aggregate they produced.
pub fn psi_value(est: &VarianceEstimator, x: &ObservationMatrix, aggregate: &[f64]) -> Result<f64> {
    evaluate(est, Some(x), aggregate)
}

/// Evaluates `psi` as a function of the aggregate alone. Fails for the
/// heuristic kinds, which need the raw matrix.
pub fn psi_value_aggregate(est: &VarianceEstimator, aggregate: &[f64]) -> Result<f64> {
    evaluate(est, None, aggregate)
}

fn evaluate(est: &VarianceEstimator, x: Option<&ObservationMatrix>, aggregate: &[f64]) -> Result<f64> {
    est.validate()?;
    match est {
        VarianceEstimator::Heuristic => psi_h(x.ok_or(Error::RequiresObservations("heuristic"))?, aggregate),
        VarianceEstimator::HeuristicAggregated => {
            let x = x.ok_or(Error::RequiresObservations("heuristic_aggregated"))?;
            Ok(psi_h(x, aggregate)? / x.n_workers() as f64)
        }
        VarianceEstimator::SampleScaled(c) => Ok(psi_s(aggregate, *c)),
        VarianceEstimator::Constant(c) => Ok(*c),
        VarianceEstimator::OracleReduced(v) => Ok(v.reduced()),
    }
}

/// Partial derivative of `psi` with respect to coordinate `j` of the aggregate.
///
/// Analytic for the constant kinds and `SampleScaled`; central finite
/// difference with step `1e-5 * max(1, |v_j|)` otherwise.
pub fn psi_derivative(est: &VarianceEstimator, x: Option<&ObservationMatrix>, v: &[f64], j: usize) -> Result<f64> {
    if j >= v.len() {
        return Err(Error::InvalidArgument(format!("coordinate {j} out of range for length {}", v.len())));
    }
    match est {
        VarianceEstimator::Constant(_) | VarianceEstimator::OracleReduced(_) => Ok(0.0),
        VarianceEstimator::SampleScaled(c) => {
            let m = v.len();
            if m < 2 {
                return Ok(0.0);
            }
            let mean = dispersion(v).mean;
            Ok(2.0 * c * (v[j] - mean) / (m - 1) as f64)
        }
        VarianceEstimator::Heuristic | VarianceEstimator::HeuristicAggregated => {
            central_difference(|w| evaluate(est, x, w), v, j)
        }
    }
}

/// Central finite difference of `f` in coordinate `j`.
pub fn central_difference<F>(f: F, v: &[f64], j: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let h = 1e-5 * v[j].abs().max(1.0);
    let mut w = v.to_vec();
    w[j] = v[j] + h;
    let up = f(&w)?;
    w[j] = v[j] - h;
    let down = f(&w)?;
    Ok((up - down) / (2.0 * h))
}

/// `sum_j dpsi/dv_j * (v_j - mean(v))`, the derivative term of the
/// normal-model risk decomposition.
pub fn directional_term(est: &VarianceEstimator, x: Option<&ObservationMatrix>, v: &[f64]) -> Result<f64> {
    if est.is_data_independent() {
        return Ok(0.0);
    }
    let mean = dispersion(v).mean;
    (0..v.len()).map(|j| Ok(psi_derivative(est, x, v, j)? * (v[j] - mean))).sum()
}

/// Pointwise mean-adjustedness check at `v`: each derivative must be `<= tol`
/// where `v_j <= mean` and `>= -tol` where `v_j > mean`.
pub fn is_mean_adjusted(est: &VarianceEstimator, x: Option<&ObservationMatrix>, v: &[f64]) -> Result<bool> {
    let derivs = (0..v.len()).map(|j| psi_derivative(est, x, v, j)).collect::<Result<Vec<_>>>()?;
    Ok(is_mean_adjusted_by(v, |j| derivs[j]))
}

/// Mean-adjustedness for an arbitrary derivative oracle.
pub fn is_mean_adjusted_by(v: &[f64], derivative: impl Fn(usize) -> f64) -> bool {
    let mean = dispersion(v).mean;
    (0..v.len()).all(|j| {
        let d = derivative(j);
        if v[j] <= mean {
            d <= MEAN_ADJUSTED_TOL
        } else {
            d >= -MEAN_ADJUSTED_TOL
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::table1_rows;
    use crate::model::validate_matrix;
    use proptest::prelude::*;

    // Table 1 BLUE output at full precision.
    const BLUE: [f64; 4] = [9.852884450837376, 10.589595348987794, 16.58256055427337, 12.943180504229664];

    #[test]
    fn psi_h_examples() {
        let x = validate_matrix(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(psi_h(&x, &[1.0, 2.0, 3.0]).unwrap(), 0.0);

        let x = validate_matrix(&[vec![0.0, 2.0]]).unwrap();
        assert_eq!(psi_h(&x, &[1.0, 1.0]).unwrap(), 2.0);

        assert!(matches!(psi_h(&x, &[1.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn psi_h_table1_matches_double_loop() {
        let rows = table1_rows();
        let x = validate_matrix(&rows).unwrap();
        // naive double loop, accumulated in the opposite order
        let mut acc = 0.0;
        for j in (0..4).rev() {
            for i in (0..4).rev() {
                acc += (rows[i][j] - BLUE[j]).powi(2) / 3.0;
            }
        }
        let naive = acc / 4.0;
        let got = psi_h(&x, &BLUE).unwrap();
        assert!((got - naive).abs() < 1e-12 * naive);
        // extended-precision value
        assert!((got - 61.445407221603396).abs() < 1e-11);
    }

    #[test]
    fn psi_s_examples() {
        assert_eq!(psi_s(&[3.0; 6], 2.0), 0.0);
        assert_eq!(psi_s(&[0.0, 2.0], 1.0), 2.0);
        assert_eq!(psi_s(&[0.0, 2.0, 4.0], 0.5), 2.0);
    }

    #[test]
    fn psi_value_dispatch() {
        let x = validate_matrix(&table1_rows()).unwrap();
        assert_eq!(psi_value(&VarianceEstimator::Constant(1.5), &x, &BLUE).unwrap(), 1.5);
        let two = VarianceEstimator::OracleReduced(VarianceVector::new(vec![2.0, 2.0]).unwrap());
        assert!((psi_value(&two, &x, &BLUE).unwrap() - 1.0).abs() < 1e-15);
        let table = VarianceEstimator::OracleReduced(VarianceVector::new(vec![93.5, 11.0, 34.5, 56.5]).unwrap());
        // 1458039 / 216211 from exact reciprocal sums
        assert!((psi_value(&table, &x, &BLUE).unwrap() - 1458039.0 / 216211.0).abs() < 1e-12);
        let h = psi_value(&VarianceEstimator::Heuristic, &x, &BLUE).unwrap();
        let h_agg = psi_value(&VarianceEstimator::HeuristicAggregated, &x, &BLUE).unwrap();
        assert!((h_agg - h / 4.0).abs() < 1e-14);
        assert_eq!(
            psi_value_aggregate(&VarianceEstimator::Heuristic, &BLUE),
            Err(Error::RequiresObservations("heuristic"))
        );
    }

    #[test]
    fn parse_round_trip() {
        for s in ["h", "h-agg", "s:0.5", "const:1.5", "oracle:93.5/11/34.5/56.5"] {
            let est: VarianceEstimator = s.parse().unwrap();
            assert_eq!(est.to_string().parse::<VarianceEstimator>().unwrap(), est);
        }
        assert!("const:-1".parse::<VarianceEstimator>().is_err());
        assert!("bogus".parse::<VarianceEstimator>().is_err());
    }

    #[test]
    fn derivative_examples() {
        let c = VarianceEstimator::Constant(3.0);
        assert_eq!(psi_derivative(&c, None, &[1.0, 5.0, -2.0], 1).unwrap(), 0.0);

        let s = VarianceEstimator::SampleScaled(1.0);
        let analytic = psi_derivative(&s, None, &[0.0, 2.0], 0).unwrap();
        assert_eq!(analytic, -2.0);
        let fd = central_difference(|w| psi_value_aggregate(&s, w), &[0.0, 2.0], 0).unwrap();
        assert!(((fd - analytic) / analytic).abs() < 1e-6);
    }

    #[test]
    fn heuristic_derivative_matches_hand_derivation() {
        // d/da_j of (1/(n(m-1))) sum_i sum_j (X_ij - a_j)^2 = -2/(n(m-1)) sum_i (X_ij - a_j)
        let x = validate_matrix(&[vec![0.3, -1.2, 2.5], vec![1.7, 0.4, -0.9]]).unwrap();
        let a = [0.8, -0.5, 1.1];
        for j in 0..3 {
            let hand = -2.0 / (2.0 * 2.0) * (0..2).map(|i| x.get(i, j) - a[j]).sum::<f64>();
            let fd = psi_derivative(&VarianceEstimator::Heuristic, Some(&x), &a, j).unwrap();
            assert!(((fd - hand) / hand).abs() < 1e-6, "j={j}: {fd} vs {hand}");
        }
    }

    #[test]
    fn mean_adjusted_examples() {
        let v = [1.0, 4.0, -2.0, 0.5, 3.0];
        assert!(is_mean_adjusted(&VarianceEstimator::SampleScaled(0.7), None, &v).unwrap());
        assert!(is_mean_adjusted(&VarianceEstimator::Constant(2.0), None, &v).unwrap());
        // psi(v) = -S^2(v)
        let adversarial = |w: &[f64]| Ok(-psi_s(w, 1.0));
        assert!(!is_mean_adjusted_by(&v, |j| central_difference(adversarial, &v, j).unwrap()));
    }

    proptest! {
        #[test]
        fn psi_h_translation_invariant(
            rows in prop::collection::vec(prop::collection::vec(-10f64..10.0, 5), 1..5),
            a in prop::collection::vec(-10f64..10.0, 5),
            shift in prop::collection::vec(-100f64..100.0, 5),
        ) {
            let x = validate_matrix(&rows).unwrap();
            let moved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&shift).map(|(v, s)| v + s).collect()).collect();
            let y = validate_matrix(&moved).unwrap();
            let b: Vec<f64> = a.iter().zip(&shift).map(|(v, s)| v + s).collect();
            let p = psi_h(&x, &a).unwrap();
            let q = psi_h(&y, &b).unwrap();
            prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p));
        }

        #[test]
        fn sample_scaled_directional_term(v in prop::collection::vec(-10f64..10.0, 2..30), c in 0f64..5.0) {
            let est = VarianceEstimator::SampleScaled(c);
            let term = directional_term(&est, None, &v).unwrap();
            let d = dispersion(&v);
            let expected = 2.0 * c * d.ss / (v.len() - 1) as f64;
            prop_assert!(term >= -1e-12);
            prop_assert!((term - expected).abs() <= 1e-10 * expected.max(1e-300) + 1e-14);
        }
    }
}
