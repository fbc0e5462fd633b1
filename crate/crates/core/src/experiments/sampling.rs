use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::model::{dispersion, AnswerVector};
use crate::rng::{stream, Role};

/// Uniform without-replacement sample of `n` workers and `m` questions.
/// Ground truth is sliced with the same columns.
pub fn subsample(ds: &Dataset, n: usize, m: usize, seed: u64) -> Result<Dataset> {
    let (rows, cols) = (ds.matrix.n_workers(), ds.matrix.n_questions());
    if n > rows || m > cols {
        return Err(Error::RequestTooLarge { requested_rows: n, requested_cols: m, rows, cols });
    }
    if n == 0 || m == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut row_rng = stream(seed, Role::Subsample, 0);
    let mut col_rng = stream(seed, Role::Subsample, 1);
    let r = index::sample(&mut row_rng, rows, n).into_vec();
    let c = index::sample(&mut col_rng, cols, m).into_vec();
    let matrix = ds.matrix.select(&r, &c)?;
    let ground_truth = ds.ground_truth.as_ref().map(|gt| AnswerVector::from_trusted(c.iter().map(|&j| gt[j]).collect()));
    Dataset::new(matrix, ground_truth)
}

/// What the questions were sorted by before splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionBasis {
    GroundTruth,
    /// A fallback key such as an aggregate, used when no truth is known.
    Aggregated,
}

/// One bucket of questions.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub dataset: Dataset,
    /// Column indices into the source dataset, in original order.
    pub questions: Vec<usize>,
    /// Sample variance of the bucket's ground truth; `None` for a singleton
    /// bucket or when there is no truth.
    pub gt_variance: Option<f64>,
    pub basis: PartitionBasis,
}

/// Sorts questions by ground truth and splits them into `buckets` contiguous
/// quantile groups of near-equal size.
pub fn partition_questions(ds: &Dataset, buckets: usize) -> Result<Vec<Partition>> {
    let gt = ds.truth()?.to_vec();
    partition_questions_by(ds, buckets, &gt, PartitionBasis::GroundTruth)
}

/// As [`partition_questions`], sorting by an arbitrary per-question key.
pub fn partition_questions_by(ds: &Dataset, buckets: usize, key: &[f64], basis: PartitionBasis) -> Result<Vec<Partition>> {
    let m = ds.matrix.n_questions();
    if key.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: key.len() });
    }
    if buckets == 0 || buckets > m {
        return Err(Error::InvalidArgument(format!("buckets must be in 1..={m}, got {buckets}")));
    }
    let gt_variance = |cols: &[usize]| {
        let gt = ds.ground_truth.as_ref()?;
        let vals: Vec<f64> = cols.iter().map(|&j| gt[j]).collect();
        dispersion(&vals).sample_variance
    };
    if buckets == 1 {
        let questions: Vec<usize> = (0..m).collect();
        let gt_variance = gt_variance(&questions);
        return Ok(vec![Partition { dataset: ds.clone(), questions, gt_variance, basis }]);
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b)));
    let all_rows: Vec<usize> = (0..ds.matrix.n_workers()).collect();
    (0..buckets)
        .map(|b| {
            let mut questions = order[b * m / buckets..(b + 1) * m / buckets].to_vec();
            questions.sort_unstable();
            let matrix = ds.matrix.select(&all_rows, &questions)?;
            let ground_truth = ds
                .ground_truth
                .as_ref()
                .map(|gt| AnswerVector::from_trusted(questions.iter().map(|&j| gt[j]).collect()));
            Ok(Partition {
                dataset: Dataset::new(matrix, ground_truth)?,
                gt_variance: gt_variance(&questions),
                questions,
                basis,
            })
        })
        .collect()
}
