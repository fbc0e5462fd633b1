//! Datasets for experiments: synthetic AWG generation, CSV ingestion,
//! subsampling and question partitioning.

mod csv_io;
mod sampling;
mod synthetic;

pub use csv_io::{load_csv, read_answers, read_csv, save_csv, write_answers, write_csv, GROUND_TRUTH_ID};
pub use sampling::{partition_questions, partition_questions_by, subsample, Partition, PartitionBasis};
pub use synthetic::{gen_synthetic, GroundTruthModel, Synthetic, SyntheticSpec, WorkerSigmas};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnswerVector, ObservationMatrix};

/// An observation matrix with optional ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub matrix: ObservationMatrix,
    pub ground_truth: Option<AnswerVector>,
}

impl Dataset {
    pub fn new(matrix: ObservationMatrix, ground_truth: Option<AnswerVector>) -> Result<Self> {
        if let Some(gt) = &ground_truth {
            if gt.len() != matrix.n_questions() {
                return Err(Error::LengthMismatch { expected: matrix.n_questions(), got: gt.len() });
            }
        }
        Ok(Self { matrix, ground_truth })
    }

    pub fn truth(&self) -> Result<&AnswerVector> {
        self.ground_truth.as_ref().ok_or(Error::NoGroundTruth)
    }

    /// The worked example: four workers, four questions, ground truth
    /// `[10, 9, 12, 16]` and worker variances `[93.5, 11, 34.5, 56.5]`.
    pub fn table1() -> Self {
        let rows = vec![
            vec![20.0, 2.0, 3.0, 4.0],
            vec![10.0, 11.0, 18.0, 14.0],
            vec![8.0, 11.0, 23.0, 19.0],
            vec![6.0, 13.0, 7.0, 3.0],
        ];
        let matrix = ObservationMatrix::from_rows(&rows).expect("static table is valid");
        let gt = AnswerVector::new(vec![10.0, 9.0, 12.0, 16.0]).expect("static truth is valid");
        Self { matrix, ground_truth: Some(gt) }
    }

    pub fn table1_variances() -> crate::model::VarianceVector {
        crate::model::VarianceVector::new(vec![93.5, 11.0, 34.5, 56.5]).expect("static variances are valid")
    }
}
