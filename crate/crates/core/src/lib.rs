//! Empirical Bayes shrinkage for real-valued truth discovery.
//!
//! A truth-discovery (TD) algorithm aggregates an `n x m` matrix of worker
//! answers into one answer per question. This crate treats that aggregate as a
//! single "aggregated worker" and applies the Empirical Bayes estimator (EBE)
//! on top of it, shrinking every answer toward the grand mean.
//!
//! - [`model`]: observation containers and dispersion statistics.
//! - [`estimators`]: identity, EBE, generalized-alpha EBE, Stein, Bayes posterior mean.
//! - [`variance`]: variance estimators (psi) fed into the wrapped pipeline.
//! - [`td`]: BLUE and baseline TD algorithms (mean, median, CRH, CATD, distance weighted).
//! - [`pipeline`]: `EbBlue` with known variances and the generic `Eb(A, psi)` wrapper.
//! - [`analysis`]: losses, Monte Carlo risk, improvement ratio, risk identities and conditions.
//! - [`experiments`]: synthetic AWG generation, CSV datasets, subsampling, partitioning.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod td;
pub mod variance;

pub use error::{Error, Result};
pub use model::{dispersion, validate_matrix, AnswerVector, DispersionStats, ObservationMatrix, VarianceVector};

/// Maps `f` over `0..len`, in parallel when the `parallel` feature is on.
/// Output order always follows the index, so results do not depend on the
/// thread count.
pub(crate) fn par_map<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

pub(crate) fn try_par_map<T, F>(len: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    par_map(len, f).into_iter().collect()
}
