//! Estimation procedures for a target binary outcome with auxiliary
//! outcomes: the single-outcome baseline, pooled estimation, per-domain
//! calibration, cross-fitted and two-dataset estimators, and the
//! comparator methods.

mod baseline;
mod calibration;
mod comparators;
mod crossfit;
mod dataset;
mod folds;
mod pooled;
mod selection;

pub use baseline::{fit_single_outcome, fit_single_outcome_at, single_outcome_problem, SingleOutcomeFit};
pub use calibration::{
    calibration_problem, fit_calibrated_k, fit_calibrated_k_at, fit_calibrated_unconstrained,
    select_k_star, CalibratedFit, UnconstrainedCalibration,
};
pub use comparators::{
    fit_multitask_group_lasso, fit_multitask_group_lasso_at, fit_transfer_direct,
    MultiTaskFit, TransferDirectFit,
};
pub use crossfit::{
    cross_fit_estimate, cross_fit_with_pooled, two_dataset_estimate, CrossFitEstimate, HalfFit,
    PooledSource,
};
pub use dataset::{Dataset, DecisionRule};
pub use folds::{split_halves, stratified_folds};
pub use pooled::{fit_pooled, fit_pooled_at, multitask_pooled_rule, pooled_problem, PooledFit};
pub use selection::{select_auxiliary_by_f1, AuxiliarySelection, F1Scoring};

use crate::optimizer::{CvConfig, SolverConfig};

/// Tuning shared by every estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Number of cross-validation folds for every tuned penalty.
    pub cv_folds: usize,
    pub cv: CvConfig,
    pub solver: SolverConfig,
    /// Maximum number of calibration domains per half; the coordinates with
    /// the largest pooled coefficients are kept.
    pub candidate_cap: usize,
    /// Seed for the cross-validation fold assignment.
    pub fold_seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            cv_folds: 5,
            cv: CvConfig::default(),
            solver: SolverConfig::default(),
            candidate_cap: 25,
            fold_seed: 0x5eed,
        }
    }
}

impl EstimatorConfig {
    pub(crate) fn with_fold_seed(&self, seed: u64) -> Self {
        Self {
            fold_seed: seed,
            ..*self
        }
    }
}

/// SplitMix64 step, used to derive independent child seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
