//! Cross-fitted pooling and calibration, on one dataset or on a large
//! auxiliary dataset plus a small target dataset.

use ndarray::Array1;
use rayon::prelude::*;

use super::baseline::fit_outcome;
use super::calibration::{fit_calibrated_k, fit_calibrated_k_at, select_k_star, CalibratedFit};
use super::folds::split_halves;
use super::pooled::fit_pooled;
use super::{mix_seed, Dataset, DecisionRule, EstimatorConfig, PooledFit};
use crate::error::{Error, Result};

/// Where the pooled direction of each half comes from.
#[derive(Debug, Clone, Copy)]
pub enum PooledSource<'a> {
    /// Refit on each training half using these outcome columns.
    PerHalf { outcomes: &'a [usize] },
    /// One pooled fit shared by both halves.
    Fixed(&'a PooledFit),
}

/// Everything fitted on one training half.
#[derive(Debug, Clone)]
pub struct HalfFit {
    /// Rows (of the full dataset) the half was trained on.
    pub train_rows: Vec<usize>,
    /// Rows used to choose `k*`.
    pub validation_rows: Vec<usize>,
    pub pooled: PooledFit,
    /// Candidate coordinates that were calibrated, largest `|beta_pool|` first.
    pub candidates: Vec<usize>,
    /// Selected calibration; `None` when the half fell back to the baseline.
    pub selected: Option<CalibratedFit>,
    /// Penalty shared by every calibration on this half.
    pub calibration_lambda: f64,
    pub rule: DecisionRule,
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct CrossFitEstimate {
    /// Average of the two half rules.
    pub rule: DecisionRule,
    pub halves: [HalfFit; 2],
    pub warnings: Vec<String>,
}

/// Pooled-and-calibrated rule with cross-fitting, pooling over every
/// outcome column of `data`.
pub fn cross_fit_estimate(
    data: &Dataset,
    config: &EstimatorConfig,
    split_seed: u64,
) -> Result<CrossFitEstimate> {
    let outcomes: Vec<usize> = (0..data.n_outcomes()).collect();
    cross_fit_with_pooled(data, PooledSource::PerHalf { outcomes: &outcomes }, config, split_seed)
}

/// Two-dataset variant: one pooled fit on every outcome column of `large`
/// (all treated as auxiliary), then calibration cross-fitted on `small`,
/// whose column 0 is the target.
pub fn two_dataset_estimate(
    large: &Dataset,
    small: &Dataset,
    config: &EstimatorConfig,
    split_seed: u64,
) -> Result<CrossFitEstimate> {
    if large.p() != small.p() {
        return Err(Error::DimensionMismatch(format!(
            "large dataset has {} covariates, small has {}",
            large.p(),
            small.p()
        )));
    }
    let outcomes: Vec<usize> = (0..large.n_outcomes()).collect();
    let pooled = fit_pooled(
        large,
        &outcomes,
        &config.with_fold_seed(mix_seed(split_seed, 100)),
    )?;
    cross_fit_with_pooled(small, PooledSource::Fixed(&pooled), config, split_seed)
}

/// Cross-fitted estimator with a configurable pooled step.
pub fn cross_fit_with_pooled(
    data: &Dataset,
    source: PooledSource<'_>,
    config: &EstimatorConfig,
    split_seed: u64,
) -> Result<CrossFitEstimate> {
    if data.n() < 8 {
        return Err(Error::Contract(format!(
            "cross-fitting needs at least 8 rows, got {}",
            data.n()
        )));
    }
    if let PooledSource::Fixed(p) = source {
        if p.beta_pool.len() != data.p() {
            return Err(Error::DimensionMismatch("pooled direction length".into()));
        }
    }
    let (first, second) = split_halves(data.n(), split_seed);
    let mut warnings = Vec::new();
    let h1 = fit_half(data, &first, &second, source, config, mix_seed(split_seed, 1), &mut warnings)?;
    let h2 = fit_half(data, &second, &first, source, config, mix_seed(split_seed, 2), &mut warnings)?;
    let beta: Array1<f64> = (&h1.rule.beta + &h2.rule.beta) / 2.0;
    let rule = DecisionRule::new(beta, (h1.rule.c + h2.rule.c) / 2.0)?;
    Ok(CrossFitEstimate {
        rule,
        halves: [h1, h2],
        warnings,
    })
}

fn fit_half(
    data: &Dataset,
    train_rows: &[usize],
    validation_rows: &[usize],
    source: PooledSource<'_>,
    config: &EstimatorConfig,
    seed: u64,
    warnings: &mut Vec<String>,
) -> Result<HalfFit> {
    let config = config.with_fold_seed(seed);
    let train = data.select_rows(train_rows);
    let validation = data.select_rows(validation_rows);
    let pooled = match source {
        PooledSource::PerHalf { outcomes } => fit_pooled(&train, outcomes, &config)?,
        PooledSource::Fixed(p) => p.clone(),
    };
    warnings.extend(pooled.warnings.iter().cloned());

    if pooled.support.is_empty() {
        warnings.push(format!(
            "pooled support empty on a half of {} rows; using the single-outcome fit",
            train.n()
        ));
        let base = fit_outcome(&train, 0, &config)?;
        return Ok(HalfFit {
            train_rows: train_rows.to_vec(),
            validation_rows: validation_rows.to_vec(),
            pooled,
            candidates: Vec::new(),
            selected: None,
            calibration_lambda: base.lambda,
            rule: base.rule,
            fallback: true,
        });
    }

    let mut candidates = pooled.support.clone();
    candidates.sort_by(|&a, &b| {
        pooled.beta_pool[b]
            .abs()
            .total_cmp(&pooled.beta_pool[a].abs())
            .then(a.cmp(&b))
    });
    candidates.truncate(config.candidate_cap.max(1));

    let (lead, _) = fit_calibrated_k(&train, &pooled, candidates[0], &config)?;
    let lambda = lead.lambda;
    let rest: Vec<CalibratedFit> = candidates[1..]
        .par_iter()
        .map(|&k| fit_calibrated_k_at(&train, &pooled, k, lambda, &config, Some(&lead)))
        .collect::<Result<_>>()?;
    let mut fits = Vec::with_capacity(candidates.len());
    fits.push(lead);
    fits.extend(rest);
    let selected = select_k_star(&fits, &validation)?;
    Ok(HalfFit {
        train_rows: train_rows.to_vec(),
        validation_rows: validation_rows.to_vec(),
        pooled,
        candidates,
        rule: selected.rule(),
        selected: Some(selected),
        calibration_lambda: lambda,
        fallback: false,
    })
}
