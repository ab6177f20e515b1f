use ndarray::{s, Array1, Array2};

use super::folds::{effective_folds, stratified_folds};
use super::{Dataset, DecisionRule, EstimatorConfig};
use crate::error::{Error, Result};
use crate::optimizer::{fit_cross_validated, solve, LossKind, PenalizedProblem};

/// Shared direction fitted on several outcomes at once, with one threshold
/// per outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFit {
    pub beta_pool: Array1<f64>,
    /// `intercepts[m]` is the threshold of outcome `outcomes_used[m]`.
    pub intercepts: Array1<f64>,
    pub outcomes_used: Vec<usize>,
    /// Indices of the nonzero entries of `beta_pool`.
    pub support: Vec<usize>,
    pub lambda_chosen: f64,
    pub warnings: Vec<String>,
}

impl PooledFit {
    pub fn from_parts(
        beta_pool: Array1<f64>,
        intercepts: Array1<f64>,
        outcomes_used: Vec<usize>,
        lambda_chosen: f64,
    ) -> Self {
        let support = support_of(&beta_pool);
        Self {
            beta_pool,
            intercepts,
            outcomes_used,
            support,
            lambda_chosen,
            warnings: Vec::new(),
        }
    }

    /// Threshold fitted for outcome `j`, if it was pooled.
    pub fn intercept_of(&self, j: usize) -> Option<f64> {
        self.outcomes_used
            .iter()
            .position(|&o| o == j)
            .map(|m| self.intercepts[m])
    }
}

pub(crate) fn support_of(beta: &Array1<f64>) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Stacked logistic problem: one block of `n` rows per outcome, shared
/// covariate columns and a `-1` one-hot threshold column per outcome. The
/// loss is averaged over all stacked rows.
pub fn pooled_problem(data: &Dataset, outcomes: &[usize]) -> Result<PenalizedProblem> {
    let (n, p) = (data.n(), data.p());
    let m = outcomes.len();
    let mut design = Array2::zeros((n * m, p + m));
    let mut response = Array1::zeros(n * m);
    for (b, &j) in outcomes.iter().enumerate() {
        let rows = s![b * n..(b + 1) * n, ..];
        let mut block = design.slice_mut(rows);
        block.slice_mut(s![.., ..p]).assign(data.covariates());
        block.column_mut(p + b).fill(-1.0);
        response.slice_mut(s![b * n..(b + 1) * n]).assign(&data.outcome(j));
    }
    let mut mask = vec![true; p + m];
    mask[p..].iter_mut().for_each(|v| *v = false);
    PenalizedProblem::new(design, response, LossKind::Logistic)?.with_penalty_mask(mask)
}

/// Drops degenerate outcomes (with a warning each); errors if none remain.
fn usable_outcomes(data: &Dataset, outcomes: &[usize]) -> Result<(Vec<usize>, Vec<String>)> {
    if outcomes.is_empty() {
        return Err(Error::Contract("outcome subset must be nonempty".into()));
    }
    let mut kept = Vec::new();
    let mut warnings = Vec::new();
    for &j in outcomes {
        if j >= data.n_outcomes() {
            return Err(Error::Contract(format!("outcome {j} does not exist")));
        }
        if data.is_degenerate(j) {
            warnings.push(format!("outcome {j} is degenerate and was dropped from pooling"));
        } else {
            kept.push(j);
        }
    }
    if kept.is_empty() {
        return Err(Error::DegenerateOutcome { outcome: outcomes[0] });
    }
    Ok((kept, warnings))
}

fn assemble(coef: &Array1<f64>, p: usize, outcomes: Vec<usize>, lambda: f64, warnings: Vec<String>) -> PooledFit {
    let mut fit = PooledFit::from_parts(
        coef.slice(s![..p]).to_owned(),
        coef.slice(s![p..]).to_owned(),
        outcomes,
        lambda,
    );
    fit.warnings = warnings;
    fit
}

/// Pooled estimator over `outcomes` with the penalty chosen by CV. Folds
/// are drawn over subjects (all outcome rows of a subject share a fold),
/// stratified on the target when it is pooled.
pub fn fit_pooled(data: &Dataset, outcomes: &[usize], config: &EstimatorConfig) -> Result<PooledFit> {
    let (kept, warnings) = usable_outcomes(data, outcomes)?;
    let problem = pooled_problem(data, &kept)?;
    let k = effective_folds(config.cv_folds, data.n());
    let strat = if kept.contains(&0) { 0 } else { kept[0] };
    let subject_folds = stratified_folds(&data.outcome(strat).to_vec(), k, config.fold_seed);
    let folds: Vec<usize> = (0..kept.len()).flat_map(|_| subject_folds.iter().copied()).collect();
    let (sol, cv) = fit_cross_validated(&problem, &folds, k, &config.cv, &config.solver)?;
    Ok(assemble(&sol.coefficients, data.p(), kept, cv.best_lambda(), warnings))
}

/// Pooled estimator at a fixed penalty level.
pub fn fit_pooled_at(
    data: &Dataset,
    outcomes: &[usize],
    lambda: f64,
    config: &EstimatorConfig,
) -> Result<PooledFit> {
    let (kept, warnings) = usable_outcomes(data, outcomes)?;
    let problem = pooled_problem(data, &kept)?.with_lambda(lambda)?;
    let sol = solve(&problem, &config.solver, None)?;
    Ok(assemble(&sol.coefficients, data.p(), kept, lambda, warnings))
}

/// MultiTask2 comparator: the pooled direction with the target's threshold.
pub fn multitask_pooled_rule(pooled: &PooledFit) -> Result<DecisionRule> {
    let c = pooled
        .intercept_of(0)
        .ok_or_else(|| Error::Contract("target outcome was not part of the pooled fit".into()))?;
    DecisionRule::new(pooled.beta_pool.clone(), c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn stacked_layout() {
        let data = Dataset::new(array![[1.0, 2.0], [3.0, 4.0]], array![[1.0, -1.0], [-1.0, -1.0]]).unwrap();
        let pr = pooled_problem(&data, &[0, 1]).unwrap();
        assert_eq!(pr.design().dim(), (4, 4));
        assert_eq!(pr.design().row(2).to_vec(), vec![1.0, 2.0, 0.0, -1.0]);
        assert_eq!(pr.response().to_vec(), vec![1.0, -1.0, -1.0, -1.0]);
        assert!(!pr.is_penalized(2) && !pr.is_penalized(3) && pr.is_penalized(0));
    }

    #[test]
    fn degenerate_outcomes_are_dropped_or_fatal() {
        let x = Array2::from_shape_fn((8, 2), |(i, j)| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let y = Array2::from_shape_fn((8, 2), |(i, j)| if j == 1 || i % 2 == 0 { 1.0 } else { -1.0 });
        let data = Dataset::new(x, y).unwrap();
        let fit = fit_pooled_at(&data, &[0, 1], 0.01, &EstimatorConfig::default()).unwrap();
        assert_eq!(fit.outcomes_used, vec![0]);
        assert_eq!(fit.warnings.len(), 1);
        assert!(fit_pooled_at(&data, &[1], 0.01, &EstimatorConfig::default()).is_err());
        assert!(fit_pooled_at(&data, &[], 0.01, &EstimatorConfig::default()).is_err());
    }

    #[test]
    fn multitask2_copies_fields() {
        let fit = PooledFit::from_parts(array![0.0, 1.5], array![0.3, -0.2], vec![0, 1], 0.1);
        let rule = multitask_pooled_rule(&fit).unwrap();
        assert_eq!(rule.beta, fit.beta_pool);
        assert_eq!(rule.c, 0.3);
        let aux_only = PooledFit::from_parts(array![1.0], array![0.1], vec![1], 0.1);
        assert!(matches!(multitask_pooled_rule(&aux_only), Err(Error::Contract(_))));
    }
}
