use ndarray::{s, Array1};

use super::dataset::with_intercept_column;
use super::folds::{effective_folds, stratified_folds};
use super::{Dataset, DecisionRule, EstimatorConfig};
use crate::error::{Error, Result};
use crate::optimizer::{fit_cross_validated, solve, CvResult, LossKind, PenalizedProblem};

/// L1-penalized logistic rule fitted on a single outcome.
#[derive(Debug, Clone)]
pub struct SingleOutcomeFit {
    pub rule: DecisionRule,
    pub lambda: f64,
    pub cv: Option<CvResult>,
}

/// Logistic problem for outcome `outcome` with design `[X | -1]`; only the
/// covariate columns are penalized.
pub fn single_outcome_problem(data: &Dataset, outcome: usize) -> Result<PenalizedProblem> {
    if outcome >= data.n_outcomes() {
        return Err(Error::Contract(format!("outcome {outcome} does not exist")));
    }
    if data.is_degenerate(outcome) {
        return Err(Error::DegenerateOutcome { outcome });
    }
    let p = data.p();
    let mut mask = vec![true; p + 1];
    mask[p] = false;
    PenalizedProblem::new(
        with_intercept_column(data.covariates()),
        data.outcome(outcome).to_owned(),
        LossKind::Logistic,
    )?
    .with_penalty_mask(mask)
}

fn rule_from(coefficients: &Array1<f64>, p: usize) -> Result<DecisionRule> {
    DecisionRule::new(coefficients.slice(s![..p]).to_owned(), coefficients[p])
}

/// Baseline estimator: L1-penalized logistic regression of the target on
/// the covariates, with the penalty chosen by stratified K-fold CV on
/// held-out logistic loss.
pub fn fit_single_outcome(data: &Dataset, config: &EstimatorConfig) -> Result<SingleOutcomeFit> {
    fit_outcome(data, 0, config)
}

pub(crate) fn fit_outcome(
    data: &Dataset,
    outcome: usize,
    config: &EstimatorConfig,
) -> Result<SingleOutcomeFit> {
    let problem = single_outcome_problem(data, outcome)?;
    let k = effective_folds(config.cv_folds, data.n());
    let labels = data.outcome(outcome).to_vec();
    let folds = stratified_folds(&labels, k, config.fold_seed);
    let (sol, cv) = fit_cross_validated(&problem, &folds, k, &config.cv, &config.solver)?;
    Ok(SingleOutcomeFit {
        rule: rule_from(&sol.coefficients, data.p())?,
        lambda: cv.best_lambda(),
        cv: Some(cv),
    })
}

/// Baseline estimator at a fixed penalty level.
pub fn fit_single_outcome_at(
    data: &Dataset,
    lambda: f64,
    config: &EstimatorConfig,
) -> Result<SingleOutcomeFit> {
    let problem = single_outcome_problem(data, 0)?.with_lambda(lambda)?;
    let sol = solve(&problem, &config.solver, None)?;
    Ok(SingleOutcomeFit {
        rule: rule_from(&sol.coefficients, data.p())?,
        lambda,
        cv: None,
    })
}
