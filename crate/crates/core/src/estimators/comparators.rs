//! Comparator methods: direct transfer with the pooled direction as a fixed
//! offset, and multi-task logistic regression with a row-wise group penalty.

use ndarray::{s, Array1, Array2};

use super::baseline::single_outcome_problem;
use super::folds::{effective_folds, stratified_folds};
use super::pooled::fit_pooled;
use super::{Dataset, DecisionRule, EstimatorConfig, PooledFit};
use crate::error::{Error, Result};
use crate::optimizer::{fit_cross_validated, solve, LossKind, PenalizedProblem, Solution};

#[derive(Debug, Clone)]
pub struct TransferDirectFit {
    /// `beta_pool + delta` with the fitted threshold.
    pub rule: DecisionRule,
    pub pooled: PooledFit,
    pub delta: Array1<f64>,
    pub lambda: f64,
}

/// Pooled fit on all rows, then one L1 fit of the target with the pooled
/// index as a fixed offset (the pooled coefficient is held at 1).
pub fn fit_transfer_direct(data: &Dataset, config: &EstimatorConfig) -> Result<TransferDirectFit> {
    let outcomes: Vec<usize> = (0..data.n_outcomes()).collect();
    let pooled = fit_pooled(data, &outcomes, config)?;
    let p = data.p();
    let problem = single_outcome_problem(data, 0)?.with_offset(data.covariates().dot(&pooled.beta_pool))?;
    let k = effective_folds(config.cv_folds, data.n());
    let folds = stratified_folds(&data.target().to_vec(), k, config.fold_seed);
    let (sol, cv) = fit_cross_validated(&problem, &folds, k, &config.cv, &config.solver)?;
    let delta = sol.coefficients.slice(s![..p]).to_owned();
    let rule = DecisionRule::new(&pooled.beta_pool + &delta, sol.coefficients[p])?;
    Ok(TransferDirectFit {
        rule,
        pooled,
        delta,
        lambda: cv.best_lambda(),
    })
}

#[derive(Debug, Clone)]
pub struct MultiTaskFit {
    /// Target column of the coefficient matrix with the target threshold.
    pub rule: DecisionRule,
    /// `p x m` coefficient matrix, one column per outcome in `outcomes_used`.
    pub coefficients: Array2<f64>,
    pub intercepts: Array1<f64>,
    pub outcomes_used: Vec<usize>,
    pub lambda: f64,
}

/// Block-diagonal stacked problem: outcome `b` owns covariate columns
/// `b*p..(b+1)*p` and threshold column `m*p + b`; covariate `q` forms the
/// group `{b*p + q}` over all outcomes.
fn multitask_problem(data: &Dataset, outcomes: &[usize]) -> Result<PenalizedProblem> {
    let (n, p) = (data.n(), data.p());
    let m = outcomes.len();
    let mut design = Array2::zeros((n * m, m * p + m));
    let mut response = Array1::zeros(n * m);
    for (b, &j) in outcomes.iter().enumerate() {
        design
            .slice_mut(s![b * n..(b + 1) * n, b * p..(b + 1) * p])
            .assign(data.covariates());
        design.slice_mut(s![b * n..(b + 1) * n, m * p + b]).fill(-1.0);
        response.slice_mut(s![b * n..(b + 1) * n]).assign(&data.outcome(j));
    }
    let groups = (0..p).map(|q| (0..m).map(|b| b * p + q).collect()).collect();
    PenalizedProblem::new(design, response, LossKind::Logistic)?.with_groups(groups)
}

fn multitask_outcomes(data: &Dataset) -> Result<Vec<usize>> {
    if data.is_degenerate(0) {
        return Err(Error::DegenerateOutcome { outcome: 0 });
    }
    Ok((0..data.n_outcomes()).filter(|&j| !data.is_degenerate(j)).collect())
}

fn multitask_fit(data: &Dataset, outcomes: Vec<usize>, sol: &Solution, lambda: f64) -> Result<MultiTaskFit> {
    let (p, m) = (data.p(), outcomes.len());
    let coef = &sol.coefficients;
    let coefficients = Array2::from_shape_fn((p, m), |(q, b)| coef[b * p + q]);
    let intercepts = coef.slice(s![m * p..]).to_owned();
    let rule = DecisionRule::new(coefficients.column(0).to_owned(), intercepts[0])?;
    Ok(MultiTaskFit {
        rule,
        coefficients,
        intercepts,
        outcomes_used: outcomes,
        lambda,
    })
}

/// Multi-task fit with the penalty chosen by subject-level CV stratified on
/// the target. Degenerate auxiliary outcomes are left out.
pub fn fit_multitask_group_lasso(data: &Dataset, config: &EstimatorConfig) -> Result<MultiTaskFit> {
    let outcomes = multitask_outcomes(data)?;
    let problem = multitask_problem(data, &outcomes)?;
    let k = effective_folds(config.cv_folds, data.n());
    let subject = stratified_folds(&data.target().to_vec(), k, config.fold_seed);
    let folds: Vec<usize> = (0..outcomes.len()).flat_map(|_| subject.iter().copied()).collect();
    let (sol, cv) = fit_cross_validated(&problem, &folds, k, &config.cv, &config.solver)?;
    multitask_fit(data, outcomes, &sol, cv.best_lambda())
}

/// Multi-task fit at a fixed penalty level.
pub fn fit_multitask_group_lasso_at(
    data: &Dataset,
    lambda: f64,
    config: &EstimatorConfig,
) -> Result<MultiTaskFit> {
    let outcomes = multitask_outcomes(data)?;
    let problem = multitask_problem(data, &outcomes)?.with_lambda(lambda)?;
    let sol = solve(&problem, &config.solver, None)?;
    multitask_fit(data, outcomes, &sol, lambda)
}
