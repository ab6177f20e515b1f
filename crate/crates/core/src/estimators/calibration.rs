//! Calibration of a pooled direction against the target outcome.
//!
//! For a candidate coordinate `k` in the pooled support the calibrated rule
//! is `beta_cal = delta + gamma * beta_pool` with `delta_k = 0`, where
//! `delta` is L1-penalized and `gamma` and the threshold `c` are free.

use ndarray::{s, Array1, Array2};

use super::folds::{effective_folds, stratified_folds};
use super::{Dataset, DecisionRule, EstimatorConfig, PooledFit};
use crate::error::{Error, Result};
use crate::optimizer::{fit_cross_validated, solve, CvResult, LossKind, PenalizedProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedFit {
    /// Coordinate constrained to `delta[k] == 0`.
    pub k: usize,
    pub delta: Array1<f64>,
    pub gamma: f64,
    pub c: f64,
    /// `delta + gamma * beta_pool`, computed elementwise.
    pub beta_cal: Array1<f64>,
    pub lambda: f64,
    /// Penalized training objective at the solution.
    pub objective: f64,
    /// Held-out target loss, filled in by [`select_k_star`].
    pub validation_loss: Option<f64>,
}

impl CalibratedFit {
    pub fn rule(&self) -> DecisionRule {
        DecisionRule {
            beta: self.beta_cal.clone(),
            c: self.c,
        }
    }
}

/// Solution of the calibration problem without the `delta_k = 0` domain
/// restriction (not unique in general; its objective value is).
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedCalibration {
    pub delta: Array1<f64>,
    pub gamma: f64,
    pub c: f64,
    pub objective: f64,
}

/// Logistic problem with design `[X without column k | X beta_pool | -1]`;
/// only the retained covariate columns are penalized. `k = None` keeps
/// every covariate column.
pub fn calibration_problem(
    data: &Dataset,
    beta_pool: &Array1<f64>,
    k: Option<usize>,
) -> Result<PenalizedProblem> {
    let (n, p) = (data.n(), data.p());
    if beta_pool.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "pooled direction has {} entries for {p} covariates",
            beta_pool.len()
        )));
    }
    if data.is_degenerate(0) {
        return Err(Error::DegenerateOutcome { outcome: 0 });
    }
    let x = data.covariates();
    let kept: Vec<usize> = (0..p).filter(|&j| Some(j) != k).collect();
    let q = kept.len();
    let mut design = Array2::zeros((n, q + 2));
    for (col, &j) in kept.iter().enumerate() {
        design.column_mut(col).assign(&x.column(j));
    }
    design.column_mut(q).assign(&x.dot(beta_pool));
    design.column_mut(q + 1).fill(-1.0);
    let mut mask = vec![true; q + 2];
    mask[q] = false;
    mask[q + 1] = false;
    PenalizedProblem::new(design, data.target().to_owned(), LossKind::Logistic)?
        .with_penalty_mask(mask)
}

fn check_candidate(pooled: &PooledFit, k: usize) -> Result<()> {
    if pooled.beta_pool.iter().all(|&b| b == 0.0) {
        return Err(Error::Contract("pooled direction is identically zero".into()));
    }
    if k >= pooled.beta_pool.len() || pooled.beta_pool[k] == 0.0 {
        return Err(Error::Contract(format!("k = {k} is not in the pooled support")));
    }
    Ok(())
}

/// Coefficient vector for the `k` design, shifted along the pooled
/// direction from another domain's solution so the loss part is unchanged.
fn warm_coefficients(pooled: &PooledFit, k: usize, from: &CalibratedFit) -> Array1<f64> {
    let t = -from.delta[k] / pooled.beta_pool[k];
    let p = pooled.beta_pool.len();
    let mut coef = Array1::zeros(p + 1);
    let mut col = 0;
    for j in 0..p {
        if j == k {
            continue;
        }
        coef[col] = from.delta[j] + t * pooled.beta_pool[j];
        col += 1;
    }
    coef[p - 1] = from.gamma - t;
    coef[p] = from.c;
    coef
}

fn assemble(
    pooled: &PooledFit,
    k: usize,
    coef: &Array1<f64>,
    lambda: f64,
    objective: f64,
) -> CalibratedFit {
    let p = pooled.beta_pool.len();
    let mut delta = Array1::zeros(p);
    let mut col = 0;
    for j in 0..p {
        if j == k {
            continue;
        }
        delta[j] = coef[col];
        col += 1;
    }
    let gamma = coef[p - 1];
    let c = coef[p];
    let beta_cal = Array1::from_iter((0..p).map(|j| delta[j] + gamma * pooled.beta_pool[j]));
    CalibratedFit {
        k,
        delta,
        gamma,
        c,
        beta_cal,
        lambda,
        objective,
        validation_loss: None,
    }
}

/// Calibrated fit on domain `k` at a fixed penalty, optionally warm-started
/// from the solution on another domain.
pub fn fit_calibrated_k_at(
    data: &Dataset,
    pooled: &PooledFit,
    k: usize,
    lambda: f64,
    config: &EstimatorConfig,
    warm: Option<&CalibratedFit>,
) -> Result<CalibratedFit> {
    check_candidate(pooled, k)?;
    let problem = calibration_problem(data, &pooled.beta_pool, Some(k))?.with_lambda(lambda)?;
    let start = warm.map(|w| warm_coefficients(pooled, k, w));
    let sol = solve(&problem, &config.solver, start.as_ref().map(|s| s.view()))?;
    Ok(assemble(pooled, k, &sol.coefficients, lambda, sol.objective_value))
}

/// Calibrated fit on domain `k` with the penalty chosen by stratified CV.
pub fn fit_calibrated_k(
    data: &Dataset,
    pooled: &PooledFit,
    k: usize,
    config: &EstimatorConfig,
) -> Result<(CalibratedFit, CvResult)> {
    check_candidate(pooled, k)?;
    let problem = calibration_problem(data, &pooled.beta_pool, Some(k))?;
    let folds_k = effective_folds(config.cv_folds, data.n());
    let folds = stratified_folds(&data.target().to_vec(), folds_k, config.fold_seed);
    let (sol, cv) = fit_cross_validated(&problem, &folds, folds_k, &config.cv, &config.solver)?;
    Ok((
        assemble(pooled, k, &sol.coefficients, cv.best_lambda(), sol.objective_value),
        cv,
    ))
}

/// Calibration without the domain restriction on `delta`.
pub fn fit_calibrated_unconstrained(
    data: &Dataset,
    pooled: &PooledFit,
    lambda: f64,
    config: &EstimatorConfig,
) -> Result<UnconstrainedCalibration> {
    let p = data.p();
    let problem = calibration_problem(data, &pooled.beta_pool, None)?.with_lambda(lambda)?;
    let sol = solve(&problem, &config.solver, None)?;
    Ok(UnconstrainedCalibration {
        delta: sol.coefficients.slice(s![..p]).to_owned(),
        gamma: sol.coefficients[p],
        c: sol.coefficients[p + 1],
        objective: sol.objective_value,
    })
}

/// Picks the candidate with the smallest held-out target logistic loss;
/// ties go to the smallest `k`.
pub fn select_k_star(candidates: &[CalibratedFit], validation: &Dataset) -> Result<CalibratedFit> {
    if candidates.is_empty() {
        return Err(Error::Contract("no calibration candidates".into()));
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, cand) in candidates.iter().enumerate() {
        let loss = cand.rule().target_loss(validation)?;
        let better = match best {
            None => true,
            Some((bl, bi)) => loss < bl || (loss == bl && cand.k < candidates[bi].k),
        };
        if better {
            best = Some((loss, i));
        }
    }
    let (loss, i) = best.expect("nonempty");
    let mut chosen = candidates[i].clone();
    chosen.validation_loss = Some(loss);
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fit_with(k: usize, c: f64) -> CalibratedFit {
        CalibratedFit {
            k,
            delta: array![0.0, 0.0],
            gamma: 1.0,
            c,
            beta_cal: array![1.0, 0.0],
            lambda: 0.1,
            objective: 0.0,
            validation_loss: None,
        }
    }

    #[test]
    fn select_single_and_ties() {
        let data = Dataset::new(array![[1.0, 0.0], [-1.0, 0.0], [2.0, 1.0]], array![[1.0], [-1.0], [1.0]])
            .unwrap();
        let one = select_k_star(&[fit_with(0, 0.0)], &data).unwrap();
        assert_eq!(one.k, 0);
        assert!(one.validation_loss.is_some());
        let tie = select_k_star(&[fit_with(7, 0.0), fit_with(3, 0.0)], &data).unwrap();
        assert_eq!(tie.k, 3);
        assert!(select_k_star(&[], &data).is_err());
    }

    #[test]
    fn select_prefers_lower_loss() {
        let data = Dataset::new(array![[1.0, 0.0], [-1.0, 0.0]], array![[1.0], [-1.0]]).unwrap();
        // c = 0 separates the points, c = 5 misclassifies the positive one
        let chosen = select_k_star(&[fit_with(1, 5.0), fit_with(0, 0.0)], &data).unwrap();
        assert_eq!(chosen.c, 0.0);
    }

    #[test]
    fn candidate_outside_support_rejected() {
        let data = Dataset::new(
            Array2::from_shape_fn((10, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0),
            Array2::from_shape_fn((10, 1), |(i, _)| if i % 3 == 0 { 1.0 } else { -1.0 }),
        )
        .unwrap();
        let pooled = PooledFit::from_parts(array![0.5, 0.0, -0.2], array![0.0], vec![0], 0.1);
        let cfg = EstimatorConfig::default();
        assert!(matches!(
            fit_calibrated_k_at(&data, &pooled, 1, 0.05, &cfg, None),
            Err(Error::Contract(_))
        ));
        let zero = PooledFit::from_parts(array![0.0, 0.0, 0.0], array![0.0], vec![0], 0.1);
        assert!(fit_calibrated_k_at(&data, &zero, 0, 0.05, &cfg, None).is_err());
        let fit = fit_calibrated_k_at(&data, &pooled, 2, 0.05, &cfg, None).unwrap();
        assert_eq!(fit.delta[2], 0.0);
        for j in 0..3 {
            assert_eq!(
                fit.beta_cal[j].to_bits(),
                (fit.delta[j] + fit.gamma * pooled.beta_pool[j]).to_bits()
            );
        }
    }
}
