//! Decorrelated score test for a single coefficient of the target rule,
//! built from the two half fits of the cross-fitted estimator.

use ndarray::{Array1, Array2};
use serde::Serialize;
use libm::erfc;

use crate::error::{Error, Result};
use crate::estimators::{stratified_folds, CrossFitEstimate, Dataset, DecisionRule, EstimatorConfig};
use crate::losses::{phi_double_prime, phi_prime};
use crate::optimizer::{fit_cross_validated, LossKind, PenalizedProblem};

/// Weights below this are treated as zero when checking for saturation.
const MIN_WEIGHT: f64 = 1e-12;

/// Rule at which the score and curvature weights are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreEvaluation {
    /// The half-fit rule with the tested coefficient set to its null value 0.
    #[default]
    NullRestricted,
    /// The half-fit rule as estimated, tested coefficient included. The
    /// penalized fit nearly zeroes this score, so power is low.
    Fitted,
}

/// A rule fitted on a half and the rows of that half.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfRule {
    pub rows: Vec<usize>,
    pub rule: DecisionRule,
}

/// The two half rules retained by a cross-fitted estimate.
pub fn half_rules(estimate: &CrossFitEstimate) -> [HalfRule; 2] {
    estimate.halves.clone().map(|h| HalfRule {
        rows: h.train_rows,
        rule: h.rule,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub coordinate: usize,
    /// Decorrelation vectors of the two halves; entries follow the other
    /// covariates in order, then the threshold slot.
    pub w_half: [Array1<f64>; 2],
    pub statistic: f64,
    pub sigma_hat_sq: f64,
    pub p_value: f64,
    pub n_used: usize,
    /// Nonzero covariate entries of each `w`, threshold slot excluded.
    pub w_support: [usize; 2],
}

/// Two-sided normal p-value `2 (1 - Phi(sqrt(n) |t| / sigma))`.
pub fn p_value(statistic: f64, sigma_hat_sq: f64, n: usize) -> f64 {
    if sigma_hat_sq <= 0.0 {
        return if statistic == 0.0 { 1.0 } else { 0.0 };
    }
    let z = (n as f64).sqrt() * statistic.abs() / sigma_hat_sq.sqrt();
    erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// `[X without column j | -1]`.
pub fn decorrelation_design(x: &Array2<f64>, j: usize) -> Array2<f64> {
    let (n, p) = x.dim();
    let mut out = Array2::from_elem((n, p), -1.0);
    let mut col = 0;
    for q in 0..p {
        if q != j {
            out.column_mut(col).assign(&x.column(q));
            col += 1;
        }
    }
    out
}

/// Curvature weights `phi''(y (x . beta - c))` of the target under `rule`.
pub fn curvature_weights(data: &Dataset, rule: &DecisionRule) -> Result<Array1<f64>> {
    let scores = rule.scores(data)?;
    Ok(Array1::from_iter(
        scores.iter().zip(data.target()).map(|(s, y)| phi_double_prime(y * s)),
    ))
}

fn check_coordinate(data: &Dataset, j: usize) -> Result<()> {
    if j >= data.p() {
        return Err(Error::Contract(format!("coordinate {j} out of range for p = {}", data.p())));
    }
    if data.p() < 2 {
        return Err(Error::Contract("decorrelation needs at least two covariates".into()));
    }
    Ok(())
}

/// Weighted L1 regression of `X_j` on the other covariates and a constant,
/// with weights from the rule's curvature and the penalty chosen by CV.
pub fn fit_decorrelation(
    half: &Dataset,
    rule: &DecisionRule,
    j: usize,
    config: &EstimatorConfig,
) -> Result<Array1<f64>> {
    check_coordinate(half, j)?;
    let weights = curvature_weights(half, rule)?;
    if weights.iter().all(|&w| w < MIN_WEIGHT) {
        return Err(Error::SaturatedRule);
    }
    let p = half.p();
    let mut mask = vec![true; p];
    mask[p - 1] = false;
    let problem = PenalizedProblem::new(
        decorrelation_design(half.covariates(), j),
        half.covariates().column(j).to_owned(),
        LossKind::WeightedSquared,
    )?
    .with_weights(weights)?
    .with_penalty_mask(mask)?;
    let k = config.cv_folds.min(half.n()).max(2);
    let folds = stratified_folds(&half.target().to_vec(), k, config.fold_seed);
    let (sol, _) = fit_cross_validated(&problem, &folds, k, &config.cv, &config.solver)?;
    Ok(sol.coefficients)
}

/// Half-sample averages `(mean[y phi'(m) r], mean[phi''(m) r^2])` with
/// `r = X_j - [X_-j, -1] . w`.
pub fn half_contributions(
    half: &Dataset,
    rule: &DecisionRule,
    j: usize,
    w: &Array1<f64>,
) -> Result<(f64, f64)> {
    check_coordinate(half, j)?;
    if w.len() != half.p() {
        return Err(Error::DimensionMismatch(format!(
            "decorrelation vector has {} entries, expected {}",
            w.len(),
            half.p()
        )));
    }
    let scores = rule.scores(half)?;
    let resid = &half.covariates().column(j) - &decorrelation_design(half.covariates(), j).dot(w);
    let n = half.n() as f64;
    let mut score = 0.0;
    let mut var = 0.0;
    for ((s, y), r) in scores.iter().zip(half.target()).zip(resid.iter()) {
        let m = y * s;
        score += y * phi_prime(m) * r;
        var += phi_double_prime(m) * r * r;
    }
    Ok((score / n, var / n))
}

fn evaluation_rule(rule: &DecisionRule, j: usize, evaluation: ScoreEvaluation) -> DecisionRule {
    match evaluation {
        ScoreEvaluation::Fitted => rule.clone(),
        ScoreEvaluation::NullRestricted => {
            let mut r = rule.clone();
            r.beta[j] = 0.0;
            r
        }
    }
}

/// Tests whether coordinate `j` of the target rule is zero. Each half rule
/// is fitted on its own half, the decorrelation vector is fitted and the
/// averages are taken on that same half, and the score is evaluated with
/// coordinate `j` held at zero.
pub fn decorrelated_test(
    data: &Dataset,
    halves: &[HalfRule; 2],
    j: usize,
    config: &EstimatorConfig,
) -> Result<TestReport> {
    decorrelated_test_with(data, halves, j, config, ScoreEvaluation::NullRestricted)
}

/// As [`decorrelated_test`] with a choice of evaluation rule.
pub fn decorrelated_test_with(
    data: &Dataset,
    halves: &[HalfRule; 2],
    j: usize,
    config: &EstimatorConfig,
    evaluation: ScoreEvaluation,
) -> Result<TestReport> {
    check_coordinate(data, j)?;
    let mut w_half = [Array1::zeros(0), Array1::zeros(0)];
    let mut w_support = [0; 2];
    let mut statistic = 0.0;
    let mut sigma_hat_sq = 0.0;
    for (m, half_fit) in halves.iter().enumerate() {
        if half_fit.rows.is_empty() || half_fit.rows.iter().any(|&i| i >= data.n()) {
            return Err(Error::Contract("half-fit rows do not belong to this dataset".into()));
        }
        let half = data.select_rows(&half_fit.rows);
        let rule = evaluation_rule(&half_fit.rule, j, evaluation);
        let w = fit_decorrelation(&half, &rule, j, config)?;
        let (s, v) = half_contributions(&half, &rule, j, &w)?;
        statistic += 0.5 * s;
        sigma_hat_sq += 0.5 * v;
        w_support[m] = w.iter().take(data.p() - 1).filter(|v| **v != 0.0).count();
        w_half[m] = w;
    }
    let n_used = data.n();
    Ok(TestReport {
        coordinate: j,
        w_half,
        statistic,
        sigma_hat_sq,
        p_value: p_value(statistic, sigma_hat_sq, n_used),
        n_used,
        w_support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn p_value_endpoints() {
        assert_eq!(p_value(0.0, 1.0, 100), 1.0);
        // sqrt(100) * 0.196 / 1 = 1.96
        assert!((p_value(0.196, 1.0, 100) - 0.049_995_790_296_440_5).abs() < 1e-12);
        assert!(p_value(0.3, 1.0, 100) < p_value(0.2, 1.0, 100));
    }

    #[test]
    fn decorrelation_design_layout() {
        let x = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        assert_eq!(decorrelation_design(&x, 1), array![[1.0, 3.0, -1.0], [4.0, 6.0, -1.0]]);
    }

    #[test]
    fn saturated_rule_is_rejected() {
        let data = Dataset::new(
            array![[1.0, 0.0], [-1.0, 1.0], [2.0, -1.0], [-2.0, 0.5]],
            array![[1.0], [-1.0], [1.0], [-1.0]],
        )
        .unwrap();
        let rule = DecisionRule::new(array![1e4, 0.0], 0.0).unwrap();
        assert!(matches!(
            fit_decorrelation(&data, &rule, 1, &EstimatorConfig::default()),
            Err(Error::SaturatedRule)
        ));
    }
}
