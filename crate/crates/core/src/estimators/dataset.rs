use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{accuracy_from_scores, phi, sgn};

/// Covariates plus a target outcome (column 0) and zero or more auxiliary
/// outcomes, every outcome coded as ±1.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariates: Array2<f64>,
    outcomes: Array2<f64>,
    feature_names: Option<Vec<String>>,
    outcome_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(covariates: Array2<f64>, outcomes: Array2<f64>) -> Result<Self> {
        let (n, p) = covariates.dim();
        if n == 0 || p == 0 {
            return Err(Error::Contract(format!("dataset needs n >= 1 and p >= 1, got {n} x {p}")));
        }
        if outcomes.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} covariate rows but {} outcome rows",
                outcomes.nrows()
            )));
        }
        if outcomes.ncols() == 0 {
            return Err(Error::Contract("dataset needs at least one outcome column".into()));
        }
        if let Some(((row, col), v)) = outcomes
            .indexed_iter()
            .find(|(_, v)| **v != 1.0 && **v != -1.0)
        {
            return Err(Error::Data {
                row,
                column: format!("outcome {col}"),
                message: format!("value {v} is not -1 or +1"),
            });
        }
        if let Some(((row, col), _)) = covariates.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data {
                row,
                column: format!("covariate {col}"),
                message: "non-finite covariate".into(),
            });
        }
        Ok(Self {
            covariates,
            outcomes,
            feature_names: None,
            outcome_names: None,
        })
    }

    /// Builds a dataset from a covariate matrix and a list of outcome vectors.
    pub fn from_outcomes(covariates: Array2<f64>, outcomes: &[Array1<f64>]) -> Result<Self> {
        let n = covariates.nrows();
        let mut y = Array2::zeros((n, outcomes.len()));
        for (j, col) in outcomes.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "outcome {j} has {} entries for {n} rows",
                    col.len()
                )));
            }
            y.column_mut(j).assign(col);
        }
        Self::new(covariates, y)
    }

    pub fn with_names(mut self, features: Vec<String>, outcomes: Vec<String>) -> Result<Self> {
        if features.len() != self.p() || outcomes.len() != self.n_outcomes() {
            return Err(Error::DimensionMismatch("name list lengths".into()));
        }
        self.feature_names = Some(features);
        self.outcome_names = Some(outcomes);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    /// Number of outcome columns (target plus auxiliaries).
    pub fn n_outcomes(&self) -> usize {
        self.outcomes.ncols()
    }

    /// Number of auxiliary outcomes `J`.
    pub fn n_auxiliary(&self) -> usize {
        self.outcomes.ncols() - 1
    }

    pub fn covariates(&self) -> &Array2<f64> {
        &self.covariates
    }

    pub fn outcomes(&self) -> &Array2<f64> {
        &self.outcomes
    }

    pub fn outcome(&self, j: usize) -> ArrayView1<'_, f64> {
        self.outcomes.column(j)
    }

    pub fn target(&self) -> ArrayView1<'_, f64> {
        self.outcomes.column(0)
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn outcome_names(&self) -> Option<&[String]> {
        self.outcome_names.as_deref()
    }

    pub fn is_degenerate(&self, j: usize) -> bool {
        let col = self.outcomes.column(j);
        col.iter().all(|&v| v == col[0])
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            covariates: self.covariates.select(Axis(0), rows),
            outcomes: self.outcomes.select(Axis(0), rows),
            feature_names: self.feature_names.clone(),
            outcome_names: self.outcome_names.clone(),
        }
    }

    /// Same rows with only the listed outcome columns, in the given order.
    pub fn select_outcomes(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() || cols.iter().any(|&c| c >= self.n_outcomes()) {
            return Err(Error::Contract(format!("invalid outcome selection {cols:?}")));
        }
        Ok(Self {
            covariates: self.covariates.clone(),
            outcomes: self.outcomes.select(Axis(1), cols),
            feature_names: self.feature_names.clone(),
            outcome_names: self
                .outcome_names
                .as_ref()
                .map(|names| cols.iter().map(|&c| names[c].clone()).collect()),
        })
    }
}

/// Linear classification rule `sgn(x . beta - c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub beta: Array1<f64>,
    pub c: f64,
}

impl DecisionRule {
    pub fn new(beta: Array1<f64>, c: f64) -> Result<Self> {
        if !c.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput("decision rule entries must be finite".into()));
        }
        Ok(Self { beta, c })
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        if self.beta.len() != data.p() {
            return Err(Error::DimensionMismatch(format!(
                "rule has {} coefficients, data has {} covariates",
                self.beta.len(),
                data.p()
            )));
        }
        Ok(())
    }

    /// `x . beta - c` for every row.
    pub fn scores(&self, data: &Dataset) -> Result<Array1<f64>> {
        self.check(data)?;
        Ok(data.covariates().dot(&self.beta) - self.c)
    }

    pub fn predict(&self, data: &Dataset) -> Result<Array1<f64>> {
        Ok(self.scores(data)?.mapv(sgn))
    }

    /// Fraction of rows where the rule reproduces outcome `outcome`.
    pub fn accuracy(&self, data: &Dataset, outcome: usize) -> Result<f64> {
        if outcome >= data.n_outcomes() {
            return Err(Error::Contract(format!("outcome {outcome} does not exist")));
        }
        let scores = self.scores(data)?;
        accuracy_from_scores(
            scores.as_slice().expect("contiguous"),
            data.outcome(outcome).to_vec().as_slice(),
        )
    }

    /// Mean logistic loss of the target outcome under this rule.
    pub fn target_loss(&self, data: &Dataset) -> Result<f64> {
        let scores = self.scores(data)?;
        let y = data.target();
        Ok(scores
            .iter()
            .zip(y.iter())
            .map(|(s, y)| phi(y * s))
            .sum::<f64>()
            / data.n() as f64)
    }
}

/// Design `[X | -1]` used by every single-intercept logistic fit.
pub(crate) fn with_intercept_column(x: &Array2<f64>) -> Array2<f64> {
    let (n, p) = x.dim();
    let mut design = Array2::from_elem((n, p + 1), -1.0);
    design.slice_mut(ndarray::s![.., ..p]).assign(x);
    design
}
