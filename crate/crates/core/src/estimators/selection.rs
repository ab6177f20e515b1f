use super::baseline::fit_outcome;
use super::folds::split_halves;
use super::{mix_seed, Dataset, EstimatorConfig};
use crate::error::{Error, Result};
use crate::losses::f1_score;

/// Labels each outcome's rule is scored against on the held-out half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum F1Scoring {
    /// Every rule is scored against the target labels.
    #[default]
    AgainstTarget,
    /// Every rule is scored against the outcome it was trained on.
    OwnOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliarySelection {
    /// Chosen auxiliary outcome column, or `None` when the target's own
    /// rule scores higher than every auxiliary rule.
    pub selected: Option<usize>,
    pub target_f1: f64,
    /// `(outcome column, F1)` for every auxiliary that could be fitted.
    pub auxiliary_f1: Vec<(usize, f64)>,
    pub warnings: Vec<String>,
}

/// Fits one L1 logistic rule per outcome on a random half and scores the
/// rules by F1 on the other half. Ties between auxiliaries go to the
/// smallest index; an auxiliary tying the target is kept.
pub fn select_auxiliary_by_f1(
    data: &Dataset,
    config: &EstimatorConfig,
    split_seed: u64,
    scoring: F1Scoring,
) -> Result<AuxiliarySelection> {
    if data.n_auxiliary() == 0 {
        return Err(Error::Contract("auxiliary selection needs at least one auxiliary outcome".into()));
    }
    let (first, second) = split_halves(data.n(), split_seed);
    let train = data.select_rows(&first);
    let test = data.select_rows(&second);
    let config = config.with_fold_seed(mix_seed(split_seed, 7));

    let score = |j: usize| -> Result<f64> {
        let rule = fit_outcome(&train, j, &config)?.rule;
        let pred = rule.predict(&test)?;
        let labels = match scoring {
            F1Scoring::AgainstTarget => test.target().to_vec(),
            F1Scoring::OwnOutcome => test.outcome(j).to_vec(),
        };
        f1_score(pred.as_slice().expect("contiguous"), &labels)
    };

    if train.is_degenerate(0) {
        return Err(Error::DegenerateOutcome { outcome: 0 });
    }
    let target_f1 = score(0)?;
    let mut warnings = Vec::new();
    let mut auxiliary_f1 = Vec::new();
    for j in 1..data.n_outcomes() {
        if train.is_degenerate(j) {
            warnings.push(format!("outcome {j} is degenerate on the training half and was skipped"));
            continue;
        }
        auxiliary_f1.push((j, score(j)?));
    }
    let best = auxiliary_f1
        .iter()
        .copied()
        .fold(None::<(usize, f64)>, |acc, (j, f)| match acc {
            Some((_, bf)) if bf >= f => acc,
            _ => Some((j, f)),
        });
    let selected = match best {
        Some((j, f)) if f >= target_f1 => Some(j),
        _ => None,
    };
    Ok(AuxiliarySelection {
        selected,
        target_f1,
        auxiliary_f1,
        warnings,
    })
}
