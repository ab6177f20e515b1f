use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bayes_threshold, generate_scenario, Design, GeneratedData, Scenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimators::{
    cross_fit_estimate, fit_multitask_group_lasso, fit_pooled, fit_single_outcome,
    fit_transfer_direct, mix_seed, multitask_pooled_rule, DecisionRule, EstimatorConfig,
};
use crate::losses::{rank_correlation, RankMetric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Proposed,
    Baseline,
    TransferDirect,
    Multitask1,
    Multitask2,
    /// True coefficients with the Bayes threshold.
    Oracle,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Proposed,
        Method::Baseline,
        Method::TransferDirect,
        Method::Multitask1,
        Method::Multitask2,
        Method::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Baseline => "baseline",
            Method::TransferDirect => "transfer-direct",
            Method::Multitask1 => "multitask1",
            Method::Multitask2 => "multitask2",
            Method::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions {
    pub replicates: usize,
    /// Worker threads for the replicate loop.
    pub jobs: usize,
    pub estimator: EstimatorConfig,
    pub rank_metric: RankMetric,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            replicates: 50,
            jobs: 1,
            estimator: EstimatorConfig::default(),
            rank_metric: RankMetric::KendallTauB,
        }
    }
}

/// One fitted method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub scenario: Scenario,
    pub design: Design,
    pub n: usize,
    pub p: usize,
    pub alpha: f64,
    pub method: Method,
    pub replicate: usize,
    pub seed: u64,
    pub accuracy: Option<f64>,
    /// Empty when the fit failed or the fitted index is constant.
    pub rank_corr: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scenario: Scenario,
    pub design: Design,
    pub n: usize,
    pub alpha: f64,
    pub method: Method,
    pub replicates: usize,
    /// Statistics over the replicates that produced a value; `None` when
    /// none did.
    pub mean_accuracy: Option<f64>,
    pub se_accuracy: Option<f64>,
    pub mean_rank_corr: Option<f64>,
    pub se_rank_corr: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub records: Vec<ReplicateRecord>,
    pub summary: Vec<CellSummary>,
}

fn mean_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let k = values.len();
    if k == 0 {
        return (None, None);
    }
    let m = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (Some(m), Some(0.0));
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (k - 1) as f64;
    (Some(m), Some((var / k as f64).sqrt()))
}

impl ResultTable {
    /// Summary row for one cell, if present.
    pub fn cell(&self, config: &ScenarioConfig, method: Method) -> Option<&CellSummary> {
        self.summary.iter().find(|c| {
            c.scenario == config.scenario
                && c.design == config.design
                && c.n == config.n
                && c.alpha == config.alpha
                && c.method == method
        })
    }

    /// One CSV row per replicate record.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    /// Pretty JSON array of cell summaries.
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }
}

/// Fits `method` on the training draw. `seed` feeds the fold assignment and
/// the sample split and depends only on the replicate.
pub fn fit_method(
    method: Method,
    data: &GeneratedData,
    config: &ScenarioConfig,
    estimator: &EstimatorConfig,
    seed: u64,
) -> Result<DecisionRule> {
    let est = EstimatorConfig {
        fold_seed: mix_seed(seed, 11),
        ..*estimator
    };
    let train = &data.train;
    match method {
        Method::Proposed => Ok(cross_fit_estimate(train, &est, mix_seed(seed, 12))?.rule),
        Method::Baseline => Ok(fit_single_outcome(train, &est)?.rule),
        Method::TransferDirect => Ok(fit_transfer_direct(train, &est)?.rule),
        Method::Multitask1 => Ok(fit_multitask_group_lasso(train, &est)?.rule),
        Method::Multitask2 => {
            let outcomes: Vec<usize> = (0..train.n_outcomes()).collect();
            multitask_pooled_rule(&fit_pooled(train, &outcomes, &est)?)
        }
        Method::Oracle => DecisionRule::new(data.true_beta.clone(), bayes_threshold(config)),
    }
}

fn run_replicate(
    config: &ScenarioConfig,
    methods: &[Method],
    replicate: usize,
    options: &ExperimentOptions,
) -> Vec<ReplicateRecord> {
    let seed = config.seed.wrapping_add(replicate as u64);
    let record = |method: Method, outcome: Result<(f64, Option<f64>)>| {
        let (accuracy, rank_corr, error) = match outcome {
            Ok((a, r)) => (Some(a), r, None),
            Err(e) => (None, None, Some(e.to_string())),
        };
        ReplicateRecord {
            scenario: config.scenario,
            design: config.design,
            n: config.n,
            p: config.p,
            alpha: config.alpha,
            method,
            replicate,
            seed,
            accuracy,
            rank_corr,
            error,
        }
    };
    let data = match generate_scenario(&config.with_seed(seed)) {
        Ok(d) => d,
        Err(e) => {
            let msg = e.to_string();
            return methods
                .iter()
                .map(|&m| record(m, Err(Error::InvalidInput(msg.clone()))))
                .collect();
        }
    };
    methods
        .iter()
        .map(|&m| {
            let outcome = fit_method(m, &data, config, &options.estimator, seed).and_then(|rule| {
                let acc = rule.accuracy(&data.test, 0)?;
                let fitted = data.test.covariates().dot(&rule.beta);
                let rc = rank_correlation(
                    data.true_index_values.as_slice().expect("contiguous"),
                    fitted.as_slice().expect("contiguous"),
                    options.rank_metric,
                )
                .ok();
                Ok((acc, rc))
            });
            record(m, outcome)
        })
        .collect()
}

/// Runs every `(config, replicate)` pair on a pool of `options.jobs`
/// threads. Replicate `r` of a config draws its data from `config.seed + r`,
/// so results do not depend on the thread count or the method order.
pub fn run_experiment_grid(
    configs: &[ScenarioConfig],
    methods: &[Method],
    options: &ExperimentOptions,
) -> Result<ResultTable> {
    if options.replicates == 0 {
        return Err(Error::Contract("replicates must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::Contract("no methods requested".into()));
    }
    let tasks: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..options.replicates).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.max(1))
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    let per_task: Vec<Vec<ReplicateRecord>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, r)| run_replicate(&configs[c], methods, r, options))
            .collect()
    });
    let records: Vec<ReplicateRecord> = per_task.into_iter().flatten().collect();

    let mut summary = Vec::new();
    for config in configs {
        for &method in methods {
            let cell: Vec<&ReplicateRecord> = records
                .iter()
                .filter(|r| {
                    r.method == method
                        && r.scenario == config.scenario
                        && r.design == config.design
                        && r.n == config.n
                        && r.p == config.p
                        && r.alpha == config.alpha
                })
                .collect();
            let acc: Vec<f64> = cell.iter().filter_map(|r| r.accuracy).collect();
            let rc: Vec<f64> = cell.iter().filter_map(|r| r.rank_corr).collect();
            let (mean_accuracy, se_accuracy) = mean_se(&acc);
            let (mean_rank_corr, se_rank_corr) = mean_se(&rc);
            summary.push(CellSummary {
                scenario: config.scenario,
                design: config.design,
                n: config.n,
                alpha: config.alpha,
                method,
                replicates: cell.len(),
                mean_accuracy,
                se_accuracy,
                mean_rank_corr,
                se_rank_corr,
                failures: cell.iter().filter(|r| r.error.is_some()).count(),
            });
        }
    }
    Ok(ResultTable { records, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()), Some(m));
        }
        assert_eq!(Method::parse("lasso"), None);
    }

    #[test]
    fn mean_se_small_cases() {
        assert_eq!(mean_se(&[2.0]), (Some(2.0), Some(0.0)));
        let (m, se) = mean_se(&[1.0, 3.0]);
        assert_eq!(m, Some(2.0));
        assert!((se.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mean_se(&[]), (None, None));
    }
}
