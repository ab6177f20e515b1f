//! Command-line interface: CSV ingestion, JSON fit artifacts, and the
//! `fit`, `fit-two`, `infer`, `select-aux` and `simulate` subcommands.

mod artifact;
mod data;

pub use artifact::{HalfRecord, ModelArtifact, SCHEMA_VERSION};
pub use data::{dataset_from_table, load_dataset, read_table, LoadOptions, Table};

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::estimators::{
    cross_fit_estimate, fit_multitask_group_lasso, fit_pooled, fit_single_outcome,
    fit_transfer_direct, mix_seed, multitask_pooled_rule, select_auxiliary_by_f1,
    two_dataset_estimate, CrossFitEstimate, Dataset, DecisionRule, EstimatorConfig, F1Scoring,
};
use crate::inference::{decorrelated_test_with, HalfRule, ScoreEvaluation};
use crate::losses::RankMetric;
use crate::simulation::{run_experiment_grid, Design, ExperimentOptions, Method, Scenario, ScenarioConfig};

/// Process exit codes.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    /// Unknown flag or malformed command line.
    pub const USAGE: i32 = 2;
    pub const MISSING_ARGUMENT: i32 = 3;
    /// Unreadable input or unwritable output.
    pub const IO: i32 = 4;
    /// Input data failed validation.
    pub const INVALID_DATA: i32 = 5;
    /// A request the chosen operation cannot serve.
    pub const CONTRACT: i32 = 6;
    pub const NUMERICAL: i32 = 7;
}

/// Exit code for a library error.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => exit_code::IO,
        Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => exit_code::IO,
        Error::Contract(_) => exit_code::CONTRACT,
        Error::NonFinite | Error::SaturatedRule | Error::UndefinedCorrelation(_) => exit_code::NUMERICAL,
        Error::DimensionMismatch(_)
        | Error::InvalidInput(_)
        | Error::DegenerateOutcome { .. }
        | Error::Data { .. }
        | Error::Csv(_)
        | Error::Json(_) => exit_code::INVALID_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "auxcal", version, about = "Classification rules for a target outcome learned with auxiliary outcomes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a rule for the target outcome and write a JSON artifact.
    Fit(FitArgs),
    /// Pool a large auxiliary-only dataset, calibrate on a small target dataset.
    FitTwo(FitTwoArgs),
    /// Decorrelated score tests for coefficients of a `proposed` fit.
    Infer(InferArgs),
    /// Pick the auxiliary outcome whose rule best predicts the target by F1.
    SelectAux(SelectAuxArgs),
    /// Run a simulation grid and write per-replicate CSV plus a JSON summary.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FitMethod {
    Proposed,
    Baseline,
    TransferDirect,
    Multitask1,
    Multitask2,
}

impl FitMethod {
    fn name(self) -> &'static str {
        match self {
            FitMethod::Proposed => "proposed",
            FitMethod::Baseline => "baseline",
            FitMethod::TransferDirect => "transfer-direct",
            FitMethod::Multitask1 => "multitask1",
            FitMethod::Multitask2 => "multitask2",
        }
    }
}

#[derive(Debug, Args)]
struct CommonFit {
    /// Number of cross-validation folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output artifact path.
    #[arg(long)]
    out: PathBuf,
    /// Read outcomes coded 0/1 and map them to -1/+1.
    #[arg(long)]
    remap_binary: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Target outcome column.
    #[arg(long)]
    target: String,
    /// Auxiliary outcome column (repeatable).
    #[arg(long)]
    aux: Vec<String>,
    #[arg(long, value_enum, default_value_t = FitMethod::Proposed)]
    method: FitMethod,
    #[command(flatten)]
    common: CommonFit,
}

#[derive(Debug, Args)]
struct FitTwoArgs {
    /// Dataset holding the target outcome.
    #[arg(long)]
    small: PathBuf,
    /// Dataset holding the auxiliary outcomes.
    #[arg(long)]
    large: PathBuf,
    #[arg(long)]
    target: String,
    /// Auxiliary outcome column of the large dataset (repeatable).
    #[arg(long, required = true)]
    aux: Vec<String>,
    #[arg(long, value_enum, default_value_t = FitMethod::Proposed)]
    method: FitMethod,
    #[command(flatten)]
    common: CommonFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Evaluation {
    NullRestricted,
    Fitted,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    data: PathBuf,
    /// Artifact written by `fit --method proposed`.
    #[arg(long)]
    model: PathBuf,
    /// Covariate name or 0-based index (repeatable).
    #[arg(long, required = true)]
    coordinate: Vec<String>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rule at which the score is evaluated.
    #[arg(long, value_enum, default_value_t = Evaluation::NullRestricted)]
    evaluate: Evaluation,
    #[arg(long)]
    remap_binary: bool,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelectAuxArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    /// Candidate auxiliary columns (repeatable or comma-separated).
    #[arg(long, required = true, value_delimiter = ',')]
    candidates: Vec<String>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score each rule against its own outcome instead of the target.
    #[arg(long)]
    f1_own_outcome: bool,
    #[arg(long)]
    remap_binary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RankArg {
    Kendall,
    Spearman,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    scenario: u8,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    design: u8,
    /// Training sizes (comma-separated).
    #[arg(long, required = true, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    p: usize,
    /// Values of alpha (comma-separated).
    #[arg(long, required = true, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    replicates: usize,
    /// Methods (comma-separated): proposed, baseline, transfer-direct,
    /// multitask1, multitask2, oracle.
    #[arg(long, required = true, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = 10_000)]
    n_test: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, value_enum, default_value_t = RankArg::Kendall)]
    rank_metric: RankArg,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

/// Parses `args` (program name first), runs the subcommand, and returns the
/// process exit code. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    return exit_code::SUCCESS;
                }
                ErrorKind::MissingRequiredArgument | ErrorKind::MissingSubcommand => {
                    exit_code::MISSING_ARGUMENT
                }
                _ => exit_code::USAGE,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    let result = match cli.command {
        Command::Fit(a) => fit(&a),
        Command::FitTwo(a) => fit_two(&a),
        Command::Infer(a) => infer(&a, out),
        Command::SelectAux(a) => select_aux(&a, out),
        Command::Simulate(a) => simulate(&a),
    };
    match result {
        Ok(()) => exit_code::SUCCESS,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code_for(&e)
        }
    }
}

fn estimator_config(folds: usize, seed: u64) -> Result<EstimatorConfig> {
    if folds < 2 {
        return Err(Error::InvalidInput("--folds must be at least 2".into()));
    }
    Ok(EstimatorConfig {
        cv_folds: folds,
        fold_seed: mix_seed(seed, 11),
        ..EstimatorConfig::default()
    })
}

fn split_seed(seed: u64) -> u64 {
    mix_seed(seed, 12)
}

fn base_metadata(data: &Dataset, folds: usize, seed: u64) -> Vec<(&'static str, Value)> {
    vec![
        ("feature_names", json!(data.feature_names())),
        ("outcome_names", json!(data.outcome_names())),
        ("folds", json!(folds)),
        ("seed", json!(seed)),
        ("n", json!(data.n())),
    ]
}

fn cross_fit_metadata(est: &CrossFitEstimate) -> Vec<(&'static str, Value)> {
    let halves: Vec<HalfRecord> = est
        .halves
        .iter()
        .map(|h| HalfRecord {
            train_rows: h.train_rows.clone(),
            beta: h.rule.beta.to_vec(),
            c: h.rule.c,
            k_star: h.selected.as_ref().map(|s| s.k),
            pooled_lambda: h.pooled.lambda_chosen,
            calibration_lambda: h.calibration_lambda,
            fallback: h.fallback,
        })
        .collect();
    vec![
        ("halves", json!(halves)),
        ("warnings", json!(est.warnings)),
    ]
}

fn write_artifact(method: &str, rule: &DecisionRule, meta: Vec<(&'static str, Value)>, path: &Path) -> Result<()> {
    let mut artifact = ModelArtifact::new(method, rule);
    for (k, v) in meta {
        artifact.metadata.insert(k.to_owned(), v);
    }
    artifact.write(path)
}

fn fit(a: &FitArgs) -> Result<()> {
    let c = &a.common;
    let options = LoadOptions {
        remap_binary: c.remap_binary,
    };
    let data = load_dataset(&a.data, &a.target, &a.aux, options)?;
    let config = estimator_config(c.folds, c.seed)?;
    let mut meta = base_metadata(&data, c.folds, c.seed);
    let rule = match a.method {
        FitMethod::Proposed => {
            let est = cross_fit_estimate(&data, &config, split_seed(c.seed))?;
            meta.extend(cross_fit_metadata(&est));
            est.rule
        }
        FitMethod::Baseline => {
            let f = fit_single_outcome(&data, &config)?;
            meta.push(("lambda", json!(f.lambda)));
            f.rule
        }
        FitMethod::TransferDirect => {
            let f = fit_transfer_direct(&data, &config)?;
            meta.push(("pooled_lambda", json!(f.pooled.lambda_chosen)));
            meta.push(("lambda", json!(f.lambda)));
            meta.push(("warnings", json!(f.pooled.warnings)));
            f.rule
        }
        FitMethod::Multitask1 => {
            let f = fit_multitask_group_lasso(&data, &config)?;
            meta.push(("lambda", json!(f.lambda)));
            meta.push(("outcomes_used", json!(f.outcomes_used)));
            f.rule
        }
        FitMethod::Multitask2 => {
            let outcomes: Vec<usize> = (0..data.n_outcomes()).collect();
            let pooled = fit_pooled(&data, &outcomes, &config)?;
            meta.push(("lambda", json!(pooled.lambda_chosen)));
            meta.push(("warnings", json!(pooled.warnings)));
            multitask_pooled_rule(&pooled)?
        }
    };
    write_artifact(a.method.name(), &rule, meta, &c.out)
}

fn fit_two(a: &FitTwoArgs) -> Result<()> {
    if a.method != FitMethod::Proposed {
        return Err(Error::Contract(format!(
            "fit-two supports only --method proposed, got `{}`",
            a.method.name()
        )));
    }
    let c = &a.common;
    let options = LoadOptions {
        remap_binary: c.remap_binary,
    };
    let small = load_dataset(&a.small, &a.target, &[], options)?;
    let large_table = read_table(&a.large)?;
    let large = dataset_from_table(&large_table, &a.aux, options)?;
    if small.feature_names() != large.feature_names() {
        return Err(Error::InvalidInput(
            "covariate columns of --small and --large differ".into(),
        ));
    }
    let config = estimator_config(c.folds, c.seed)?;
    let est = two_dataset_estimate(&large, &small, &config, split_seed(c.seed))?;
    let mut meta = base_metadata(&small, c.folds, c.seed);
    meta.push(("auxiliary_names", json!(a.aux)));
    meta.push(("large_n", json!(large.n())));
    meta.extend(cross_fit_metadata(&est));
    write_artifact("proposed-two-dataset", &est.rule, meta, &c.out)
}

fn resolve_coordinate(spec: &str, names: Option<&[String]>, p: usize) -> Result<usize> {
    if let Some(j) = names.and_then(|n| n.iter().position(|x| x == spec)) {
        return Ok(j);
    }
    match spec.parse::<usize>() {
        Ok(j) if j < p => Ok(j),
        _ => Err(Error::InvalidInput(format!("unknown coordinate `{spec}`"))),
    }
}

fn infer(a: &InferArgs, out: &mut dyn Write) -> Result<()> {
    let artifact = ModelArtifact::read(&a.model)?;
    let halves = artifact.halves()?;
    let outcome_names = artifact
        .names("outcome_names")
        .ok_or_else(|| Error::Contract("artifact does not record the outcome columns".into()))?;
    let data = load_dataset(
        &a.data,
        &outcome_names[0],
        &outcome_names[1..],
        LoadOptions {
            remap_binary: a.remap_binary,
        },
    )?;
    if let Some(features) = artifact.names("feature_names") {
        if data.feature_names() != Some(features.as_slice()) {
            return Err(Error::Contract(
                "covariate columns differ from those the model was fitted on".into(),
            ));
        }
    }
    let half_rules = halves
        .iter()
        .map(|h| -> Result<HalfRule> {
            Ok(HalfRule {
                rows: h.train_rows.clone(),
                rule: DecisionRule::new(h.beta.clone().into(), h.c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let half_rules: [HalfRule; 2] = half_rules.try_into().expect("two halves");
    let config = estimator_config(a.folds, a.seed)?;
    let evaluation = match a.evaluate {
        Evaluation::NullRestricted => ScoreEvaluation::NullRestricted,
        Evaluation::Fitted => ScoreEvaluation::Fitted,
    };
    let mut reports = Vec::new();
    for spec in &a.coordinate {
        let j = resolve_coordinate(spec, data.feature_names(), data.p())?;
        let r = decorrelated_test_with(&data, &half_rules, j, &config, evaluation)?;
        reports.push(json!({
            "coordinate": j,
            "name": data.feature_names().map(|n| n[j].clone()),
            "T": r.statistic,
            "sigma_hat_sq": r.sigma_hat_sq,
            "p_value": r.p_value,
            "n_used": r.n_used,
            "w_support": r.w_support,
        }));
    }
    let mut text = serde_json::to_string_pretty(&json!({ "tests": reports }))?;
    text.push('\n');
    match &a.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn select_aux(a: &SelectAuxArgs, out: &mut dyn Write) -> Result<()> {
    let data = load_dataset(
        &a.data,
        &a.target,
        &a.candidates,
        LoadOptions {
            remap_binary: a.remap_binary,
        },
    )?;
    let config = estimator_config(a.folds, a.seed)?;
    let scoring = if a.f1_own_outcome {
        F1Scoring::OwnOutcome
    } else {
        F1Scoring::AgainstTarget
    };
    let sel = select_auxiliary_by_f1(&data, &config, split_seed(a.seed), scoring)?;
    let line = match sel.selected {
        Some(j) => a.candidates[j - 1].clone(),
        None => "none".to_owned(),
    };
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let methods: Vec<Method> = a
        .methods
        .iter()
        .map(|m| Method::parse(m).ok_or_else(|| Error::InvalidInput(format!("unknown method `{m}`"))))
        .collect::<Result<_>>()?;
    let scenario = if a.scenario == 1 { Scenario::One } else { Scenario::Two };
    let design = if a.design == 1 {
        Design::GaussianIdentity
    } else {
        Design::CorrelatedMixed
    };
    let mut configs = Vec::new();
    for &n in &a.n {
        for &alpha in &a.alpha {
            configs.push(
                ScenarioConfig::new(scenario, design, n, a.p, alpha)
                    .with_n_test(a.n_test)
                    .with_seed(a.seed),
            );
        }
    }
    let options = ExperimentOptions {
        replicates: a.replicates,
        jobs: a.jobs,
        estimator: EstimatorConfig {
            cv_folds: a.folds,
            ..EstimatorConfig::default()
        },
        rank_metric: match a.rank_metric {
            RankArg::Kendall => RankMetric::KendallTauB,
            RankArg::Spearman => RankMetric::Spearman,
        },
    };
    let table = run_experiment_grid(&configs, &methods, &options)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let csv_path = a.out_dir.join("results.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    table.write_csv(std::io::BufWriter::new(file))?;
    let json_path = a.out_dir.join("summary.json");
    let mut summary = table.summary_json()?;
    summary.push('\n');
    std::fs::write(&json_path, summary).map_err(|e| Error::io(&json_path, e))
}
