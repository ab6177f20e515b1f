//! A small simulation grid run on two threads, printed as CSV and as the
//! per-cell JSON summary.

use auxcal::simulation::{
    run_experiment_grid, Design, ExperimentOptions, Method, Scenario, ScenarioConfig,
};

fn main() -> auxcal::Result<()> {
    let configs: Vec<ScenarioConfig> = [0.0, 1.0]
        .iter()
        .map(|&alpha| {
            ScenarioConfig::new(Scenario::One, Design::GaussianIdentity, 200, 40, alpha)
                .with_n_test(2000)
                .with_seed(100)
        })
        .collect();
    let options = ExperimentOptions {
        replicates: 3,
        jobs: 2,
        ..ExperimentOptions::default()
    };
    let table = run_experiment_grid(&configs, &[Method::Proposed, Method::Baseline, Method::Oracle], &options)?;
    table.write_csv(std::io::stdout())?;
    println!("{}", table.summary_json()?);
    Ok(())
}
