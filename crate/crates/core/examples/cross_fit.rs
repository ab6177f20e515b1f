//! Cross-fitted estimate against the single-outcome baseline on one
//! simulated replicate.

use auxcal::estimators::{cross_fit_estimate, fit_single_outcome, EstimatorConfig};
use auxcal::simulation::{generate_scenario, Design, Scenario, ScenarioConfig};

fn main() -> auxcal::Result<()> {
    let config = ScenarioConfig::new(Scenario::One, Design::GaussianIdentity, 500, 100, 0.0)
        .with_n_test(5000)
        .with_seed(1);
    let data = generate_scenario(&config)?;
    let est = EstimatorConfig::default();

    let fit = cross_fit_estimate(&data.train, &est, 42)?;
    for (m, half) in fit.halves.iter().enumerate() {
        println!(
            "half {m}: |support| = {}, k* = {:?}, fallback = {}",
            half.pooled.support.len(),
            half.selected.as_ref().map(|s| s.k),
            half.fallback
        );
    }
    let baseline = fit_single_outcome(&data.train, &est)?;
    println!("proposed accuracy {:.4}", fit.rule.accuracy(&data.test, 0)?);
    println!("baseline accuracy {:.4}", baseline.rule.accuracy(&data.test, 0)?);
    Ok(())
}
