//! Decorrelated score tests on a signal coordinate and a null coordinate.

use auxcal::estimators::{cross_fit_estimate, EstimatorConfig};
use auxcal::inference::{decorrelated_test, half_rules};
use auxcal::simulation::{generate_scenario, Design, Scenario, ScenarioConfig};

fn main() -> auxcal::Result<()> {
    let p = 60;
    let config = ScenarioConfig::new(Scenario::One, Design::GaussianIdentity, 350, p, 0.0)
        .with_n_test(100)
        .with_seed(8);
    let data = generate_scenario(&config)?;
    let est = EstimatorConfig::default();
    let fit = cross_fit_estimate(&data.train, &est, 9)?;
    let halves = half_rules(&fit);
    for j in [p / 2 + 2, 10] {
        let report = decorrelated_test(&data.train, &halves, j, &est)?;
        println!(
            "coordinate {j:3}  beta = {:5.2}  T = {:8.5}  sigma^2 = {:.5}  p = {:.3e}",
            data.true_beta[j], report.statistic, report.sigma_hat_sq, report.p_value
        );
    }
    Ok(())
}
