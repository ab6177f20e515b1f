//! The comparator methods on one replicate with a drifted auxiliary outcome.

use auxcal::simulation::{fit_method, generate_scenario, Design, Method, Scenario, ScenarioConfig};
use auxcal::estimators::EstimatorConfig;

fn main() -> auxcal::Result<()> {
    let config = ScenarioConfig::new(Scenario::One, Design::GaussianIdentity, 400, 60, 1.0)
        .with_n_test(5000)
        .with_seed(4);
    let data = generate_scenario(&config)?;
    let est = EstimatorConfig::default();
    for method in Method::ALL {
        let rule = fit_method(method, &data, &config, &est, 4)?;
        println!("{:16} accuracy {:.4}", method.name(), rule.accuracy(&data.test, 0)?);
    }
    Ok(())
}
