//! Pooling a large dataset that only records the auxiliary outcome and
//! calibrating on a small dataset that records the target.

use auxcal::estimators::{cross_fit_estimate, two_dataset_estimate, EstimatorConfig};
use auxcal::simulation::{generate_scenario, Design, Scenario, ScenarioConfig};

fn main() -> auxcal::Result<()> {
    let base = ScenarioConfig::new(Scenario::One, Design::GaussianIdentity, 2000, 100, 0.0).with_n_test(5000);
    let big = generate_scenario(&base.with_seed(10))?;
    let small = generate_scenario(&ScenarioConfig { n: 200, ..base }.with_seed(20))?;
    let est = EstimatorConfig::default();

    let large = big.train.select_outcomes(&[1])?;
    let target_only = small.train.select_outcomes(&[0])?;
    let combined = two_dataset_estimate(&large, &target_only, &est, 5)?;
    let alone = cross_fit_estimate(&small.train, &est, 5)?;
    println!("two datasets  accuracy {:.4}", combined.rule.accuracy(&small.test, 0)?);
    println!("small only    accuracy {:.4}", alone.rule.accuracy(&small.test, 0)?);
    Ok(())
}
