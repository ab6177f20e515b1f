//! Pooled fit over the target and an auxiliary outcome, then calibration of
//! the pooled direction on every candidate domain and selection of k* on a
//! held-out half.

use auxcal::estimators::{
    fit_calibrated_k, fit_pooled, select_k_star, split_halves, EstimatorConfig,
};
use auxcal::simulation::{generate_scenario, Design, Scenario, ScenarioConfig};

fn main() -> auxcal::Result<()> {
    let config = ScenarioConfig::new(Scenario::One, Design::GaussianIdentity, 400, 40, 0.5)
        .with_n_test(2000)
        .with_seed(3);
    let data = generate_scenario(&config)?;
    let est = EstimatorConfig::default();

    let (first, second) = split_halves(data.train.n(), 11);
    let train = data.train.select_rows(&first);
    let validation = data.train.select_rows(&second);

    let pooled = fit_pooled(&train, &[0, 1], &est)?;
    println!("pooled support {:?} at lambda {:.4}", pooled.support, pooled.lambda_chosen);

    let mut candidates = Vec::new();
    for &k in pooled.support.iter().take(5) {
        let (fit, _) = fit_calibrated_k(&train, &pooled, k, &est)?;
        println!("k = {k:3}  gamma = {:.3}  c = {:.3}  lambda = {:.4}", fit.gamma, fit.c, fit.lambda);
        candidates.push(fit);
    }
    let best = select_k_star(&candidates, &validation)?;
    println!("k* = {} with validation loss {:.4}", best.k, best.validation_loss.unwrap_or(f64::NAN));
    println!("test accuracy {:.4}", best.rule().accuracy(&data.test, 0)?);
    Ok(())
}
