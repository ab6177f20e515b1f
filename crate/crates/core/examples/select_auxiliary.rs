//! Choosing among auxiliary outcomes by held-out F1 score: a copy of the
//! target, its negation and an unrelated coin flip.

use auxcal::estimators::{select_auxiliary_by_f1, Dataset, EstimatorConfig, F1Scoring};
use auxcal::simulation::{generate_scenario, Design, Scenario, ScenarioConfig};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> auxcal::Result<()> {
    let config = ScenarioConfig::new(Scenario::One, Design::GaussianIdentity, 300, 30, 0.0)
        .with_n_test(10)
        .with_seed(2);
    let draw = generate_scenario(&config)?;
    let y0 = draw.train.target().to_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let coin = Array1::from_shape_fn(y0.len(), |_| if rng.gen::<bool>() { 1.0 } else { -1.0 });
    let data = Dataset::from_outcomes(
        draw.train.covariates().clone(),
        &[y0.clone(), coin, -&y0, y0.clone()],
    )?;
    let sel = select_auxiliary_by_f1(&data, &EstimatorConfig::default(), 3, F1Scoring::AgainstTarget)?;
    println!("target F1 {:.3}", sel.target_f1);
    for (j, f1) in &sel.auxiliary_f1 {
        println!("outcome {j}  F1 {f1:.3}");
    }
    println!("selected {:?}", sel.selected);
    Ok(())
}
