//! L1-penalized logistic regression: a regularization path and a
//! cross-validated fit on a small synthetic problem.

use auxcal::estimators::stratified_folds;
use auxcal::optimizer::{
    fit_cross_validated, lambda_grid, lambda_max, regularization_path, CvConfig, LossKind,
    PenalizedProblem, SolverConfig,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> auxcal::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n, d) = (300, 8);
    let x = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let truth = Array1::from(vec![1.5, -1.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0]);
    let y = x.dot(&truth).mapv(|s| {
        let p = 1.0 / (1.0 + (-s).exp());
        if rng.gen::<f64>() < p { 1.0 } else { -1.0 }
    });

    let problem = PenalizedProblem::new(x, y.clone(), LossKind::Logistic)?;
    let config = SolverConfig::default();
    let lmax = lambda_max(&problem, &config)?;
    let grid = lambda_grid(lmax, 10, 1e-2);
    println!("lambda_max = {lmax:.4}");
    for (lambda, sol) in grid.iter().zip(regularization_path(&problem, &grid, &config)?) {
        let nnz = sol.coefficients.iter().filter(|c| **c != 0.0).count();
        println!("lambda {lambda:.4}  nonzeros {nnz}  objective {:.5}", sol.objective_value);
    }

    let folds = stratified_folds(&y.to_vec(), 5, 7);
    let (sol, cv) = fit_cross_validated(&problem, &folds, 5, &CvConfig::default(), &config)?;
    println!("cv lambda = {:.4}", cv.best_lambda());
    println!("coefficients = {:.3}", sol.coefficients);
    println!("kkt residual = {:.2e}, converged = {}", sol.kkt_residual, sol.converged);
    Ok(())
}
