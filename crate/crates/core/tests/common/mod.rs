//! Test-only oracles that are independent of the library's solver.
#![allow(dead_code)]

use ndarray::{Array1, Array2};

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn log1pexp_neg(u: f64) -> f64 {
    if u > 0.0 {
        (-u).exp().ln_1p()
    } else {
        -u + u.exp().ln_1p()
    }
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Mean logistic loss of `y * (X beta)`.
pub fn logistic_loss(x: &Array2<f64>, y: &Array1<f64>, beta: &[f64]) -> f64 {
    let n = x.nrows();
    (0..n)
        .map(|i| {
            let eta: f64 = (0..beta.len()).map(|j| x[(i, j)] * beta[j]).sum();
            log1pexp_neg(y[i] * eta)
        })
        .sum::<f64>()
        / n as f64
}

/// Population standard deviation of a column.
pub fn column_sd(x: &Array2<f64>, j: usize) -> f64 {
    let n = x.nrows() as f64;
    let m = x.column(j).sum() / n;
    (x.column(j).iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Newton's method for `mean logistic loss + linear . beta` restricted to
/// the coordinates in `free` (others fixed at zero).
pub fn newton_logistic(
    x: &Array2<f64>,
    y: &Array1<f64>,
    free: &[usize],
    linear: &[f64],
) -> Option<Vec<f64>> {
    let n = x.nrows();
    let d = x.ncols();
    let m = free.len();
    let mut beta = vec![0.0; d];
    if m == 0 {
        return Some(beta);
    }
    let objective = |b: &[f64]| {
        logistic_loss(x, y, b) + free.iter().map(|&j| linear[j] * b[j]).sum::<f64>()
    };
    for _ in 0..200 {
        let mut g = vec![0.0; m];
        let mut h = vec![vec![0.0; m]; m];
        for i in 0..n {
            let eta: f64 = (0..d).map(|j| x[(i, j)] * beta[j]).sum();
            let p = sigmoid(y[i] * eta);
            let gi = -y[i] * (1.0 - p);
            let hi = p * (1.0 - p);
            for (a, &ja) in free.iter().enumerate() {
                g[a] += gi * x[(i, ja)] / n as f64;
                for (b, &jb) in free.iter().enumerate() {
                    h[a][b] += hi * x[(i, ja)] * x[(i, jb)] / n as f64;
                }
            }
        }
        for (a, &ja) in free.iter().enumerate() {
            g[a] += linear[ja];
        }
        let gnorm = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if gnorm < 1e-13 {
            return Some(beta);
        }
        let step = solve_linear(h, g.clone());
        if step.iter().any(|s| !s.is_finite()) {
            return None;
        }
        let f0 = objective(&beta);
        let mut t = 1.0;
        loop {
            let mut cand = beta.clone();
            for (a, &ja) in free.iter().enumerate() {
                cand[ja] -= t * step[a];
            }
            if objective(&cand) <= f0 + 1e-16 || t < 1e-12 {
                beta = cand;
                break;
            }
            t *= 0.5;
        }
        if beta.iter().any(|b| b.abs() > 1e6) {
            return None;
        }
    }
    Some(beta)
}

/// Exact L1-penalized logistic minimizer by enumerating sign patterns of
/// the penalized coordinates. Penalty is `lambda * sum_j scale_j |beta_j|`
/// over `penalized`.
pub fn enumeration_oracle(
    x: &Array2<f64>,
    y: &Array1<f64>,
    penalized: &[bool],
    scale: &[f64],
    lambda: f64,
) -> Vec<f64> {
    let d = x.ncols();
    let pen: Vec<usize> = (0..d).filter(|&j| penalized[j]).collect();
    let total = 3usize.pow(pen.len() as u32);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for code in 0..total {
        let mut signs = vec![0i32; d];
        let mut c = code;
        for &j in &pen {
            signs[j] = (c % 3) as i32 - 1;
            c /= 3;
        }
        let free: Vec<usize> = (0..d).filter(|&j| !penalized[j] || signs[j] != 0).collect();
        let linear: Vec<f64> = (0..d)
            .map(|j| if penalized[j] { lambda * scale[j] * signs[j] as f64 } else { 0.0 })
            .collect();
        let Some(beta) = newton_logistic(x, y, &free, &linear) else {
            continue;
        };
        if pen.iter().any(|&j| signs[j] != 0 && beta[j] * signs[j] as f64 <= 0.0) {
            continue;
        }
        let obj = logistic_loss(x, y, &beta)
            + pen.iter().map(|&j| lambda * scale[j] * beta[j].abs()).sum::<f64>();
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, beta));
        }
    }
    best.expect("at least one consistent sign pattern").1
}

/// Dense grid search over a 2-D box with two refinements (step 1e-2, then
/// 1e-3, then 1e-5) for `mean logistic loss + lambda * sum scale_j |beta_j|`.
pub fn grid_oracle_2d(x: &Array2<f64>, y: &Array1<f64>, scale: &[f64], lambda: f64) -> [f64; 2] {
    let obj = |b0: f64, b1: f64| {
        logistic_loss(x, y, &[b0, b1]) + lambda * (scale[0] * b0.abs() + scale[1] * b1.abs())
    };
    let mut center: [f64; 2] = [0.0, 0.0];
    for (half_width, step) in [(3.0f64, 1e-2f64), (0.03, 1e-3), (0.003, 1e-5)] {
        let k = (half_width / step) as i64;
        let mut best = (f64::INFINITY, center);
        for a in -k..=k {
            let b0 = ((center[0] / step).round() + a as f64) * step;
            for b in -k..=k {
                let b1 = ((center[1] / step).round() + b as f64) * step;
                let v = obj(b0, b1);
                if v < best.0 {
                    best = (v, [b0, b1]);
                }
            }
        }
        center = best.1;
    }
    center
}

/// Covariates `N(0, 1)` and a target drawn from a logistic model with
/// coefficients `beta` and threshold 0.
pub fn logistic_draw(n: usize, beta: &[f64], seed: u64) -> (Array2<f64>, Array1<f64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let p = beta.len();
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let y = Array1::from_shape_fn(n, |i| {
        let eta: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
        if rng.gen::<f64>() < sigmoid(eta) { 1.0 } else { -1.0 }
    });
    (x, y)
}

/// Fair ±1 coin flips.
pub fn coin_flips(n: usize, seed: u64) -> Array1<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_fn(n, |_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
}
