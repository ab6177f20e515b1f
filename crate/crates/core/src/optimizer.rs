//! Proximal-gradient solver for penalized smooth convex risks.
//!
//! Every estimator in the crate reduces to a [`PenalizedProblem`]: a design
//! matrix, a response, a smooth loss (logistic or weighted squared error)
//! and either a masked L1 penalty or a group-L2 penalty. Penalized columns
//! are scaled to unit standard deviation internally when `standardize` is
//! set, so the penalty acts on standardized coefficients; coefficients are
//! always reported on the original scale.
//!
//! The solver is an accelerated proximal gradient method with backtracking
//! and function-value restarts (so the objective never increases), run on a
//! working set of coordinates that is grown until the full KKT conditions
//! hold.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::losses::{phi, phi_prime};

/// Smooth part of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `mean_i w_i * log(1 + exp(-y_i * eta_i))` with `y_i` in {-1, +1}.
    Logistic,
    /// `mean_i w_i * (y_i - eta_i)^2`.
    WeightedSquared,
}

/// Penalty configuration. The two forms are mutually exclusive.
#[derive(Debug, Clone, PartialEq)]
pub enum Penalty {
    /// `lambda * sum_{j: mask[j]} |theta_j|`; unmasked coordinates are free.
    L1 { mask: Vec<bool> },
    /// `lambda * sum_g ||theta_g||_2`; coordinates outside every group are free.
    Group { groups: Vec<Vec<usize>> },
}

#[derive(Debug, Clone)]
pub struct PenalizedProblem {
    design: Array2<f64>,
    response: Array1<f64>,
    weights: Array1<f64>,
    offset: Option<Array1<f64>>,
    loss: LossKind,
    penalty: Penalty,
    lambda: f64,
    standardize: bool,
}

impl PenalizedProblem {
    /// New problem with unit weights, every coordinate L1-penalized,
    /// `lambda = 0` and standardization on.
    pub fn new(design: Array2<f64>, response: Array1<f64>, loss: LossKind) -> Result<Self> {
        let (n, d) = design.dim();
        if n == 0 || d == 0 {
            return Err(Error::Contract(format!("empty design ({n} x {d})")));
        }
        if response.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "design has {n} rows, response has {}",
                response.len()
            )));
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in design or response".into()));
        }
        if loss == LossKind::Logistic && response.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidInput("logistic response must be +1/-1".into()));
        }
        Ok(Self {
            design,
            response,
            weights: Array1::ones(n),
            offset: None,
            loss,
            penalty: Penalty::L1 { mask: vec![true; d] },
            lambda: 0.0,
            standardize: true,
        })
    }

    pub fn with_weights(mut self, weights: Array1<f64>) -> Result<Self> {
        if weights.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} rows",
                weights.len(),
                self.n()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    /// Fixed additive term in the linear predictor, `eta = X beta + offset`.
    pub fn with_offset(mut self, offset: Array1<f64>) -> Result<Self> {
        if offset.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} offsets for {} rows",
                offset.len(),
                self.n()
            )));
        }
        if offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite offset".into()));
        }
        self.offset = Some(offset);
        Ok(self)
    }

    pub fn with_penalty_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "penalty mask of length {} for {} columns",
                mask.len(),
                self.d()
            )));
        }
        self.penalty = Penalty::L1 { mask };
        Ok(self)
    }

    /// Group-L2 penalty; groups must be disjoint and in range.
    pub fn with_groups(mut self, groups: Vec<Vec<usize>>) -> Result<Self> {
        let d = self.d();
        let mut seen = vec![false; d];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidInput("empty penalty group".into()));
            }
            for &j in g {
                if j >= d || seen[j] {
                    return Err(Error::InvalidInput(format!(
                        "group index {j} out of range or repeated"
                    )));
                }
                seen[j] = true;
            }
        }
        self.penalty = Penalty::Group { groups };
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.set_lambda(lambda)?;
        Ok(self)
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        self.lambda = lambda;
        Ok(())
    }

    pub fn with_standardize(mut self, standardize: bool) -> Self {
        self.standardize = standardize;
        self
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn d(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &Array2<f64> {
        &self.design
    }

    pub fn response(&self) -> &Array1<f64> {
        &self.response
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn penalty(&self) -> &Penalty {
        &self.penalty
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn standardize(&self) -> bool {
        self.standardize
    }

    /// Whether coordinate `j` carries any penalty.
    pub fn is_penalized(&self, j: usize) -> bool {
        match &self.penalty {
            Penalty::L1 { mask } => mask[j],
            Penalty::Group { groups } => groups.iter().any(|g| g.contains(&j)),
        }
    }

    /// Sub-problem on a subset of rows (same penalty and lambda).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            design: self.design.select(ndarray::Axis(0), rows),
            response: self.response.select(ndarray::Axis(0), rows),
            weights: self.weights.select(ndarray::Axis(0), rows),
            offset: self.offset.as_ref().map(|o| o.select(ndarray::Axis(0), rows)),
            loss: self.loss,
            penalty: self.penalty.clone(),
            lambda: self.lambda,
            standardize: self.standardize,
        }
    }

    /// Penalty multipliers: the column standard deviation for penalized
    /// columns when standardizing, 1 otherwise.
    pub fn column_scales(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.d())
            .map(|j| {
                if !self.standardize || !self.is_penalized(j) {
                    return 1.0;
                }
                let col = self.design.column(j);
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Smooth risk at `coefficients` (original scale).
    pub fn smooth_loss(&self, coefficients: ArrayView1<f64>) -> Result<f64> {
        Ok(loss_value_grad(self, coefficients)?.0)
    }

    /// Penalty term at `coefficients` (original scale), including column scales.
    pub fn penalty_value(&self, coefficients: ArrayView1<f64>) -> f64 {
        let scales = self.column_scales();
        match &self.penalty {
            Penalty::L1 { mask } => {
                self.lambda
                    * (0..self.d())
                        .filter(|&j| mask[j])
                        .map(|j| (coefficients[j] * scales[j]).abs())
                        .sum::<f64>()
            }
            Penalty::Group { groups } => {
                self.lambda
                    * groups
                        .iter()
                        .map(|g| {
                            g.iter()
                                .map(|&j| (coefficients[j] * scales[j]).powi(2))
                                .sum::<f64>()
                                .sqrt()
                        })
                        .sum::<f64>()
            }
        }
    }

    /// Full penalized objective at `coefficients` (original scale).
    pub fn objective(&self, coefficients: ArrayView1<f64>) -> Result<f64> {
        Ok(self.smooth_loss(coefficients)? + self.penalty_value(coefficients))
    }
}

/// Step-size rule for the proximal gradient iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    BacktrackingLineSearch,
    FixedLipschitz,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Relative objective decrease below which iteration stops; the KKT
    /// residual must also be at most `10 * tolerance`.
    pub tolerance: f64,
    pub step_rule: StepRule,
    pub acceleration: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tolerance: 1e-8,
            step_rule: StepRule::BacktrackingLineSearch,
            acceleration: true,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 || !(self.tolerance > 0.0) {
            return Err(Error::InvalidInput(
                "solver needs max_iterations >= 1 and tolerance > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Coefficients on the original column scale.
    pub coefficients: Array1<f64>,
    pub objective_value: f64,
    pub iterations_used: usize,
    /// Largest violation of the (standardized) subgradient optimality
    /// conditions at `coefficients`.
    pub kkt_residual: f64,
    pub converged: bool,
}

/// Proximal operator of `t * |.|`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Proximal operator of `t * ||.||_2`: shrinks the whole row toward zero.
pub fn group_soft_threshold(row: ArrayView1<f64>, t: f64) -> Array1<f64> {
    debug_assert!(t >= 0.0);
    let norm = row.dot(&row).sqrt();
    if norm <= t {
        Array1::zeros(row.len())
    } else {
        row.mapv(|v| v * (1.0 - t / norm))
    }
}

/// Smooth (unpenalized) empirical risk and its gradient at `coefficients`,
/// both on the original column scale.
pub fn loss_value_grad(
    problem: &PenalizedProblem,
    coefficients: ArrayView1<f64>,
) -> Result<(f64, Array1<f64>)> {
    if coefficients.len() != problem.d() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} columns",
            coefficients.len(),
            problem.d()
        )));
    }
    let n = problem.n() as f64;
    let mut eta = problem.design.dot(&coefficients);
    if let Some(off) = &problem.offset {
        eta += off;
    }
    let mut value = 0.0;
    let mut resid = Array1::zeros(problem.n());
    for i in 0..problem.n() {
        let (l, dl) = pointwise(problem.loss, problem.response[i], eta[i]);
        value += problem.weights[i] * l;
        resid[i] = problem.weights[i] * dl / n;
    }
    let grad = problem.design.t().dot(&resid);
    Ok((value / n, grad))
}

#[inline]
fn pointwise(loss: LossKind, y: f64, eta: f64) -> (f64, f64) {
    match loss {
        LossKind::Logistic => {
            let u = y * eta;
            (phi(u), y * phi_prime(u))
        }
        LossKind::WeightedSquared => {
            let r = y - eta;
            (r * r, -2.0 * r)
        }
    }
}

/// Column-major, standardized copy of a problem used by the iterations.
struct Prepared<'a> {
    problem: &'a PenalizedProblem,
    n: usize,
    d: usize,
    cols: Vec<f64>,
    scale: Vec<f64>,
    offset: Vec<f64>,
    penalized: Vec<bool>,
    /// Group id per coordinate for group penalties.
    group_of: Vec<Option<usize>>,
    groups: Vec<Vec<usize>>,
    curvature: f64,
}

impl<'a> Prepared<'a> {
    fn new(problem: &'a PenalizedProblem) -> Self {
        let (n, d) = problem.design.dim();
        let scale = problem.column_scales();
        let mut cols = vec![0.0; n * d];
        for j in 0..d {
            let col = problem.design.column(j);
            let s = scale[j];
            for (i, v) in col.iter().enumerate() {
                cols[j * n + i] = v / s;
            }
        }
        let penalized: Vec<bool> = (0..d).map(|j| problem.is_penalized(j)).collect();
        let (groups, group_of) = match &problem.penalty {
            Penalty::L1 { .. } => (Vec::new(), vec![None; d]),
            Penalty::Group { groups } => {
                let mut of = vec![None; d];
                for (g, members) in groups.iter().enumerate() {
                    for &j in members {
                        of[j] = Some(g);
                    }
                }
                (groups.clone(), of)
            }
        };
        let offset = problem
            .offset
            .as_ref()
            .map(|o| o.to_vec())
            .unwrap_or_else(|| vec![0.0; n]);
        let curvature = match problem.loss {
            LossKind::Logistic => 0.25,
            LossKind::WeightedSquared => 2.0,
        };
        Self {
            problem,
            n,
            d,
            cols,
            scale,
            offset,
            penalized,
            group_of,
            groups,
            curvature,
        }
    }

    fn is_group(&self) -> bool {
        !self.groups.is_empty()
    }

    #[inline]
    fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }

    /// `eta = X_std theta` over the nonzero coordinates.
    fn linear_predictor(&self, theta: &[f64]) -> Vec<f64> {
        let mut eta = vec![0.0; self.n];
        for (j, &t) in theta.iter().enumerate() {
            if t != 0.0 {
                axpy(t, self.col(j), &mut eta);
            }
        }
        eta
    }

    fn value(&self, eta: &[f64]) -> f64 {
        let p = self.problem;
        let mut v = 0.0;
        for i in 0..self.n {
            v += p.weights[i] * pointwise(p.loss, p.response[i], eta[i] + self.offset[i]).0;
        }
        v / self.n as f64
    }

    /// Loss value and scaled derivative vector `r` with `grad_j = col_j . r`.
    fn value_and_residual(&self, eta: &[f64], r: &mut [f64]) -> f64 {
        let p = self.problem;
        let inv_n = 1.0 / self.n as f64;
        let mut v = 0.0;
        for i in 0..self.n {
            let (l, dl) = pointwise(p.loss, p.response[i], eta[i] + self.offset[i]);
            v += p.weights[i] * l;
            r[i] = p.weights[i] * dl * inv_n;
        }
        v * inv_n
    }

    fn grad_coord(&self, j: usize, r: &[f64]) -> f64 {
        dot(self.col(j), r)
    }

    fn penalty(&self, theta: &[f64], lambda: f64) -> f64 {
        if self.is_group() {
            lambda
                * self
                    .groups
                    .iter()
                    .map(|g| g.iter().map(|&j| theta[j] * theta[j]).sum::<f64>().sqrt())
                    .sum::<f64>()
        } else {
            lambda
                * theta
                    .iter()
                    .zip(&self.penalized)
                    .filter(|(_, &p)| p)
                    .map(|(t, _)| t.abs())
                    .sum::<f64>()
        }
    }

    /// Power-iteration estimate of the Lipschitz constant of the gradient.
    fn lipschitz(&self, active: &[usize], iterations: usize) -> f64 {
        if active.is_empty() {
            return 1.0;
        }
        let w = &self.problem.weights;
        let mut v: Vec<f64> = active.iter().map(|&j| 1.0 + (j % 7) as f64 * 0.1).collect();
        let mut est = 0.0;
        for _ in 0..iterations {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let mut u = vec![0.0; self.n];
            for (k, &j) in active.iter().enumerate() {
                axpy(v[k], self.col(j), &mut u);
            }
            for i in 0..self.n {
                u[i] *= w[i];
            }
            for (k, &j) in active.iter().enumerate() {
                v[k] = dot(self.col(j), &u);
            }
            est = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        (est * self.curvature / self.n as f64).max(1e-12)
    }

    /// KKT violation of coordinate `j` (L1 penalties) given gradient `g`.
    fn kkt_coord(&self, j: usize, theta_j: f64, g: f64, lambda: f64) -> f64 {
        if !self.penalized[j] {
            g.abs()
        } else if theta_j != 0.0 {
            (g + lambda * theta_j.signum()).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        }
    }

    /// Full KKT residual at `theta`, given the residual vector at `theta`.
    fn kkt_full(&self, theta: &[f64], r: &[f64], lambda: f64) -> f64 {
        let grad: Vec<f64> = (0..self.d).map(|j| self.grad_coord(j, r)).collect();
        self.kkt_from_grad(theta, &grad, lambda)
    }

    fn kkt_from_grad(&self, theta: &[f64], grad: &[f64], lambda: f64) -> f64 {
        let mut worst: f64 = 0.0;
        if self.is_group() {
            for j in 0..self.d {
                if self.group_of[j].is_none() {
                    worst = worst.max(grad[j].abs());
                }
            }
            for g in &self.groups {
                let tn = g.iter().map(|&j| theta[j] * theta[j]).sum::<f64>().sqrt();
                let v = if tn > 0.0 {
                    g.iter()
                        .map(|&j| (grad[j] + lambda * theta[j] / tn).powi(2))
                        .sum::<f64>()
                        .sqrt()
                } else {
                    (g.iter().map(|&j| grad[j] * grad[j]).sum::<f64>().sqrt() - lambda).max(0.0)
                };
                worst = worst.max(v);
            }
        } else {
            for j in 0..self.d {
                worst = worst.max(self.kkt_coord(j, theta[j], grad[j], lambda));
            }
        }
        worst
    }

    /// Proximal step `theta <- prox(y - g / L)` on the active coordinates.
    fn prox_step(&self, active: &[usize], y: &[f64], g: &[f64], step: f64, lambda: f64, out: &mut [f64]) {
        if self.is_group() {
            for k in 0..active.len() {
                out[k] = y[k] - step * g[k];
            }
            // active covers every coordinate for group penalties
            for grp in &self.groups {
                let norm = grp.iter().map(|&j| out[j] * out[j]).sum::<f64>().sqrt();
                let t = step * lambda;
                let factor = if norm <= t { 0.0 } else { 1.0 - t / norm };
                for &j in grp {
                    out[j] *= factor;
                }
            }
        } else {
            for (k, &j) in active.iter().enumerate() {
                let z = y[k] - step * g[k];
                out[k] = if self.penalized[j] {
                    soft_threshold(z, step * lambda)
                } else {
                    z
                };
            }
        }
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators; fixed order keeps results bitwise reproducible
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Mutable iteration state carried along a path of lambdas.
struct State {
    theta: Vec<f64>,
    lipschitz: Option<f64>,
}

struct InnerResult {
    iterations: usize,
    converged: bool,
}

/// Accelerated proximal gradient on the coordinates in `active`.
fn fista_on_active(
    prep: &Prepared,
    state: &mut State,
    active: &[usize],
    lambda: f64,
    config: &SolverConfig,
    budget: usize,
) -> Result<InnerResult> {
    let m = active.len();
    let n = prep.n;
    let kkt_target = 10.0 * config.tolerance;
    let mut lip = match (config.step_rule, state.lipschitz) {
        (StepRule::FixedLipschitz, _) => prep.lipschitz(active, 100) * 1.1,
        (_, Some(l)) => l,
        (_, None) => prep.lipschitz(active, 15),
    };

    let mut x: Vec<f64> = active.iter().map(|&j| state.theta[j]).collect();
    let mut x_prev = x.clone();
    let mut eta = prep.linear_predictor(&state.theta);
    let mut eta_prev = eta.clone();
    let mut r = vec![0.0; n];
    let mut f_obj = prep.value(&eta) + prep.penalty(&state.theta, lambda);
    if !f_obj.is_finite() {
        return Err(Error::NonFinite);
    }
    let mut t = 1.0f64;
    let mut momentum_on = false;

    let mut y = vec![0.0; m];
    let mut g = vec![0.0; m];
    let mut z = vec![0.0; m];
    let mut eta_y = vec![0.0; n];
    let mut eta_z = vec![0.0; n];
    let mut full = state.theta.clone();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < budget {
        iterations += 1;
        let mom = if config.acceleration && momentum_on {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / t_next;
            t = t_next;
            mom
        } else {
            t = 1.0;
            0.0
        };
        for k in 0..m {
            y[k] = x[k] + mom * (x[k] - x_prev[k]);
        }
        for i in 0..n {
            eta_y[i] = eta[i] + mom * (eta[i] - eta_prev[i]);
        }
        let f_y = prep.value_and_residual(&eta_y, &mut r);
        for (k, &j) in active.iter().enumerate() {
            g[k] = prep.grad_coord(j, &r);
        }

        let mut f_z;
        loop {
            prep.prox_step(active, &y, &g, 1.0 / lip, lambda, &mut z);
            eta_z.copy_from_slice(&eta_y);
            let mut lin = 0.0;
            let mut quad = 0.0;
            for (k, &j) in active.iter().enumerate() {
                let diff = z[k] - y[k];
                if diff != 0.0 {
                    axpy(diff, prep.col(j), &mut eta_z);
                    lin += g[k] * diff;
                    quad += diff * diff;
                }
            }
            f_z = prep.value(&eta_z);
            if config.step_rule == StepRule::FixedLipschitz
                || f_z <= f_y + lin + 0.5 * lip * quad + 1e-15 * f_y.abs()
            {
                break;
            }
            lip *= 2.0;
            if !lip.is_finite() {
                return Err(Error::NonFinite);
            }
        }

        for (k, &j) in active.iter().enumerate() {
            full[j] = z[k];
        }
        let f_new = f_z + prep.penalty(&full, lambda);
        if !f_new.is_finite() {
            return Err(Error::NonFinite);
        }
        if f_new > f_obj {
            for (k, &j) in active.iter().enumerate() {
                full[j] = x[k];
            }
            if mom != 0.0 {
                // restart from the last accepted point
                momentum_on = false;
                continue;
            }
            // a plain proximal step failed to decrease: rounding floor
            converged = check_kkt_active(prep, &full, &eta, &mut r, active, lambda) <= kkt_target;
            break;
        }

        let decrease = f_obj - f_new;
        std::mem::swap(&mut x_prev, &mut x);
        x.copy_from_slice(&z);
        std::mem::swap(&mut eta_prev, &mut eta);
        eta.copy_from_slice(&eta_z);
        f_obj = f_new;
        momentum_on = true;

        // periodically recompute eta from scratch to stop drift
        if iterations % 64 == 0 {
            eta = prep.linear_predictor(&full);
        }

        if decrease <= config.tolerance * f_obj.abs().max(1e-300) {
            let kkt = check_kkt_active(prep, &full, &eta, &mut r, active, lambda);
            if kkt <= kkt_target {
                converged = true;
                break;
            }
        }
        if config.step_rule == StepRule::BacktrackingLineSearch {
            lip *= 0.95;
        }
    }

    for (k, &j) in active.iter().enumerate() {
        state.theta[j] = x[k];
    }
    state.lipschitz = Some(lip);
    Ok(InnerResult {
        iterations,
        converged,
    })
}

fn check_kkt_active(prep: &Prepared, theta: &[f64], eta: &[f64], r: &mut [f64], active: &[usize], lambda: f64) -> f64 {
    prep.value_and_residual(eta, r);
    if prep.is_group() {
        return prep.kkt_full(theta, r, lambda);
    }
    active
        .iter()
        .map(|&j| prep.kkt_coord(j, theta[j], prep.grad_coord(j, r), lambda))
        .fold(0.0, f64::max)
}

/// Solves at `lambda` starting from `state.theta`, growing the working set
/// until the full KKT conditions hold.
fn solve_prepared(
    prep: &Prepared,
    state: &mut State,
    lambda: f64,
    config: &SolverConfig,
) -> Result<Solution> {
    let d = prep.d;
    let kkt_target = 10.0 * config.tolerance;
    let mut iterations = 0;
    let mut converged = false;
    let mut r = vec![0.0; prep.n];

    let mut active: Vec<usize> = if prep.is_group() {
        (0..d).collect()
    } else {
        let eta = prep.linear_predictor(&state.theta);
        prep.value_and_residual(&eta, &mut r);
        (0..d)
            .filter(|&j| {
                !prep.penalized[j]
                    || state.theta[j] != 0.0
                    || prep.grad_coord(j, &r).abs() > lambda
            })
            .collect()
    };

    loop {
        let inner = fista_on_active(
            prep,
            state,
            &active,
            lambda,
            config,
            config.max_iterations - iterations,
        )?;
        iterations += inner.iterations;
        if prep.is_group() {
            converged = inner.converged;
            break;
        }
        let eta = prep.linear_predictor(&state.theta);
        prep.value_and_residual(&eta, &mut r);
        let mut in_set = vec![false; d];
        for &j in &active {
            in_set[j] = true;
        }
        let violators: Vec<usize> = (0..d)
            .filter(|&j| !in_set[j] && prep.grad_coord(j, &r).abs() > lambda + 0.5 * kkt_target)
            .collect();
        if violators.is_empty() {
            converged = inner.converged;
            break;
        }
        if iterations >= config.max_iterations {
            break;
        }
        active.extend(violators);
        active.sort_unstable();
    }

    let eta = prep.linear_predictor(&state.theta);
    let smooth = prep.value_and_residual(&eta, &mut r);
    let kkt = prep.kkt_full(&state.theta, &r, lambda);
    let objective = smooth + prep.penalty(&state.theta, lambda);
    if !objective.is_finite() {
        return Err(Error::NonFinite);
    }
    let coefficients = Array1::from_iter(
        state
            .theta
            .iter()
            .zip(&prep.scale)
            .map(|(t, s)| t / s),
    );
    Ok(Solution {
        coefficients,
        objective_value: objective,
        iterations_used: iterations,
        kkt_residual: kkt,
        converged: converged && kkt <= kkt_target,
    })
}

fn initial_state(prep: &Prepared, warm_start: Option<ArrayView1<f64>>) -> Result<State> {
    let theta = match warm_start {
        Some(w) => {
            if w.len() != prep.d {
                return Err(Error::DimensionMismatch(format!(
                    "warm start of length {} for {} columns",
                    w.len(),
                    prep.d
                )));
            }
            w.iter().zip(&prep.scale).map(|(b, s)| b * s).collect()
        }
        None => vec![0.0; prep.d],
    };
    Ok(State {
        theta,
        lipschitz: None,
    })
}

/// Minimizes smooth risk + penalty at the problem's `lambda`.
///
/// A solution that hits `max_iterations` is returned with
/// `converged == false`; a non-finite objective is an error.
pub fn solve(
    problem: &PenalizedProblem,
    config: &SolverConfig,
    warm_start: Option<ArrayView1<f64>>,
) -> Result<Solution> {
    config.validate()?;
    let prep = Prepared::new(problem);
    let mut state = initial_state(&prep, warm_start)?;
    solve_prepared(&prep, &mut state, problem.lambda, config)
}

/// Solutions along a strictly decreasing grid of lambdas, each warm-started
/// from the previous one.
pub fn regularization_path(
    problem: &PenalizedProblem,
    lambda_grid: &[f64],
    config: &SolverConfig,
) -> Result<Vec<Solution>> {
    validate_grid(lambda_grid)?;
    config.validate()?;
    let prep = Prepared::new(problem);
    let mut state = initial_state(&prep, None)?;
    lambda_grid
        .iter()
        .map(|&lambda| solve_prepared(&prep, &mut state, lambda, config))
        .collect()
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Contract("empty lambda grid".into()));
    }
    if grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::Contract("lambda grid entries must be finite and >= 0".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Contract("lambda grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// Solves with every penalized coordinate held at zero, returning the
/// standardized state.
fn profile_unpenalized(prep: &Prepared, config: &SolverConfig) -> Result<State> {
    let mut state = State {
        theta: vec![0.0; prep.d],
        lipschitz: None,
    };
    let free: Vec<usize> = match prep.is_group() {
        true => (0..prep.d).filter(|&j| prep.group_of[j].is_none()).collect(),
        false => (0..prep.d).filter(|&j| !prep.penalized[j]).collect(),
    };
    if !free.is_empty() {
        if prep.is_group() {
            // the group prox would act on all coordinates; solve the free
            // block with a huge lambda instead
            solve_prepared(prep, &mut state, f64::MAX.sqrt(), config)?;
        } else {
            fista_on_active(prep, &mut state, &free, 0.0, config, config.max_iterations)?;
        }
    }
    Ok(state)
}

/// Smallest lambda at which every penalized coefficient is zero, with the
/// unpenalized coordinates profiled out.
pub fn lambda_max(problem: &PenalizedProblem, config: &SolverConfig) -> Result<f64> {
    let prep = Prepared::new(problem);
    let state = profile_unpenalized(&prep, config)?;
    let eta = prep.linear_predictor(&state.theta);
    let mut r = vec![0.0; prep.n];
    prep.value_and_residual(&eta, &mut r);
    let lmax = if prep.is_group() {
        prep.groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&j| prep.grad_coord(j, &r).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    } else {
        (0..prep.d)
            .filter(|&j| prep.penalized[j])
            .map(|j| prep.grad_coord(j, &r).abs())
            .fold(0.0, f64::max)
    };
    Ok(lmax)
}

/// Log-spaced grid from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, count: usize, ratio: f64) -> Vec<f64> {
    let top = if lambda_max > 0.0 { lambda_max } else { 1e-8 };
    if count <= 1 {
        return vec![top];
    }
    let lo = (top * ratio).ln();
    let hi = top.ln();
    (0..count)
        .map(|i| (hi + (lo - hi) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Settings for cross-validated choice of lambda.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    /// Stop a logistic fold path once its training loss drops below 0.1% of
    /// the loss at the first grid point (the data are separated).
    pub early_stop: bool,
    /// Stopping tolerance for the fold paths; the solver's own tolerance is
    /// used when it is looser. The final refit always uses the solver's.
    pub fold_tolerance: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            n_lambda: 50,
            lambda_min_ratio: 1e-3,
            early_stop: true,
            fold_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    pub mean_loss: Vec<f64>,
    pub se_loss: Vec<f64>,
    pub best_index: usize,
}

impl CvResult {
    pub fn best_lambda(&self) -> f64 {
        self.lambdas[self.best_index]
    }
}

/// Warm-started path that stops early once the training loss collapses.
fn fold_path(
    problem: &PenalizedProblem,
    grid: &[f64],
    config: &SolverConfig,
    early_stop: bool,
) -> Result<Vec<Array1<f64>>> {
    let prep = Prepared::new(problem);
    let mut state = initial_state(&prep, None)?;
    let mut out = Vec::with_capacity(grid.len());
    let mut first_loss = None;
    for &lambda in grid {
        let sol = solve_prepared(&prep, &mut state, lambda, config)?;
        let coef = sol.coefficients;
        out.push(coef);
        if early_stop && problem.loss == LossKind::Logistic {
            let eta = prep.linear_predictor(&state.theta);
            let loss = prep.value(&eta);
            let first = *first_loss.get_or_insert(loss);
            if loss < 1e-3 * first {
                break;
            }
        }
    }
    Ok(out)
}

/// K-fold cross-validation over `grid`; `fold_of_row[i]` assigns row `i`.
/// Held-out loss is the problem's own smooth loss on the held-out rows.
pub fn cross_validate(
    problem: &PenalizedProblem,
    fold_of_row: &[usize],
    n_folds: usize,
    grid: &[f64],
    solver: &SolverConfig,
    early_stop: bool,
) -> Result<CvResult> {
    use rayon::prelude::*;
    validate_grid(grid)?;
    if fold_of_row.len() != problem.n() {
        return Err(Error::DimensionMismatch("fold assignment length".into()));
    }
    if n_folds < 2 {
        return Err(Error::Contract("cross-validation needs at least 2 folds".into()));
    }
    let per_fold: Vec<Vec<f64>> = (0..n_folds)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let train: Vec<usize> = (0..problem.n()).filter(|&i| fold_of_row[i] != f).collect();
            let test: Vec<usize> = (0..problem.n()).filter(|&i| fold_of_row[i] == f).collect();
            if train.is_empty() || test.is_empty() {
                return Err(Error::Contract(format!("fold {f} is empty or covers every row")));
            }
            let train_problem = problem.select_rows(&train);
            let test_problem = problem.select_rows(&test);
            let path = fold_path(&train_problem, grid, solver, early_stop)?;
            path.iter()
                .map(|c| test_problem.smooth_loss(c.view()))
                .collect()
        })
        .collect::<Result<_>>()?;

    let len = per_fold.iter().map(Vec::len).min().unwrap_or(0).max(1);
    let k = n_folds as f64;
    let mut mean_loss = Vec::with_capacity(len);
    let mut se_loss = Vec::with_capacity(len);
    for i in 0..len {
        let vals: Vec<f64> = per_fold.iter().map(|v| v[i]).collect();
        let m = vals.iter().sum::<f64>() / k;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (k - 1.0);
        mean_loss.push(m);
        se_loss.push((var / k).sqrt());
    }
    let best_index = mean_loss
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
        .0;
    Ok(CvResult {
        lambdas: grid[..len].to_vec(),
        mean_loss,
        se_loss,
        best_index,
    })
}

/// Cross-validates lambda on a grid built from the problem's own
/// `lambda_max`, then refits on all rows along the grid down to the chosen
/// value. The returned problem carries the chosen lambda.
pub fn fit_cross_validated(
    problem: &PenalizedProblem,
    fold_of_row: &[usize],
    n_folds: usize,
    cv: &CvConfig,
    solver: &SolverConfig,
) -> Result<(Solution, CvResult)> {
    let lmax = lambda_max(problem, solver)?;
    let grid = lambda_grid(lmax, cv.n_lambda, cv.lambda_min_ratio);
    let fold_solver = SolverConfig {
        tolerance: solver.tolerance.max(cv.fold_tolerance),
        ..*solver
    };
    let result = cross_validate(problem, fold_of_row, n_folds, &grid, &fold_solver, cv.early_stop)?;
    let path = regularization_path(problem, &grid[..=result.best_index], solver)?;
    let sol = path.into_iter().last().expect("non-empty path");
    Ok((sol, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_logistic(n: usize, d: usize, seed: u64) -> PenalizedProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.5..1.5));
        let y = Array1::from_shape_fn(n, |i| {
            let s: f64 = x.row(i).iter().enumerate().map(|(j, v)| v * (j as f64 - 1.0)).sum();
            if s + rng.gen_range(-1.0..1.0) > 0.0 {
                1.0
            } else {
                -1.0
            }
        });
        PenalizedProblem::new(x, y, LossKind::Logistic).unwrap()
    }

    #[test]
    fn soft_threshold_branches() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.4, 1.0), 0.0);
        for x in [-2.0, 0.0, 5.0] {
            assert_eq!(soft_threshold(x, 0.0), x);
        }
    }

    #[test]
    fn group_soft_threshold_cases() {
        let row = array![3.0, 4.0];
        assert_eq!(group_soft_threshold(row.view(), 5.0), array![0.0, 0.0]);
        let out = group_soft_threshold(row.view(), 2.5);
        assert_abs_diff_eq!(out[0], 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 2.0, epsilon = 1e-15);
        for x in [-3.0, -0.2, 0.0, 0.7, 4.0] {
            for t in [0.0, 0.5, 1.0] {
                let g = group_soft_threshold(array![x].view(), t);
                assert_abs_diff_eq!(g[0], soft_threshold(x, t), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn logistic_single_sample_margin_zero() {
        let p = PenalizedProblem::new(array![[1.0]], array![1.0], LossKind::Logistic).unwrap();
        let (v, g) = loss_value_grad(&p, array![0.0].view()).unwrap();
        assert_abs_diff_eq!(v, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(g[0], -0.5, epsilon = 1e-15);
        let (v, _) = loss_value_grad(&p, array![40.0].view()).unwrap();
        assert!(v < 1e-17);
        assert!(matches!(
            loss_value_grad(&p, array![0.0, 1.0].view()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..5 {
            let p = random_logistic(20, 3, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let beta = Array1::from_shape_fn(3, |_| rng.gen_range(-1.0..1.0));
            let (_, g) = loss_value_grad(&p, beta.view()).unwrap();
            for j in 0..3 {
                let h = 1e-6;
                let mut bp = beta.clone();
                bp[j] += h;
                let mut bm = beta.clone();
                bm[j] -= h;
                let fd = (p.smooth_loss(bp.view()).unwrap() - p.smooth_loss(bm.view()).unwrap())
                    / (2.0 * h);
                assert_abs_diff_eq!(g[j], fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn huge_lambda_zeroes_penalized_and_centers_intercept() {
        // balanced labels, intercept column unpenalized
        let mut p = random_logistic(40, 3, 7);
        let y = Array1::from_shape_fn(40, |i| if i % 2 == 0 { 1.0 } else { -1.0 });
        let mut x = p.design().clone();
        x.column_mut(2).fill(-1.0);
        p = PenalizedProblem::new(x, y, LossKind::Logistic)
            .unwrap()
            .with_penalty_mask(vec![true, true, false])
            .unwrap();
        let lmax = lambda_max(&p, &SolverConfig::default()).unwrap();
        let p = p.with_lambda(lmax * 1.01).unwrap();
        let sol = solve(&p, &SolverConfig::default(), None).unwrap();
        assert_eq!(sol.coefficients[0], 0.0);
        assert_eq!(sol.coefficients[1], 0.0);
        assert!(sol.coefficients[2].abs() < 1e-7);
        assert!(sol.converged);
    }

    #[test]
    fn empty_grid_and_bad_grid_rejected() {
        let p = random_logistic(10, 2, 1);
        let cfg = SolverConfig::default();
        assert!(matches!(regularization_path(&p, &[], &cfg), Err(Error::Contract(_))));
        assert!(regularization_path(&p, &[0.1, 0.2], &cfg).is_err());
    }

    #[test]
    fn path_second_point_beats_first_at_its_lambda() {
        let p = random_logistic(60, 4, 3);
        let cfg = SolverConfig::default();
        let lmax = lambda_max(&p, &cfg).unwrap();
        let sols = regularization_path(&p, &[lmax, lmax / 2.0], &cfg).unwrap();
        assert!(sols[0].coefficients.iter().all(|&c| c == 0.0));
        let at_half = p.clone().with_lambda(lmax / 2.0).unwrap();
        let f0 = at_half.objective(sols[0].coefficients.view()).unwrap();
        let f1 = at_half.objective(sols[1].coefficients.view()).unwrap();
        assert!(f1 <= f0 + 1e-12);
    }

    #[test]
    fn deterministic_bitwise() {
        let p = random_logistic(80, 6, 11).with_lambda(0.02).unwrap();
        let a = solve(&p, &SolverConfig::default(), None).unwrap();
        let b = solve(&p, &SolverConfig::default(), None).unwrap();
        assert_eq!(a.coefficients, b.coefficients);
        assert_eq!(a.objective_value.to_bits(), b.objective_value.to_bits());
    }

    #[test]
    fn fixed_step_and_unaccelerated_agree_with_default() {
        let p = random_logistic(100, 5, 5).with_lambda(0.03).unwrap();
        let base = solve(&p, &SolverConfig::default(), None).unwrap();
        for cfg in [
            SolverConfig {
                step_rule: StepRule::FixedLipschitz,
                ..Default::default()
            },
            SolverConfig {
                acceleration: false,
                max_iterations: 200_000,
                ..Default::default()
            },
        ] {
            let s = solve(&p, &cfg, None).unwrap();
            assert!(s.converged, "{cfg:?}");
            for j in 0..5 {
                assert_abs_diff_eq!(s.coefficients[j], base.coefficients[j], epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn weighted_squared_matches_normal_equations() {
        // lambda = 0 weighted least squares, checked against a 2x2 solve
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 50;
        let x = Array2::from_shape_fn((n, 2), |(_, j)| if j == 1 { 1.0 } else { rng.gen_range(-2.0..2.0) });
        let y = Array1::from_shape_fn(n, |i| 0.7 * x[(i, 0)] - 0.3 + rng.gen_range(-0.1..0.1));
        let w = Array1::from_shape_fn(n, |i| 0.5 + (i % 3) as f64);
        let p = PenalizedProblem::new(x.clone(), y.clone(), LossKind::WeightedSquared)
            .unwrap()
            .with_weights(w.clone())
            .unwrap();
        let s = solve(&p, &SolverConfig::default(), None).unwrap();
        let (mut a, mut b) = ([[0.0; 2]; 2], [0.0; 2]);
        for i in 0..n {
            for r in 0..2 {
                b[r] += w[i] * x[(i, r)] * y[i];
                for c in 0..2 {
                    a[r][c] += w[i] * x[(i, r)] * x[(i, c)];
                }
            }
        }
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let b0 = (a[1][1] * b[0] - a[0][1] * b[1]) / det;
        let b1 = (a[0][0] * b[1] - a[1][0] * b[0]) / det;
        assert_abs_diff_eq!(s.coefficients[0], b0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.coefficients[1], b1, epsilon = 1e-6);
    }

    #[test]
    fn group_penalty_kkt_holds() {
        let p = random_logistic(80, 6, 21)
            .with_groups(vec![vec![0, 1], vec![2, 3]])
            .unwrap()
            .with_lambda(0.05)
            .unwrap();
        let s = solve(&p, &SolverConfig::default(), None).unwrap();
        assert!(s.converged);
        assert!(s.kkt_residual <= 1e-7);
    }

    #[test]
    fn monotone_descent_with_small_budgets() {
        let p = random_logistic(120, 8, 4).with_lambda(0.01).unwrap();
        let mut prev = f64::INFINITY;
        let mut warm: Option<Array1<f64>> = None;
        for _ in 0..30 {
            let cfg = SolverConfig {
                max_iterations: 3,
                ..Default::default()
            };
            let s = solve(&p, &cfg, warm.as_ref().map(|w| w.view())).unwrap();
            assert!(s.objective_value <= prev + 1e-14);
            prev = s.objective_value;
            warm = Some(s.coefficients);
        }
    }

    #[test]
    fn cross_validation_picks_interior_lambda_on_noisy_data() {
        let p = random_logistic(150, 10, 8);
        let folds: Vec<usize> = (0..150).map(|i| i % 5).collect();
        let (sol, cv) =
            fit_cross_validated(&p, &folds, 5, &CvConfig::default(), &SolverConfig::default())
                .unwrap();
        assert!(cv.best_index > 0);
        assert_eq!(cv.lambdas.len(), cv.mean_loss.len());
        assert!(sol.coefficients.iter().any(|&c| c != 0.0));
    }
}
