//! l1-penalized least squares by cyclic coordinate descent.
//!
//! Two forms share the same minimizer on consistent inputs but follow
//! different numerical routes: the data form maintains a residual vector
//! against the (projected) design, the Gram form works off second moments
//! only. The Gram form is what the Gaussian-mechanism baseline has to use,
//! and its input matrix may be indefinite, so that path watches for the
//! objective rising or the iterates blowing up and reports non-convexity
//! instead of pretending to converge.

use crate::linalg::{dot, norm_inf, Mat};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("lambda must be positive, got {0}")]
    BadLambda(f64),
    #[error("n_scale must be positive, got {0}")]
    BadScale(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("gram matrix is not symmetric (|G[{i},{j}] - G[{j},{i}]| = {diff})")]
    Asymmetric { i: usize, j: usize, diff: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Which objective representation produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverForm {
    Data,
    Gram,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Full coordinate sweeps before giving up.
    pub max_iters: usize,
    /// Convergence threshold on the largest coordinate update in a sweep.
    pub tol: f64,
    /// Record the objective after every sweep.
    pub track_objective: bool,
}

impl SolverConfig {
    pub fn new(lambda: f64) -> Self {
        SolverConfig {
            lambda,
            max_iters: 100_000,
            tol: 1e-12,
            track_objective: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trajectory: Option<Vec<f64>>,
    pub nonconvex_detected: bool,
    pub form: SolverForm,
}

/// `lambda = C * sigma * max(sqrt(log p / n), sqrt((log p)^3 / r))`, the
/// penalty scaling under which the debiasing analysis goes through.
pub fn default_lambda(sigma: f64, n: usize, p: usize, r: usize, c_lambda: f64) -> f64 {
    let logp = (p as f64).ln();
    c_lambda
        * sigma
        * (logp / n as f64)
            .sqrt()
            .max((logp.powi(3) / r as f64).sqrt())
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Minimize `(1/2n) |Xd theta - yd|^2 + lambda |theta|_1`.
///
/// `n_scale` is the original sample size: for privatized inputs the design
/// has `r` rows but the objective keeps its `1/n` scaling.
pub fn lasso_data(
    xd: &Mat,
    yd: &[f64],
    n_scale: f64,
    cfg: &SolverConfig,
) -> Result<LassoSolution, SolverError> {
    if !(cfg.lambda > 0.0) {
        return Err(SolverError::BadLambda(cfg.lambda));
    }
    if !(n_scale > 0.0) || !n_scale.is_finite() {
        return Err(SolverError::BadScale(n_scale));
    }
    if yd.len() != xd.nrows() {
        return Err(SolverError::DimensionMismatch(format!(
            "yd has length {}, design has {} rows",
            yd.len(),
            xd.nrows()
        )));
    }
    if xd.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite("design"));
    }
    if yd.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite("response"));
    }

    let d = xd.ncols();
    // columns made contiguous once; sweeps walk them repeatedly
    let cols = xd.transposed();
    let diag: Vec<f64> = (0..d)
        .map(|j| dot(cols.row(j), cols.row(j)) / n_scale)
        .collect();

    let mut theta = vec![0.0; d];
    let mut resid = yd.to_vec();
    let mut trajectory = cfg.track_objective.then(Vec::new);
    let mut converged = false;
    let mut iterations = 0;
    for _sweep in 0..cfg.max_iters {
        iterations += 1;
        let mut max_delta = 0.0f64;
        for j in 0..d {
            if diag[j] <= 0.0 {
                continue;
            }
            let col = cols.row(j);
            let rho = dot(col, &resid) / n_scale + diag[j] * theta[j];
            let new = soft_threshold(rho, cfg.lambda) / diag[j];
            let delta = new - theta[j];
            if delta != 0.0 {
                for (res, x) in resid.iter_mut().zip(col) {
                    *res -= delta * x;
                }
                theta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if let Some(t) = trajectory.as_mut() {
            t.push(
                dot(&resid, &resid) / (2.0 * n_scale)
                    + cfg.lambda * theta.iter().map(|v| v.abs()).sum::<f64>(),
            );
        }
        if max_delta < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(LassoSolution {
        theta,
        lambda: cfg.lambda,
        iterations,
        converged,
        objective_trajectory: trajectory,
        nonconvex_detected: false,
        form: SolverForm::Data,
    })
}

/// Minimize `(1/2n)(theta^T G theta - 2 theta^T c) + lambda |theta|_1`.
///
/// `G` may be indefinite (Gaussian-mechanism output); a diagonal entry at
/// or below zero, a rising objective across a sweep, or exploding iterates
/// all stop the solve with `nonconvex_detected` set.
pub fn lasso_gram(
    gram: &Mat,
    c: &[f64],
    n_scale: f64,
    cfg: &SolverConfig,
) -> Result<LassoSolution, SolverError> {
    if !(cfg.lambda > 0.0) {
        return Err(SolverError::BadLambda(cfg.lambda));
    }
    if !(n_scale > 0.0) || !n_scale.is_finite() {
        return Err(SolverError::BadScale(n_scale));
    }
    let d = gram.nrows();
    if gram.ncols() != d || c.len() != d {
        return Err(SolverError::DimensionMismatch(format!(
            "gram is {}x{}, c has length {}",
            gram.nrows(),
            gram.ncols(),
            c.len()
        )));
    }
    let scale = gram.max_abs().max(1.0);
    for i in 0..d {
        for j in (i + 1)..d {
            let diff = (gram[(i, j)] - gram[(j, i)]).abs();
            if diff > 1e-10 * scale {
                return Err(SolverError::Asymmetric { i, j, diff });
            }
        }
    }

    let mut nonconvex = (0..d).any(|j| gram[(j, j)] <= 0.0);
    let mut theta = vec![0.0; d];
    let mut gtheta = vec![0.0; d];
    let objective = |gtheta: &[f64], theta: &[f64]| {
        (dot(theta, gtheta) - 2.0 * dot(theta, c)) / (2.0 * n_scale)
            + cfg.lambda * theta.iter().map(|v| v.abs()).sum::<f64>()
    };
    let iterate_cap = 1e6 * (1.0 + norm_inf(c) / n_scale).max(1.0);

    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    if !nonconvex {
        let mut prev_obj = objective(&gtheta, &theta);
        for _sweep in 0..cfg.max_iters {
            iterations += 1;
            let mut max_delta = 0.0f64;
            for j in 0..d {
                let gjj = gram[(j, j)];
                let rho = c[j] - gtheta[j] + gjj * theta[j];
                let new = soft_threshold(rho, n_scale * cfg.lambda) / gjj;
                let delta = new - theta[j];
                if delta != 0.0 {
                    for (gt, g) in gtheta.iter_mut().zip(gram.row(j)) {
                        *gt += delta * g;
                    }
                    theta[j] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            let obj = objective(&gtheta, &theta);
            trajectory.push(obj);
            if obj > prev_obj + 1e-10 * (1.0 + prev_obj.abs()) || norm_inf(&theta) > iterate_cap {
                nonconvex = true;
                break;
            }
            prev_obj = obj;
            if max_delta < cfg.tol {
                converged = true;
                break;
            }
        }
    }
    Ok(LassoSolution {
        theta,
        lambda: cfg.lambda,
        iterations,
        converged: converged && !nonconvex,
        objective_trajectory: cfg.track_objective.then_some(trajectory),
        nonconvex_detected: nonconvex,
        form: SolverForm::Gram,
    })
}

/// A lasso problem instance, for optimality checks.
pub enum LassoProblem<'a> {
    Data {
        xd: &'a Mat,
        yd: &'a [f64],
        n_scale: f64,
    },
    Gram {
        gram: &'a Mat,
        xty: &'a [f64],
        n_scale: f64,
    },
}

impl LassoProblem<'_> {
    /// Gradient of the smooth part at `theta`.
    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            LassoProblem::Data { xd, yd, n_scale } => {
                let mut resid = xd.matvec(theta);
                for (ri, yi) in resid.iter_mut().zip(*yd) {
                    *ri -= yi;
                }
                let mut g = xd.matvec_t(&resid);
                g.iter_mut().for_each(|v| *v /= n_scale);
                g
            }
            LassoProblem::Gram { gram, xty, n_scale } => {
                let mut g = gram.matvec(theta);
                for (gi, ci) in g.iter_mut().zip(*xty) {
                    *gi = (*gi - ci) / n_scale;
                }
                g
            }
        }
    }

    pub fn objective(&self, theta: &[f64], lambda: f64) -> f64 {
        let penalty = lambda * theta.iter().map(|v| v.abs()).sum::<f64>();
        match self {
            LassoProblem::Data { xd, yd, n_scale } => {
                let resid = xd.matvec(theta);
                let ss: f64 = resid.iter().zip(*yd).map(|(a, b)| (a - b) * (a - b)).sum();
                ss / (2.0 * n_scale) + penalty
            }
            LassoProblem::Gram { gram, xty, n_scale } => {
                let gtheta = gram.matvec(theta);
                (dot(theta, &gtheta) - 2.0 * dot(theta, xty)) / (2.0 * n_scale) + penalty
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    pub max_violation: f64,
    pub worst_coordinate: usize,
    pub pass: bool,
}

/// Subgradient optimality: active coordinates need `|g_j + lambda sign| <=
/// tol`, inactive ones `|g_j| <= lambda + tol`.
pub fn kkt_check(solution: &LassoSolution, problem: &LassoProblem, tol: f64) -> KktReport {
    let grad = problem.gradient(&solution.theta);
    let mut max_violation = 0.0f64;
    let mut worst = 0;
    for (j, (&g, &t)) in grad.iter().zip(&solution.theta).enumerate() {
        let v = if t != 0.0 {
            (g + solution.lambda * t.signum()).abs()
        } else {
            (g.abs() - solution.lambda).max(0.0)
        };
        if v > max_violation {
            max_violation = v;
            worst = j;
        }
    }
    KktReport {
        max_violation,
        worst_coordinate: worst,
        pass: max_violation <= tol,
    }
}
