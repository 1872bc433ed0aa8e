//! Experiment runner behind the CLI: simulation scenarios, theory overlays,
//! and the real-data workflow. Emits long-format CSV tables plus a run
//! manifest.
//!
//! Every repetition owns a seed derived from `(config seed, rep index)`
//! only, so sweeps over signal strength or privacy budget reuse identical
//! data and projection randomness; curves across a grid are coupled, which
//! is what makes monotonicity checks sharp at modest repetition counts.

pub mod config;

pub use config::{
    ConfigError, ExperimentConfig, FamilyKind, MechanismKind, ProjectionPath, RawConfig, Scenario,
};

use crate::debias::{self, SigmaEstimate};
use crate::filter::{self, StatisticFamily};
use crate::knockoff::{sample_knockoffs, AugmentedMatrix, KnockoffError};
use crate::linalg::symmetric_eigenvalues;
use crate::model::{
    analytic_row_bound, choose_support, generate_design, load_csv, sample_noise, synthesize,
    BoundParams, BoundPolicy, ConstantColumnPolicy, Dataset, DesignDistribution, ModelError,
    ModelSpec, NoiseSpec,
};
use crate::par::*;
use crate::privacy::{
    gaussian_privatize_moments, jlt_privatize, jlt_privatize_sketch, JltOptions, PrivacyBudget,
    PrivacyError,
};
use crate::rng;
use crate::solver::{default_lambda, lasso_data, lasso_gram, SolverConfig, SolverError};
use crate::theory::{self, TheoryError, TheoryInputs, ThresholdProblem, ThresholdSolver};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("estimated memory {estimated_mb} MiB exceeds the configured limit {limit_mb} MiB")]
    Memory { estimated_mb: u64, limit_mb: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Knockoff(#[from] KnockoffError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Filter(#[from] crate::filter::FilterError),
    #[error(transparent)]
    Debias(#[from] crate::debias::DebiasError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One long-format result record.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub seed: u64,
    pub epsilon: f64,
    pub mu: f64,
    pub q: f64,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

/// Append-only table with a schema stable across scenarios.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
}

impl ResultTable {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        scenario: &str,
        seed: u64,
        epsilon: f64,
        mu: f64,
        q: f64,
        method: &str,
        metric: &str,
        value: f64,
    ) {
        self.rows.push(ResultRow {
            scenario: scenario.to_owned(),
            seed,
            epsilon,
            mu,
            q,
            method: method.to_owned(),
            metric: metric.to_owned(),
            value,
        });
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }

    /// Values of a metric filtered by method, in emission order.
    pub fn metric_values(&self, method: &str, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    /// Single aggregate value at a grid point, if present. Grid keys match
    /// on equality, with NaN matching NaN (real-data rows have no mu axis).
    pub fn lookup(&self, method: &str, metric: &str, mu: f64, epsilon: f64) -> Option<f64> {
        let key_eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.rows
            .iter()
            .find(|r| {
                r.method == method
                    && r.metric == metric
                    && key_eq(r.mu, mu)
                    && key_eq(r.epsilon, epsilon)
            })
            .map(|r| r.value)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("scenario,seed,epsilon,mu,q,method,metric,value\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.scenario, r.seed, r.epsilon, r.mu, r.q, r.method, r.metric, r.value
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

fn mean_se(values: &[f64]) -> (f64, f64, usize) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, f64::NAN, 1);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt(), k)
}

/// Everything one pipeline repetition needs.
#[derive(Debug, Clone)]
pub struct RunParams {
    pub n: usize,
    pub p: usize,
    pub s0: usize,
    pub sigma: f64,
    pub mu: f64,
    pub normalize_signal: bool,
    pub design: DesignDistribution,
    pub epsilon: f64,
    pub delta: f64,
    pub r: usize,
    pub lambda: f64,
    pub solver_tol: f64,
    pub max_iters: usize,
    pub family: FamilyKind,
    pub mechanism: MechanismKind,
    pub projection: ProjectionPath,
    pub seed: u64,
}

/// Diagnostics-rich output of one repetition, before thresholding.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub w: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub theta_u: Vec<f64>,
    pub lambda: f64,
    /// Augmentation scale of the release (zero off the projection path).
    pub w_aug: f64,
    pub converged: bool,
    pub nonconvex: bool,
    /// Smallest released-Gram eigenvalue cleared zero (always true for the
    /// projection mechanism; the interesting cases are Gaussian).
    pub psd: bool,
    /// Designated signal slots (power is counted against these even when
    /// the signal magnitude is zero).
    pub support: Vec<usize>,
}

fn use_sketch(projection: ProjectionPath, n: usize, d: usize) -> bool {
    match projection {
        ProjectionPath::Streaming => false,
        ProjectionPath::Sketch => true,
        ProjectionPath::Auto => n >= 4096 && n >= 8 * d,
    }
}

/// Generate data, privatize, solve, debias, and form feature statistics.
pub fn run_single(params: &RunParams) -> Result<PipelineRun, HarnessError> {
    let support = choose_support(params.p, params.s0, params.seed)?;
    let value = if params.normalize_signal && params.s0 > 0 {
        1.0 / (params.s0 as f64).sqrt()
    } else {
        params.mu
    };
    let mut theta0 = vec![0.0; params.p];
    for &j in &support {
        theta0[j] = value;
    }
    let spec = ModelSpec::new(params.n, params.p, theta0)?;
    let theta_l1: f64 = spec.theta0.iter().map(|v| v.abs()).sum();

    let x = generate_design(params.n, params.p, &params.design, params.seed)?;
    let knockoffs = sample_knockoffs(params.n, params.p, &params.design, params.seed)?;
    let noise_spec = NoiseSpec::with_default_truncation(params.sigma, params.n)?;
    let noise = sample_noise(params.n, &noise_spec, params.seed)?;
    let data = synthesize(spec, x, noise)?;

    let bound = analytic_row_bound(&BoundParams {
        b: params.design.effective_bound(),
        p: params.p,
        theta0_l1: theta_l1,
        b_n: noise_spec.truncation,
    });
    let augmented = AugmentedMatrix::augment(&data.x, &knockoffs, &data.y)?;
    let n_scale = params.n as f64;
    let mut cfg = SolverConfig::new(params.lambda);
    cfg.tol = params.solver_tol;
    cfg.max_iters = params.max_iters;

    let (theta_star, theta_u, w_aug, converged, nonconvex, psd);
    match params.mechanism {
        MechanismKind::Jlt => {
            let budget = PrivacyBudget::new(params.epsilon, params.delta)?;
            let private = if use_sketch(params.projection, params.n, augmented.ncols()) {
                jlt_privatize_sketch(&augmented, &budget, params.r, bound, params.seed)?
            } else {
                jlt_privatize(
                    &augmented,
                    &budget,
                    params.r,
                    bound,
                    params.seed,
                    &JltOptions::default(),
                )?
            };
            let design_star = private.design();
            let sol = lasso_data(&design_star, &private.ystar, n_scale, &cfg)?;
            let est = debias::debias(
                &sol.theta,
                &design_star,
                &private.ystar,
                private.params.w,
                params.n,
                SigmaEstimate::Oracle(params.sigma),
            )?;
            w_aug = private.params.w;
            theta_star = sol.theta;
            theta_u = est.theta_u;
            converged = sol.converged;
            nonconvex = false;
            psd = true;
        }
        MechanismKind::Gaussian => {
            let budget = PrivacyBudget::new(params.epsilon, params.delta)?;
            let moments = gaussian_privatize_moments(&augmented, &budget, bound, params.seed)?;
            let eig = symmetric_eigenvalues(&moments.gram);
            psd = eig[0] >= -1e-10 * moments.gram.max_abs().max(1.0);
            let sol = lasso_gram(&moments.gram, &moments.xty, n_scale, &cfg)?;
            // debiased via the released moments; the ridge correction has no
            // w on this mechanism
            let gt = moments.gram.matvec(&sol.theta);
            theta_u = sol
                .theta
                .iter()
                .zip(moments.xty.iter().zip(&gt))
                .map(|(&t, (&c, &g))| t + (c - g) / n_scale)
                .collect();
            w_aug = 0.0;
            theta_star = sol.theta;
            converged = sol.converged;
            nonconvex = sol.nonconvex_detected;
        }
        MechanismKind::NonPrivate => {
            let design = data.x.hcat(&knockoffs);
            let sol = lasso_data(&design, &data.y, n_scale, &cfg)?;
            let est = debias::debias(
                &sol.theta,
                &design,
                &data.y,
                0.0,
                params.n,
                SigmaEstimate::Oracle(params.sigma),
            )?;
            w_aug = 0.0;
            theta_star = sol.theta;
            theta_u = est.theta_u;
            converged = sol.converged;
            nonconvex = false;
            psd = true;
        }
    }

    let family = match params.family {
        FamilyKind::Lcd => StatisticFamily::lcd(params.lambda, w_aug, params.n),
        FamilyKind::AbsDebiased => StatisticFamily::abs_debiased(),
    };
    let w = filter::feature_statistics(&theta_u, &family)?;
    Ok(PipelineRun {
        w,
        theta_star,
        theta_u,
        lambda: params.lambda,
        w_aug,
        converged,
        nonconvex,
        psd,
        support,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SelectionOutcome {
    pub t_hat: f64,
    pub n_selected: usize,
    pub fdp: f64,
    pub power: f64,
    pub fdp_hat: Option<f64>,
}

/// Threshold (data-driven or fixed) and evaluate against the designated
/// slots. With zero designated slots the power is reported as zero.
pub fn select_and_eval(
    run: &PipelineRun,
    q: f64,
    plus: bool,
    fixed_t: Option<f64>,
) -> Result<SelectionOutcome, HarnessError> {
    let t_hat = match fixed_t {
        Some(t) => t,
        None => filter::knockoff_threshold(&run.w, q, plus)?,
    };
    let selected = filter::select(&run.w, t_hat);
    let (fdp, power) = if run.support.is_empty() {
        (if selected.is_empty() { 0.0 } else { 1.0 }, 0.0)
    } else {
        filter::evaluate(&selected, &run.support)?
    };
    let fdp_hat = if t_hat.is_finite() {
        Some(filter::fdp_hat(&run.w, t_hat, plus)?)
    } else {
        None
    };
    Ok(SelectionOutcome {
        t_hat,
        n_selected: selected.len(),
        fdp,
        power,
        fdp_hat,
    })
}

fn resolve_lambda(cfg: &ExperimentConfig, n: usize, r: usize) -> f64 {
    cfg.lambda
        .unwrap_or_else(|| default_lambda(cfg.sigma, n, (2 * cfg.p).max(2), r, cfg.c_lambda))
}

fn rep_seed(cfg_seed: u64, rep: usize) -> u64 {
    rng::derive_u64(cfg_seed, "rep", rep as u64)
}

/// Peak-memory estimate for one repetition plus shared buffers.
fn estimate_memory_bytes(n: usize, p: usize, r: usize) -> u64 {
    let d = 2 * p + 1;
    let doubles = 2 * n * p          // design and knockoffs
        + 4 * n                      // response, noise, residual buffers
        + 4 * r * 2 * p              // released design, its transpose, work
        + 2 * d * d                  // grams
        + 1024 * d; // streaming block buffer
    8 * doubles as u64
}

fn check_memory(cfg: &ExperimentConfig, n: usize) -> Result<(), HarnessError> {
    let estimated = estimate_memory_bytes(n, cfg.p, cfg.r);
    if estimated > cfg.memory_limit_bytes {
        return Err(HarnessError::Memory {
            estimated_mb: estimated >> 20,
            limit_mb: cfg.memory_limit_bytes >> 20,
        });
    }
    Ok(())
}

fn method_name(mechanism: MechanismKind, plus: bool, fixed: bool) -> String {
    if fixed {
        format!("{}-fixed-t", mechanism.name())
    } else if plus {
        format!("{}-knockoff+", mechanism.name())
    } else {
        format!("{}-knockoff", mechanism.name())
    }
}

/// Run the configured scenario.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    match cfg.scenario {
        Scenario::PowerVsMu | Scenario::DataThreshold => scenario_mu_sweep(cfg),
        Scenario::ErrorConvergence => scenario_error_convergence(cfg),
        Scenario::Tradeoff => scenario_tradeoff(cfg),
        Scenario::MechanismCompare => scenario_mechanism_compare(cfg),
        Scenario::RealData => Err(HarnessError::Invalid(
            "the real-data scenario runs through real_data_run with a CSV path".into(),
        )),
    }
}

fn base_params(cfg: &ExperimentConfig) -> RunParams {
    RunParams {
        n: cfg.n,
        p: cfg.p,
        s0: cfg.s0,
        sigma: cfg.sigma,
        mu: 0.0,
        normalize_signal: cfg.normalize_signal,
        design: DesignDistribution::rademacher(),
        epsilon: cfg.epsilon_grid[0],
        delta: cfg.delta,
        r: cfg.r,
        lambda: 0.0,
        solver_tol: cfg.solver_tol,
        max_iters: cfg.max_iters,
        family: cfg.family,
        mechanism: MechanismKind::Jlt,
        projection: cfg.projection,
        seed: 0,
    }
}

fn run_batch(tasks: Vec<RunParams>) -> Result<Vec<PipelineRun>, HarnessError> {
    tasks
        .into_par_iter()
        .map(|params| run_single(&params))
        .collect()
}

/// Power and FDP along the signal-magnitude grid (optionally under several
/// privacy budgets and threshold variants).
fn scenario_mu_sweep(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    check_memory(cfg, cfg.n)?;
    let scenario = cfg.scenario.name();
    let lambda = resolve_lambda(cfg, cfg.n, cfg.r);
    let mut table = ResultTable::default();

    let mut tasks = Vec::new();
    for &epsilon in &cfg.epsilon_grid {
        for &mu in &cfg.mu_grid {
            for rep in 0..cfg.reps {
                let mut params = base_params(cfg);
                params.mu = mu;
                params.epsilon = epsilon;
                params.lambda = lambda;
                params.seed = rep_seed(cfg.seed, rep);
                tasks.push(params);
            }
        }
    }
    let runs = run_batch(tasks)?;

    let mut idx = 0;
    for &epsilon in &cfg.epsilon_grid {
        for &mu in &cfg.mu_grid {
            let grid_runs = &runs[idx..idx + cfg.reps];
            idx += cfg.reps;
            let mut variants: Vec<(String, Option<f64>, bool)> = cfg
                .plus_variants
                .iter()
                .map(|&plus| (method_name(MechanismKind::Jlt, plus, false), None, plus))
                .collect();
            if let Some(t) = cfg.fixed_t {
                variants.push((method_name(MechanismKind::Jlt, true, true), Some(t), true));
            }
            for (method, fixed_t, plus) in variants {
                let mut powers = Vec::new();
                let mut fdps = Vec::new();
                let mut thresholds = Vec::new();
                for run in grid_runs {
                    let sel = select_and_eval(run, cfg.q, plus, fixed_t)?;
                    powers.push(sel.power);
                    fdps.push(sel.fdp);
                    if sel.t_hat.is_finite() {
                        thresholds.push(sel.t_hat);
                    }
                }
                let (pm, pse, count) = mean_se(&powers);
                let (fm, fse, _) = mean_se(&fdps);
                for (metric, value) in [
                    ("mean_power", pm),
                    ("se_power", pse),
                    ("mean_fdp", fm),
                    ("se_fdp", fse),
                    ("count", count as f64),
                ] {
                    table.push(scenario, 0, epsilon, mu, cfg.q, &method, metric, value);
                }
                if !thresholds.is_empty() {
                    let (tm, tse, tc) = mean_se(&thresholds);
                    table.push(scenario, 0, epsilon, mu, cfg.q, &method, "mean_t_hat", tm);
                    table.push(scenario, 0, epsilon, mu, cfg.q, &method, "se_t_hat", tse);
                    table.push(
                        scenario,
                        0,
                        epsilon,
                        mu,
                        cfg.q,
                        &method,
                        "count_finite_t",
                        tc as f64,
                    );
                }
                for (rep, run) in grid_runs.iter().enumerate() {
                    let sel = select_and_eval(run, cfg.q, plus, fixed_t)?;
                    let seed = rep_seed(cfg.seed, rep);
                    for (metric, value) in [
                        ("t_hat", sel.t_hat),
                        ("k_selected", sel.n_selected as f64),
                        ("fdp", sel.fdp),
                        ("power", sel.power),
                        ("converged", f64::from(u8::from(run.converged))),
                    ] {
                        table.push(scenario, seed, epsilon, mu, cfg.q, &method, metric, value);
                    }
                }
            }
        }
    }
    Ok(table)
}

/// Prediction-error convergence: empirical power against the theoretical
/// value across sample sizes and privacy budgets.
fn scenario_error_convergence(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let n_grid = if cfg.n_grid.is_empty() {
        vec![cfg.n]
    } else {
        cfg.n_grid.clone()
    };
    for &n in &n_grid {
        check_memory(cfg, n)?;
    }
    let scenario = cfg.scenario.name();
    let mu = cfg.mu_grid[0];
    let mut table = ResultTable::default();

    for &epsilon in &cfg.epsilon_grid {
        for &n in &n_grid {
            let lambda = resolve_lambda(cfg, n, cfg.r);
            let tasks: Vec<RunParams> = (0..cfg.reps)
                .map(|rep| {
                    let mut params = base_params(cfg);
                    params.n = n;
                    params.mu = mu;
                    params.epsilon = epsilon;
                    params.lambda = lambda;
                    params.seed = rep_seed(cfg.seed, rep);
                    params
                })
                .collect();
            let runs = run_batch(tasks)?;
            let plus = cfg.plus_variants[0];
            let mut powers = Vec::new();
            for run in &runs {
                powers.push(select_and_eval(run, cfg.q, plus, None)?.power);
            }
            let (pm, pse, count) = mean_se(&powers);

            let (theory_power, t_used) = theory_power_at(cfg, n, mu, epsilon, lambda)?;
            let nf = n as f64;
            for (metric, value) in [
                ("mean_power", pm),
                ("se_power", pse),
                ("count", count as f64),
                ("theory_power", theory_power),
                ("theory_threshold", t_used),
                (
                    "log_power_ratio",
                    if pm > 0.0 && theory_power > 0.0 {
                        (pm / theory_power).ln()
                    } else {
                        f64::NAN
                    },
                ),
                ("n", nf),
            ] {
                table.push(
                    scenario,
                    0,
                    epsilon,
                    mu,
                    cfg.q,
                    "jlt-knockoff",
                    metric,
                    value,
                );
            }
        }
    }
    Ok(table)
}

/// Theoretical power and the threshold behind it, in data units.
fn theory_power_at(
    cfg: &ExperimentConfig,
    n: usize,
    mu: f64,
    epsilon: f64,
    lambda: f64,
) -> Result<(f64, f64), HarnessError> {
    let (sigma_rho, _w) = privacy_scales(cfg, n, mu, epsilon)?;
    let problem = threshold_problem(cfg, n, mu, epsilon, lambda, sigma_rho)?;
    let t_used = match cfg.fixed_t {
        Some(t) => t,
        None => theory::solve_threshold(&problem)?,
    };
    let solver = ThresholdSolver::new(&problem)?;
    Ok((solver.beta(t_used), t_used))
}

fn privacy_scales(
    cfg: &ExperimentConfig,
    n: usize,
    mu: f64,
    epsilon: f64,
) -> Result<(f64, f64), HarnessError> {
    let budget = PrivacyBudget::new(epsilon, cfg.delta)?;
    let value = if cfg.normalize_signal && cfg.s0 > 0 {
        1.0 / (cfg.s0 as f64).sqrt()
    } else {
        mu
    };
    let noise_spec = NoiseSpec::with_default_truncation(cfg.sigma, n)?;
    let bound = analytic_row_bound(&BoundParams {
        b: 1.0,
        p: cfg.p,
        theta0_l1: value.abs() * cfg.s0 as f64,
        b_n: noise_spec.truncation,
    });
    let w = crate::privacy::compute_w(bound, &budget, cfg.r)?;
    Ok((cfg.sigma * crate::debias::rho_n(n, cfg.r, w), w))
}

fn threshold_problem(
    cfg: &ExperimentConfig,
    n: usize,
    mu: f64,
    epsilon: f64,
    lambda: f64,
    sigma_rho: f64,
) -> Result<ThresholdProblem, HarnessError> {
    let value = if cfg.normalize_signal && cfg.s0 > 0 {
        1.0 / (cfg.s0 as f64).sqrt()
    } else {
        mu
    };
    let (_, w) = privacy_scales(cfg, n, mu, epsilon)?;
    let family = match cfg.family {
        FamilyKind::Lcd => StatisticFamily::lcd(lambda, w, n),
        FamilyKind::AbsDebiased => StatisticFamily::abs_debiased(),
    };
    if cfg.s0 == 0 || cfg.s0 >= cfg.p {
        return Err(HarnessError::Invalid(
            "theory projections need 0 < s0 < p".into(),
        ));
    }
    Ok(ThresholdProblem {
        q: cfg.q,
        mu: value,
        lambda,
        c0: cfg.s0 as f64 / cfg.p as f64,
        sigma_rho,
        family,
        p: cfg.p,
        n_mc: cfg.theory_mc,
        seed: cfg.seed,
    })
}

/// Power against FDP across privacy budgets, with shared seeds so the
/// curves are directly comparable.
fn scenario_tradeoff(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    check_memory(cfg, cfg.n)?;
    let scenario = cfg.scenario.name();
    let mu = cfg.mu_grid[0];
    let lambda = resolve_lambda(cfg, cfg.n, cfg.r);
    let plus = cfg.plus_variants[0];
    let mut table = ResultTable::default();

    for &epsilon in &cfg.epsilon_grid {
        let tasks: Vec<RunParams> = (0..cfg.reps)
            .map(|rep| {
                let mut params = base_params(cfg);
                params.mu = mu;
                params.epsilon = epsilon;
                params.lambda = lambda;
                params.seed = rep_seed(cfg.seed, rep);
                params
            })
            .collect();
        let runs = run_batch(tasks)?;
        for &q in &cfg.q_grid {
            let mut powers = Vec::new();
            let mut fdps = Vec::new();
            for run in &runs {
                let sel = select_and_eval(run, q, plus, None)?;
                powers.push(sel.power);
                fdps.push(sel.fdp);
            }
            let (pm, pse, count) = mean_se(&powers);
            let (fm, _, _) = mean_se(&fdps);
            for (metric, value) in [
                ("mean_power", pm),
                ("se_power", pse),
                ("mean_fdp", fm),
                ("count", count as f64),
            ] {
                table.push(scenario, 0, epsilon, mu, q, "jlt-knockoff+", metric, value);
            }
        }
    }
    Ok(table)
}

/// Projection mechanism against the Gaussian second-moment baseline across
/// sample sizes, with the three power-accounting conventions for the
/// baseline's failure modes.
fn scenario_mechanism_compare(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let n_grid = if cfg.n_grid.is_empty() {
        vec![cfg.n]
    } else {
        cfg.n_grid.clone()
    };
    for &n in &n_grid {
        check_memory(cfg, n)?;
    }
    let scenario = cfg.scenario.name();
    let mu = cfg.mu_grid[0];
    let epsilon = cfg.epsilon_grid[0];
    let plus = cfg.plus_variants[0];
    let mut table = ResultTable::default();

    for &n in &n_grid {
        let lambda = resolve_lambda(cfg, n, cfg.r);
        for mechanism in [MechanismKind::Jlt, MechanismKind::Gaussian] {
            if !cfg.mechanisms.contains(&mechanism) {
                continue;
            }
            let tasks: Vec<RunParams> = (0..cfg.reps)
                .map(|rep| {
                    let mut params = base_params(cfg);
                    params.n = n;
                    params.mu = mu;
                    params.epsilon = epsilon;
                    params.lambda = lambda;
                    params.mechanism = mechanism;
                    params.seed = rep_seed(cfg.seed, rep);
                    params
                })
                .collect();
            let runs = run_batch(tasks)?;
            let mut powers = Vec::new();
            let mut usable = Vec::new(); // PSD and converged
            let mut converged = Vec::new();
            for run in &runs {
                let sel = select_and_eval(run, cfg.q, plus, None)?;
                powers.push(sel.power);
                usable.push(run.psd && run.converged);
                converged.push(run.converged);
            }
            let nf = n as f64;
            match mechanism {
                MechanismKind::Jlt => {
                    let (pm, pse, count) = mean_se(&powers);
                    for (metric, value) in [
                        ("mean_power", pm),
                        ("se_power", pse),
                        ("count", count as f64),
                        ("n", nf),
                    ] {
                        table.push(scenario, 0, epsilon, mu, cfg.q, "jlt", metric, value);
                    }
                }
                MechanismKind::Gaussian => {
                    // G1: failures count as zero power
                    let g1: Vec<f64> = powers
                        .iter()
                        .zip(&usable)
                        .map(|(&p, &ok)| if ok { p } else { 0.0 })
                        .collect();
                    // G2: every run counts as-is
                    let g2 = powers.clone();
                    // G3: converged runs only
                    let g3: Vec<f64> = powers
                        .iter()
                        .zip(&converged)
                        .filter(|(_, &ok)| ok)
                        .map(|(&p, _)| p)
                        .collect();
                    for (method, values) in [
                        ("gaussian-g1", &g1),
                        ("gaussian-g2", &g2),
                        ("gaussian-g3", &g3),
                    ] {
                        let (pm, pse, count) = mean_se(values);
                        for (metric, value) in [
                            ("mean_power", pm),
                            ("se_power", pse),
                            ("count", count as f64),
                            ("n", nf),
                        ] {
                            table.push(scenario, 0, epsilon, mu, cfg.q, method, metric, value);
                        }
                    }
                    let non_psd_rate =
                        usable.iter().filter(|&&ok| !ok).count() as f64 / usable.len() as f64;
                    table.push(
                        scenario,
                        0,
                        epsilon,
                        mu,
                        cfg.q,
                        "gaussian",
                        "non_psd_rate",
                        non_psd_rate,
                    );
                    table.push(scenario, 0, epsilon, mu, cfg.q, "gaussian", "n", nf);
                }
                MechanismKind::NonPrivate => {}
            }
        }
    }
    Ok(table)
}

/// Theory rows matching an empirical grid: solved (or fixed) thresholds and
/// the power/FDP limits at them, in both the data parameterization and the
/// unit (noise-scale) parameterization.
pub fn theory_overlay(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let scenario = cfg.scenario.name();
    let mut table = ResultTable::default();
    let lambda = resolve_lambda(cfg, cfg.n, cfg.r);
    let c0 = cfg.s0 as f64 / cfg.p as f64;
    for &epsilon in &cfg.epsilon_grid {
        for &mu in &cfg.mu_grid {
            let (sigma_rho, w) = privacy_scales(cfg, cfg.n, mu, epsilon)?;
            let problem = threshold_problem(cfg, cfg.n, mu, epsilon, lambda, sigma_rho)?;
            let t_used = match cfg.fixed_t {
                Some(t) => t,
                None => theory::solve_threshold(&problem)?,
            };
            let solver = ThresholdSolver::new(&problem)?;
            for (metric, value) in [
                ("threshold", t_used),
                ("power", solver.beta(t_used)),
                ("fdp", solver.alpha(t_used)),
                ("fdp_hat", solver.ratio(t_used)),
                ("sigma_rho", sigma_rho),
                ("lambda", lambda),
                ("w", w),
            ] {
                table.push(scenario, 0, epsilon, mu, cfg.q, "theory", metric, value);
            }

            // unit parameterization: everything in sigma*rho_n units
            if t_used.is_finite() && sigma_rho > 0.0 {
                let family = match cfg.family {
                    FamilyKind::Lcd => StatisticFamily::lcd(lambda, w, cfg.n),
                    FamilyKind::AbsDebiased => StatisticFamily::abs_debiased(),
                };
                let mut inputs =
                    TheoryInputs::new(problem.mu / sigma_rho, t_used / sigma_rho, c0, family);
                inputs.scale = match cfg.family {
                    FamilyKind::Lcd => lambda / sigma_rho,
                    FamilyKind::AbsDebiased => 1.0,
                };
                inputs.n_mc = cfg.theory_mc;
                inputs.seed = cfg.seed;
                let beta = theory::mc_beta(&inputs)?;
                let alpha = theory::mc_alpha(&inputs)?;
                let alpha_hat = theory::mc_alpha_hat(&inputs)?;
                for (metric, value) in [
                    ("power", beta.value),
                    ("se_power", beta.std_error),
                    ("fdp", alpha.value),
                    ("se_fdp", alpha.std_error),
                    ("fdp_hat", alpha_hat.value),
                    ("se_fdp_hat", alpha_hat.std_error),
                ] {
                    table.push(
                        scenario,
                        0,
                        epsilon,
                        mu,
                        cfg.q,
                        "theory-unit",
                        metric,
                        value,
                    );
                }
            }
        }
    }
    Ok(table)
}

/// Real-data workflow: repeated private selection on a CSV dataset, with
/// per-variable selection frequencies.
#[derive(Debug)]
pub struct RealDataReport {
    pub table: ResultTable,
    pub warnings: Vec<String>,
    pub inferred_bound: f64,
    pub n: usize,
    pub p: usize,
}

pub fn real_data_run(
    csv_path: impl AsRef<Path>,
    cfg: &ExperimentConfig,
) -> Result<RealDataReport, HarnessError> {
    let policy = if cfg.drop_constant_columns {
        ConstantColumnPolicy::Drop
    } else {
        ConstantColumnPolicy::Error
    };
    let data = load_csv(&csv_path, &cfg.response_column, policy, BoundPolicy::Infer)?;
    let (n, p) = (data.n(), data.p());
    check_memory_real(cfg, n, p)?;
    let law = match cfg.knockoff_law.as_str() {
        "rademacher" => DesignDistribution::rademacher(),
        "uniform" => DesignDistribution::truncated_uniform(),
        other => {
            return Err(HarnessError::Invalid(format!(
                "unknown knockoff law {other:?}"
            )))
        }
    };
    // one bound covering every knockoff draw: knockoff entries are bounded
    // by the law, the data part is whatever it is
    let bk = law.effective_bound();
    let mut bound: f64 = 0.0;
    for i in 0..n {
        let xs: f64 = data.x.row(i).iter().map(|v| v * v).sum();
        bound = bound.max((xs + data.y[i] * data.y[i] + p as f64 * bk * bk).sqrt());
    }
    let warnings = vec![
        "real-data mode: the row bound is inferred from the data itself, which is a \
         privacy leak the release does not account for"
            .to_owned(),
        "real-data mode: knockoff validity assumes the configured entry law actually \
         generated the design"
            .to_owned(),
    ];
    let lambda = cfg
        .lambda
        .unwrap_or_else(|| default_lambda(cfg.sigma, n, (2 * p).max(2), cfg.r, cfg.c_lambda));
    let plus = cfg.plus_variants[0];
    let scenario = "real-data";
    let mut table = ResultTable::default();

    for &mechanism in &cfg.mechanisms {
        let epsilons: Vec<f64> = if mechanism == MechanismKind::NonPrivate {
            vec![f64::INFINITY]
        } else {
            cfg.epsilon_grid.clone()
        };
        for &epsilon in &epsilons {
            let reps: Vec<RealDataRep> = (0..cfg.reps)
                .map(|rep| {
                    real_data_rep(
                        &data,
                        &law,
                        bound,
                        lambda,
                        cfg,
                        mechanism,
                        epsilon,
                        rep_seed(cfg.seed, rep),
                        plus,
                    )
                })
                .collect::<Result<_, _>>()?;
            let method = mechanism.name();
            let mut freq = vec![0usize; p];
            let mut non_psd = 0usize;
            for (rep_idx, rep) in reps.iter().enumerate() {
                for &j in &rep.selected {
                    freq[j] += 1;
                }
                if !rep.psd {
                    non_psd += 1;
                }
                let seed = rep_seed(cfg.seed, rep_idx);
                table.push(
                    scenario,
                    seed,
                    epsilon,
                    f64::NAN,
                    cfg.q,
                    method,
                    "t_hat",
                    rep.t_hat,
                );
                table.push(
                    scenario,
                    seed,
                    epsilon,
                    f64::NAN,
                    cfg.q,
                    method,
                    "k_selected",
                    rep.selected.len() as f64,
                );
            }
            for (j, &count) in freq.iter().enumerate() {
                table.push(
                    scenario,
                    0,
                    epsilon,
                    f64::NAN,
                    cfg.q,
                    method,
                    &format!("freq[{j}]"),
                    count as f64 / cfg.reps as f64,
                );
            }
            if mechanism == MechanismKind::Gaussian {
                table.push(
                    scenario,
                    0,
                    epsilon,
                    f64::NAN,
                    cfg.q,
                    method,
                    "non_psd_rate",
                    non_psd as f64 / cfg.reps as f64,
                );
            }
        }
    }
    Ok(RealDataReport {
        table,
        warnings,
        inferred_bound: bound,
        n,
        p,
    })
}

struct RealDataRep {
    selected: Vec<usize>,
    t_hat: f64,
    psd: bool,
}

#[allow(clippy::too_many_arguments)]
fn real_data_rep(
    data: &Dataset,
    law: &DesignDistribution,
    bound: f64,
    lambda: f64,
    cfg: &ExperimentConfig,
    mechanism: MechanismKind,
    epsilon: f64,
    seed: u64,
    plus: bool,
) -> Result<RealDataRep, HarnessError> {
    let (n, p) = (data.n(), data.p());
    let knockoffs = sample_knockoffs(n, p, law, seed)?;
    let augmented = AugmentedMatrix::augment(&data.x, &knockoffs, &data.y)?;
    let mut cfg_solver = SolverConfig::new(lambda);
    cfg_solver.tol = cfg.solver_tol;
    cfg_solver.max_iters = cfg.max_iters;
    let n_scale = n as f64;

    let (theta_u, w_aug, psd);
    match mechanism {
        MechanismKind::Jlt => {
            let budget = PrivacyBudget::new(epsilon, cfg.delta)?;
            let private = if use_sketch(cfg.projection, n, augmented.ncols()) {
                jlt_privatize_sketch(&augmented, &budget, cfg.r, bound, seed)?
            } else {
                jlt_privatize(
                    &augmented,
                    &budget,
                    cfg.r,
                    bound,
                    seed,
                    &JltOptions::default(),
                )?
            };
            let design_star = private.design();
            let sol = lasso_data(&design_star, &private.ystar, n_scale, &cfg_solver)?;
            let est = debias::debias(
                &sol.theta,
                &design_star,
                &private.ystar,
                private.params.w,
                n,
                SigmaEstimate::NaiveResidual,
            )?;
            theta_u = est.theta_u;
            w_aug = private.params.w;
            psd = true;
        }
        MechanismKind::Gaussian => {
            let budget = PrivacyBudget::new(epsilon, cfg.delta)?;
            let moments = gaussian_privatize_moments(&augmented, &budget, bound, seed)?;
            let eig = symmetric_eigenvalues(&moments.gram);
            psd = eig[0] >= -1e-10 * moments.gram.max_abs().max(1.0);
            let sol = lasso_gram(&moments.gram, &moments.xty, n_scale, &cfg_solver)?;
            let gt = moments.gram.matvec(&sol.theta);
            theta_u = sol
                .theta
                .iter()
                .zip(moments.xty.iter().zip(&gt))
                .map(|(&t, (&c, &g))| t + (c - g) / n_scale)
                .collect();
            w_aug = 0.0;
        }
        MechanismKind::NonPrivate => {
            let design = data.x.hcat(&knockoffs);
            let sol = lasso_data(&design, &data.y, n_scale, &cfg_solver)?;
            let est = debias::debias(
                &sol.theta,
                &design,
                &data.y,
                0.0,
                n,
                SigmaEstimate::NaiveResidual,
            )?;
            theta_u = est.theta_u;
            w_aug = 0.0;
            psd = true;
        }
    }
    let family = match cfg.family {
        FamilyKind::Lcd => StatisticFamily::lcd(lambda, w_aug, n),
        FamilyKind::AbsDebiased => StatisticFamily::abs_debiased(),
    };
    let w = filter::feature_statistics(&theta_u, &family)?;
    let t_hat = filter::knockoff_threshold(&w, cfg.q, plus)?;
    let selected = filter::select(&w, t_hat);
    Ok(RealDataRep {
        selected,
        t_hat,
        psd,
    })
}

fn check_memory_real(cfg: &ExperimentConfig, n: usize, p: usize) -> Result<(), HarnessError> {
    let estimated = estimate_memory_bytes(n, p, cfg.r);
    if estimated > cfg.memory_limit_bytes {
        return Err(HarnessError::Memory {
            estimated_mb: estimated >> 20,
            limit_mb: cfg.memory_limit_bytes >> 20,
        });
    }
    Ok(())
}

/// Plain-text run manifest: configuration echo plus environment notes.
pub fn write_manifest(
    path: impl AsRef<Path>,
    raw: &RawConfig,
    extra: &[String],
) -> Result<(), HarnessError> {
    let mut out = String::new();
    out.push_str(&format!(
        "tool = {} {}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    ));
    out.push_str("format = result-table csv v1\n\n");
    out.push_str(&raw.to_text());
    if !extra.is_empty() {
        out.push('\n');
        for line in extra {
            out.push_str(&format!("note = {line}\n"));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
