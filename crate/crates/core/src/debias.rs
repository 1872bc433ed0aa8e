//! Debiasing of the private lasso estimate.
//!
//! The one-step correction
//! `theta_u = theta* + (1/n) X*^T (y* - X* theta*) + (w^2/n) theta*`
//! undoes both the l1 shrinkage and the ridge effect of the appended `w I`
//! block. Two exact identities anchor the implementation and its tests: the
//! soft-threshold map `eta` recovers `theta*` from `theta_u` coordinate-wise,
//! and (in debug mode, with the projection retained) `theta_u` decomposes as
//! `theta0 + Z + Delta` with both routes to `Delta` agreeing to rounding.

use crate::linalg::{axpy, norm_inf, Mat};
use crate::privacy::PrivatizedData;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DebiasError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("missing debug data: {0}")]
    MissingDebugData(&'static str),
}

/// How the noise scale is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaEstimate {
    /// Simulation mode: the configured true sigma.
    Oracle(f64),
    /// `sqrt(|y* - X* theta*|^2 / (n (1 + w^2/n)))`.
    NaiveResidual,
}

#[derive(Debug, Clone)]
pub struct DebiasedEstimate {
    pub theta_u: Vec<f64>,
    pub rho_n: f64,
    pub sigma_hat: f64,
    pub w: f64,
    pub n: usize,
    pub r: usize,
}

/// `rho_n^2 = (n + r + 1)/(n r) + w^2/(n r)`, the noise scale of the
/// debiased coordinates.
pub fn rho_n(n: usize, r: usize, w: f64) -> f64 {
    let (nf, rf) = (n as f64, r as f64);
    (((nf + rf + 1.0) / (nf * rf)) + w * w / (nf * rf)).sqrt()
}

/// Soft-threshold map recovering the lasso solution from the debiased one:
/// `eta(x) = sign(x) (|x| - lambda)_+ / (1 + w^2/n)`.
pub fn eta(x: f64, lambda: f64, w: f64, n: usize) -> f64 {
    let shrink = 1.0 + w * w / n as f64;
    x.signum() * (x.abs() - lambda).max(0.0) / shrink
}

/// `eta` applied coordinate-wise.
pub fn eta_vec(theta_u: &[f64], lambda: f64, w: f64, n: usize) -> Vec<f64> {
    theta_u.iter().map(|&x| eta(x, lambda, w, n)).collect()
}

/// Residual-based noise estimate (or the oracle value in simulation mode).
pub fn estimate_sigma(
    mode: &SigmaEstimate,
    design_star: &Mat,
    ystar: &[f64],
    theta_star: &[f64],
    w: f64,
    n: usize,
) -> f64 {
    match mode {
        SigmaEstimate::Oracle(sigma) => *sigma,
        SigmaEstimate::NaiveResidual => {
            let mut resid = design_star.matvec(theta_star);
            for (ri, yi) in resid.iter_mut().zip(ystar) {
                *ri = yi - *ri;
            }
            let ss: f64 = resid.iter().map(|v| v * v).sum();
            let nf = n as f64;
            (ss / (nf * (1.0 + w * w / nf))).sqrt().max(f64::EPSILON)
        }
    }
}

/// One-step debiased estimate from a solved private lasso.
///
/// `design_star` is the full privatized design the lasso ran on (`r x p` or
/// `r x 2p`); `n` is the original sample size, not `r`.
pub fn debias(
    theta_star: &[f64],
    design_star: &Mat,
    ystar: &[f64],
    w: f64,
    n: usize,
    sigma: SigmaEstimate,
) -> Result<DebiasedEstimate, DebiasError> {
    let d = design_star.ncols();
    let r = design_star.nrows();
    if theta_star.len() != d {
        return Err(DebiasError::DimensionMismatch(format!(
            "theta has length {}, design has {d} columns",
            theta_star.len()
        )));
    }
    if ystar.len() != r {
        return Err(DebiasError::DimensionMismatch(format!(
            "ystar has length {}, design has {r} rows",
            ystar.len()
        )));
    }
    let mut resid = design_star.matvec(theta_star);
    for (ri, yi) in resid.iter_mut().zip(ystar) {
        *ri = yi - *ri;
    }
    let correction = design_star.matvec_t(&resid);
    let nf = n as f64;
    let ridge = w * w / nf;
    let theta_u: Vec<f64> = theta_star
        .iter()
        .zip(&correction)
        .map(|(&t, &c)| t + c / nf + ridge * t)
        .collect();
    let sigma_hat = estimate_sigma(&sigma, design_star, ystar, theta_star, w, n);
    Ok(DebiasedEstimate {
        theta_u,
        rho_n: rho_n(n, r, w),
        sigma_hat,
        w,
        n,
        r,
    })
}

/// Exact decomposition `theta_u = theta0 + Z + Delta`, with `Delta`
/// evaluated both as the residual and through its explicit expression.
#[derive(Debug, Clone)]
pub struct DecompositionReport {
    pub z: Vec<f64>,
    /// `theta_u - theta0 - Z`.
    pub delta: Vec<f64>,
    /// The same quantity assembled term by term from `(X, R, theta*)`.
    pub delta_explicit: Vec<f64>,
    /// `|theta_u - theta0 - Z - delta_explicit|_inf`.
    pub max_identity_residual: f64,
    /// `|delta - delta_explicit|_inf`.
    pub route_discrepancy: f64,
    /// `|delta|_inf / (sigma rho_n)`.
    pub delta_to_noise_ratio: f64,
}

/// Requires the plain (knockoff-free) privatized path with the projection
/// retained, plus the simulation ground truth `(theta0, xi)`.
pub fn decompose_exact(
    estimate: &DebiasedEstimate,
    theta0: &[f64],
    theta_star: &[f64],
    x: &Mat,
    privatized: &PrivatizedData,
    xi: &[f64],
    sigma: f64,
) -> Result<DecompositionReport, DebiasError> {
    let projection = privatized
        .projection
        .as_ref()
        .ok_or(DebiasError::MissingDebugData(
            "projection matrix not retained",
        ))?;
    if privatized.xtildestar.is_some() {
        return Err(DebiasError::MissingDebugData(
            "decomposition applies to the knockoff-free path",
        ));
    }
    let n = x.nrows();
    let p = x.ncols();
    let r = privatized.params.r;
    let w = privatized.params.w;
    if projection.ncols() != n + p + 1 || theta0.len() != p || xi.len() != n {
        return Err(DebiasError::DimensionMismatch(
            "decomposition inputs do not line up".into(),
        ));
    }
    let nf = n as f64;

    // Z = (1/n) X*^T R_1 xi
    let r1_xi: Vec<f64> = (0..r)
        .map(|k| crate::linalg::dot(&projection.row(k)[..n], xi))
        .collect();
    let mut z = privatized.xstar.matvec_t(&r1_xi);
    z.iter_mut().for_each(|v| *v /= nf);

    let delta: Vec<f64> = (0..p)
        .map(|j| estimate.theta_u[j] - theta0[j] - z[j])
        .collect();

    // ((1/n) X^T X - I)(theta0 - theta*)
    let diff: Vec<f64> = theta0.iter().zip(theta_star).map(|(a, b)| a - b).collect();
    let xdiff = x.matvec(&diff);
    let mut first = x.matvec_t(&xdiff);
    for (f, s) in first.iter_mut().zip(&diff) {
        *f = *f / nf - s;
    }

    // (1/n) [X^T  w I  0] (R^T R - I) v,  v = [X diff; -w theta*; w]
    let mut v = Vec::with_capacity(n + p + 1);
    v.extend_from_slice(&xdiff);
    v.extend(theta_star.iter().map(|t| -w * t));
    v.push(w);
    let rv = projection.matvec(&v);
    let mut t = projection.matvec_t(&rv);
    for (ti, vi) in t.iter_mut().zip(&v) {
        *ti -= vi;
    }
    let mut second = x.matvec_t(&t[..n]);
    axpy(&mut second, w, &t[n..n + p]);

    let delta_explicit: Vec<f64> = (0..p).map(|j| first[j] + second[j] / nf).collect();

    let max_identity_residual = (0..p)
        .map(|j| (estimate.theta_u[j] - theta0[j] - z[j] - delta_explicit[j]).abs())
        .fold(0.0f64, f64::max);
    let route_discrepancy = (0..p)
        .map(|j| (delta[j] - delta_explicit[j]).abs())
        .fold(0.0f64, f64::max);
    let delta_to_noise_ratio = norm_inf(&delta) / (sigma * estimate.rho_n);

    Ok(DecompositionReport {
        z,
        delta,
        delta_explicit,
        max_identity_residual,
        route_discrepancy,
        delta_to_noise_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knockoff::AugmentedMatrix;
    use crate::model::{
        generate_design, sample_noise, synthesize, DesignDistribution, ModelSpec, NoiseSpec,
    };
    use crate::privacy::{jlt_privatize, JltOptions, PrivacyBudget, ProjectionKind};
    use crate::solver::{lasso_data, SolverConfig};

    #[test]
    fn rho_n_examples() {
        let rho = rho_n(1000, 500, 0.0);
        assert!((rho * rho - 0.003002).abs() < 1e-12);

        // n -> infinity at fixed r: rho^2 -> 1/r
        let rho = rho_n(1_000_000_000, 500, 0.0);
        assert!((rho * rho - 1.0 / 500.0).abs() / (1.0 / 500.0) < 1e-5);

        assert!(rho_n(100, 50, 2.0) > rho_n(100, 50, 1.0));
        assert!(rho_n(100, 50, 1.0) > rho_n(100, 50, 0.0));
    }

    #[test]
    fn eta_examples() {
        assert_eq!(eta(0.0, 0.1, 0.0, 10), 0.0);
        assert!((eta(0.3, 0.1, 0.0, 10) - 0.2).abs() < 1e-15);
        // w^2/n = 1 halves the thresholded value
        let n = 16;
        let w = 4.0;
        assert!((eta(-0.3, 0.1, w, n) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn debias_is_identity_at_zero_residual() {
        // Square invertible design, exact OLS solution, no privatization.
        let x = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let y = vec![1.0, 2.0];
        // solve X theta = y exactly
        let det = 2.0 * 3.0 - 1.0 * 1.0;
        let theta = vec![
            (3.0 * y[0] - 1.0 * y[1]) / det,
            (2.0 * y[1] - 1.0 * y[0]) / det,
        ];
        let est = debias(&theta, &x, &y, 0.0, 2, SigmaEstimate::Oracle(1.0)).unwrap();
        for (u, t) in est.theta_u.iter().zip(&theta) {
            assert!((u - t).abs() < 1e-12);
        }
    }

    #[test]
    fn debias_matches_independent_formula() {
        let design = Mat::from_fn(9, 4, |i, j| ((i * 4 + j) as f64 * 0.31).sin());
        let ystar: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).cos()).collect();
        let theta = vec![0.4, 0.0, -0.2, 0.1];
        let (w, n) = (1.5, 25usize);
        let est = debias(&theta, &design, &ystar, w, n, SigmaEstimate::Oracle(1.0)).unwrap();
        // second implementation: entry-wise sums in a different order
        for j in 0..4 {
            let mut corr = 0.0;
            for k in 0..9 {
                let mut pred = 0.0;
                for l in 0..4 {
                    pred += design[(k, l)] * theta[l];
                }
                corr += design[(k, j)] * (ystar[k] - pred);
            }
            let want = theta[j] + corr / n as f64 + w * w / n as f64 * theta[j];
            assert!((est.theta_u[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_recovers_lasso_solution_on_private_run() {
        let spec = ModelSpec::equal_signal(120, 6, 2, 0.0, true, 3).unwrap();
        let dist = DesignDistribution::rademacher();
        let design = generate_design(120, 6, &dist, 4).unwrap();
        let noise_spec = NoiseSpec::with_default_truncation(0.5, 120).unwrap();
        let noise = sample_noise(120, &noise_spec, 5).unwrap();
        let data = synthesize(spec, design, noise).unwrap();
        let a = AugmentedMatrix::without_knockoffs(&data.x, &data.y).unwrap();
        let bound = crate::model::empirical_row_bound(&data.x, None, &data.y);
        let budget = PrivacyBudget::new(4.0, 0.01).unwrap();
        let private = jlt_privatize(&a, &budget, 80, bound, 6, &JltOptions::default()).unwrap();
        let design_star = private.design();
        let mut cfg = SolverConfig::new(0.05);
        cfg.tol = 1e-13;
        let sol = lasso_data(&design_star, &private.ystar, 120.0, &cfg).unwrap();
        assert!(sol.converged);
        let est = debias(
            &sol.theta,
            &design_star,
            &private.ystar,
            private.params.w,
            120,
            SigmaEstimate::NaiveResidual,
        )
        .unwrap();
        let recovered = eta_vec(&est.theta_u, cfg.lambda, private.params.w, 120);
        for (a, b) in recovered.iter().zip(&sol.theta) {
            assert!((a - b).abs() <= 1e-9, "eta map mismatch: {a} vs {b}");
        }
    }

    #[test]
    fn decomposition_zero_case() {
        // xi = 0, theta* = theta0, identity projection, w = 0.
        let spec = ModelSpec::new(6, 2, vec![0.5, -0.25]).unwrap();
        let x = Mat::from_fn(6, 2, |i, j| if (i + j) % 2 == 0 { 1.0 } else { -1.0 });
        let data = synthesize(spec.clone(), x.clone(), vec![0.0; 6]).unwrap();
        let a = AugmentedMatrix::without_knockoffs(&data.x, &data.y).unwrap();
        let budget = PrivacyBudget::new(1.0, 0.01).unwrap();
        let opts = JltOptions {
            projection: ProjectionKind::IdentityDebug,
            override_w: Some(0.0),
            retain_projection: true,
            ..Default::default()
        };
        let private = jlt_privatize(&a, &budget, 6 + 3, 100.0, 0, &opts).unwrap();
        let est = debias(
            &spec.theta0,
            &private.design(),
            &private.ystar,
            0.0,
            6,
            SigmaEstimate::Oracle(1.0),
        )
        .unwrap();
        let report = decompose_exact(
            &est,
            &spec.theta0,
            &spec.theta0,
            &data.x,
            &private,
            &[0.0; 6],
            1.0,
        )
        .unwrap();
        assert!(norm_inf(&report.z) < 1e-14);
        assert!(norm_inf(&report.delta) < 1e-12);
        assert!(report.max_identity_residual < 1e-12);
    }

    #[test]
    fn decomposition_identity_on_random_instance() {
        let n = 150;
        let p = 8;
        let spec = ModelSpec::equal_signal(n, p, 3, 0.4, false, 9).unwrap();
        let dist = DesignDistribution::rademacher();
        let design = generate_design(n, p, &dist, 10).unwrap();
        let noise_spec = NoiseSpec::with_default_truncation(1.0, n).unwrap();
        let noise = sample_noise(n, &noise_spec, 11).unwrap();
        let theta_l1: f64 = spec.theta0.iter().map(|v| v.abs()).sum();
        let data = synthesize(spec.clone(), design, noise.clone()).unwrap();
        let a = AugmentedMatrix::without_knockoffs(&data.x, &data.y).unwrap();
        let bound = crate::model::analytic_row_bound(&crate::model::BoundParams {
            b: 1.0,
            p,
            theta0_l1: theta_l1,
            b_n: noise_spec.truncation,
        });
        let budget = PrivacyBudget::new(6.0, 0.01).unwrap();
        let opts = JltOptions {
            retain_projection: true,
            ..Default::default()
        };
        let private = jlt_privatize(&a, &budget, 100, bound, 12, &opts).unwrap();
        let design_star = private.design();
        let mut cfg = SolverConfig::new(0.08);
        cfg.tol = 1e-13;
        let sol = lasso_data(&design_star, &private.ystar, n as f64, &cfg).unwrap();
        let est = debias(
            &sol.theta,
            &design_star,
            &private.ystar,
            private.params.w,
            n,
            SigmaEstimate::Oracle(1.0),
        )
        .unwrap();
        let report = decompose_exact(
            &est,
            &spec.theta0,
            &sol.theta,
            &data.x,
            &private,
            &noise,
            1.0,
        )
        .unwrap();
        let scale = 1.0f64.max(norm_inf(&est.theta_u));
        assert!(
            report.max_identity_residual <= 1e-8 * scale,
            "identity residual {}",
            report.max_identity_residual
        );
        assert!(
            report.route_discrepancy <= 1e-6,
            "routes differ: {}",
            report.route_discrepancy
        );
    }

    #[test]
    fn decompose_requires_debug_data() {
        let x = Mat::from_fn(10, 2, |i, j| if (i + j) % 2 == 0 { 1.0 } else { -1.0 });
        let y = vec![0.0; 10];
        let a = AugmentedMatrix::without_knockoffs(&x, &y).unwrap();
        let budget = PrivacyBudget::new(1.0, 0.01).unwrap();
        let private = jlt_privatize(&a, &budget, 8, 10.0, 0, &JltOptions::default()).unwrap();
        let est = debias(
            &[0.0, 0.0],
            &private.design(),
            &private.ystar,
            private.params.w,
            10,
            SigmaEstimate::Oracle(1.0),
        )
        .unwrap();
        assert!(matches!(
            decompose_exact(&est, &[0.0, 0.0], &[0.0, 0.0], &x, &private, &y, 1.0),
            Err(DebiasError::MissingDebugData(_))
        ));
    }

    #[test]
    fn sigma_estimates() {
        assert_eq!(
            estimate_sigma(
                &SigmaEstimate::Oracle(1.0),
                &Mat::zeros(1, 1),
                &[0.0],
                &[0.0],
                0.0,
                1
            ),
            1.0
        );

        // theta* = theta0 exact, identity projection, w = 0:
        // the residual estimator returns |xi| / sqrt(n)
        let n = 400;
        let spec = ModelSpec::equal_signal(n, 3, 1, 0.5, false, 21).unwrap();
        let x = generate_design(n, 3, &DesignDistribution::rademacher(), 22).unwrap();
        let noise_spec = NoiseSpec::with_default_truncation(1.0, n).unwrap();
        let xi = sample_noise(n, &noise_spec, 23).unwrap();
        let data = synthesize(spec.clone(), x, xi.clone()).unwrap();
        let a = AugmentedMatrix::without_knockoffs(&data.x, &data.y).unwrap();
        let budget = PrivacyBudget::new(1.0, 0.01).unwrap();
        let opts = JltOptions {
            projection: ProjectionKind::IdentityDebug,
            override_w: Some(0.0),
            ..Default::default()
        };
        let private = jlt_privatize(&a, &budget, n + 4, 100.0, 0, &opts).unwrap();
        let got = estimate_sigma(
            &SigmaEstimate::NaiveResidual,
            &private.design(),
            &private.ystar,
            &spec.theta0,
            0.0,
            n,
        );
        let want = (xi.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        assert!((got - want).abs() < 1e-12);
        // and that value sits near the truncated sd
        assert!((got - noise_spec.truncated_variance().sqrt()).abs() < 0.15);
    }

    #[test]
    fn residual_sigma_close_on_well_specified_private_run() {
        let n = 5000;
        let p = 12;
        let sigma = 1.0;
        let spec = ModelSpec::equal_signal(n, p, 3, 0.0, true, 41).unwrap();
        let x = generate_design(n, p, &DesignDistribution::rademacher(), 42).unwrap();
        let noise_spec = NoiseSpec::with_default_truncation(sigma, n).unwrap();
        let xi = sample_noise(n, &noise_spec, 43).unwrap();
        let theta_l1: f64 = spec.theta0.iter().map(|v| v.abs()).sum();
        let data = synthesize(spec, x, xi).unwrap();
        let a = AugmentedMatrix::without_knockoffs(&data.x, &data.y).unwrap();
        let bound = crate::model::analytic_row_bound(&crate::model::BoundParams {
            b: 1.0,
            p,
            theta0_l1: theta_l1,
            b_n: noise_spec.truncation,
        });
        let budget = PrivacyBudget::new(30.0, 0.01).unwrap();
        let private = jlt_privatize(&a, &budget, 1200, bound, 44, &JltOptions::default()).unwrap();
        let mut cfg = SolverConfig::new(0.08);
        cfg.tol = 1e-12;
        let sol = lasso_data(&private.xstar, &private.ystar, n as f64, &cfg).unwrap();
        let got = estimate_sigma(
            &SigmaEstimate::NaiveResidual,
            &private.xstar,
            &private.ystar,
            &sol.theta,
            private.params.w,
            n,
        );
        assert!(
            (got - sigma).abs() / sigma <= 0.2,
            "residual estimate {got} strays more than 20% from sigma = {sigma}"
        );
    }
}
