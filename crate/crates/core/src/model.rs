//! Linear model `y = X theta0 + xi`, data generation, and CSV ingestion.
//!
//! Generated designs have i.i.d. entries from a centered, unit-variance,
//! bounded distribution; the noise is a truncated Gaussian so that rows of
//! the augmented data matrix have a hard norm bound (the privatization step
//! needs one).

use crate::linalg::Mat;
use crate::par::*;
use crate::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::path::Path;
use thiserror::Error;

/// Rows generated per derived RNG stream. Fixed so that outputs do not
/// depend on the number of worker threads.
const GEN_BLOCK: usize = 1024;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid distribution parameters: {0}")]
    InvalidDistribution(String),
    #[error("invalid noise parameters: {0}")]
    InvalidNoise(String),
    #[error("{0} must be at least 1")]
    EmptyDimension(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv cell at row {row}, column {column}: {message}")]
    CsvCell {
        row: usize,
        column: String,
        message: String,
    },
    #[error("response column {0:?} not found in header")]
    MissingResponse(String),
    #[error("column {0:?} is constant and cannot be standardized")]
    ConstantColumn(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Base law for design entries, before optional variance normalization.
#[derive(Debug, Clone, Copy)]
pub enum DesignKind {
    /// Symmetric two-point law on `{-b, +b}`.
    ScaledRademacher,
    /// Uniform on `[-b, b]`.
    TruncatedUniform,
    /// Caller-supplied sampler with values in `[-b, b]` and known standard
    /// deviation (required for normalization).
    CustomBounded {
        sampler: fn(&mut ChaCha8Rng) -> f64,
        sd: f64,
    },
}

/// Entry distribution for the design matrix.
#[derive(Debug, Clone, Copy)]
pub struct DesignDistribution {
    pub kind: DesignKind,
    /// Support bound of the base law.
    pub bound: f64,
    /// Rescale draws to unit variance.
    pub normalize: bool,
}

impl DesignDistribution {
    /// The default design law: Rademacher signs, which are centered with
    /// unit variance and bound 1 without any rescaling.
    pub fn rademacher() -> Self {
        DesignDistribution {
            kind: DesignKind::ScaledRademacher,
            bound: 1.0,
            normalize: false,
        }
    }

    /// Uniform on `[-sqrt(3), sqrt(3)]` after normalization: unit variance.
    pub fn truncated_uniform() -> Self {
        DesignDistribution {
            kind: DesignKind::TruncatedUniform,
            bound: 1.0,
            normalize: true,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.bound > 0.0) || !self.bound.is_finite() {
            return Err(ModelError::InvalidDistribution(format!(
                "bound must be positive and finite, got {}",
                self.bound
            )));
        }
        if let DesignKind::CustomBounded { sd, .. } = self.kind {
            if self.normalize && (!(sd > 0.0) || !sd.is_finite()) {
                return Err(ModelError::InvalidDistribution(format!(
                    "custom law has sd {sd}; variance not normalizable"
                )));
            }
        }
        Ok(())
    }

    /// Standard deviation of the base (un-normalized) law.
    fn base_sd(&self) -> f64 {
        match self.kind {
            DesignKind::ScaledRademacher => self.bound,
            DesignKind::TruncatedUniform => self.bound / 3.0f64.sqrt(),
            DesignKind::CustomBounded { sd, .. } => sd,
        }
    }

    /// Support bound of the samples actually produced.
    pub fn effective_bound(&self) -> f64 {
        if self.normalize {
            self.bound / self.base_sd()
        } else {
            self.bound
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let raw = match self.kind {
            DesignKind::ScaledRademacher => {
                if rng.random::<u64>() & 1 == 0 {
                    self.bound
                } else {
                    -self.bound
                }
            }
            DesignKind::TruncatedUniform => rng.random_range(-self.bound..self.bound),
            DesignKind::CustomBounded { sampler, .. } => sampler(rng),
        };
        if self.normalize {
            raw / self.base_sd()
        } else {
            raw
        }
    }
}

/// Truncated Gaussian noise `TN(0, sigma^2, b_n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub truncation: f64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, truncation: f64) -> Result<Self, ModelError> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(ModelError::InvalidNoise(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if !(truncation > 0.0) {
            return Err(ModelError::InvalidNoise(format!(
                "truncation must be positive, got {truncation}"
            )));
        }
        Ok(NoiseSpec { sigma, truncation })
    }

    /// Default truncation `b_n = sigma * sqrt(4 log n)`, which keeps the
    /// noise bounded at the privacy layer while staying statistically close
    /// to an untruncated Gaussian.
    pub fn with_default_truncation(sigma: f64, n: usize) -> Result<Self, ModelError> {
        if n < 2 {
            return Err(ModelError::InvalidNoise(
                "default truncation needs n >= 2".into(),
            ));
        }
        NoiseSpec::new(sigma, sigma * (4.0 * (n as f64).ln()).sqrt())
    }

    /// Variance of the truncated law; strictly below `sigma^2`.
    pub fn truncated_variance(&self) -> f64 {
        let a = self.truncation / self.sigma;
        let phi = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mass = libm::erf(a / std::f64::consts::SQRT_2);
        self.sigma * self.sigma * (1.0 - 2.0 * a * phi / mass)
    }
}

/// Ground truth for a simulated instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub n: usize,
    pub p: usize,
    pub theta0: Vec<f64>,
    pub support: Vec<usize>,
}

impl ModelSpec {
    pub fn new(n: usize, p: usize, theta0: Vec<f64>) -> Result<Self, ModelError> {
        if theta0.len() != p {
            return Err(ModelError::DimensionMismatch(format!(
                "theta0 has length {}, expected p = {p}",
                theta0.len()
            )));
        }
        let support: Vec<usize> = (0..p).filter(|&j| theta0[j] != 0.0).collect();
        Ok(ModelSpec {
            n,
            p,
            theta0,
            support,
        })
    }

    /// Equal-magnitude signals `mu` on a seed-chosen support of size `s0`.
    /// With `normalize`, `theta0` is rescaled to unit l2 norm.
    pub fn equal_signal(
        n: usize,
        p: usize,
        s0: usize,
        mu: f64,
        normalize: bool,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let support = choose_support(p, s0, seed)?;
        let mut theta0 = vec![0.0; p];
        let value = if normalize && s0 > 0 {
            1.0 / (s0 as f64).sqrt()
        } else {
            mu
        };
        for &j in &support {
            theta0[j] = value;
        }
        // mu = 0 encodes a pure-null instance; the derived support is empty
        Self::new(n, p, theta0)
    }

    pub fn s0(&self) -> usize {
        self.support.len()
    }
}

/// Seed-chosen sorted set of `s0` signal slots out of `p`. Deterministic in
/// the seed alone, so sweeps over signal magnitude keep the same slots.
pub fn choose_support(p: usize, s0: usize, seed: u64) -> Result<Vec<usize>, ModelError> {
    if s0 > p {
        return Err(ModelError::DimensionMismatch(format!(
            "s0 = {s0} exceeds p = {p}"
        )));
    }
    let mut rng = rng::stream(seed, "support", 0);
    let mut idx: Vec<usize> = (0..p).collect();
    for i in 0..s0 {
        let j = rng.random_range(i..p);
        idx.swap(i, j);
    }
    let mut support = idx[..s0].to_vec();
    support.sort_unstable();
    Ok(support)
}

/// Observed (or simulated) data for one selection problem.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Mat,
    pub y: Vec<f64>,
    pub spec: Option<ModelSpec>,
    pub knockoffs: Option<Mat>,
    /// Entry bound of the design, known for generated data and inferred for
    /// CSV input.
    pub bound: Option<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Sample an `n x p` matrix of i.i.d. draws from `dist`, deterministically
/// for a fixed `(seed, tag)`. Rows are generated in fixed-size blocks, one
/// derived stream per block, so the result is identical however many worker
/// threads participate.
pub(crate) fn sample_matrix(
    n: usize,
    p: usize,
    dist: &DesignDistribution,
    seed: u64,
    tag: &str,
) -> Result<Mat, ModelError> {
    if n == 0 {
        return Err(ModelError::EmptyDimension("n"));
    }
    if p == 0 {
        return Err(ModelError::EmptyDimension("p"));
    }
    dist.validate()?;
    let mut m = Mat::zeros(n, p);
    let dist = *dist;
    let tag = tag.to_owned();
    m.as_mut_slice()
        .par_chunks_mut(GEN_BLOCK * p)
        .enumerate()
        .for_each(|(block, chunk)| {
            let mut rng = rng::stream(seed, &tag, block as u64);
            for v in chunk.iter_mut() {
                *v = dist.sample(&mut rng);
            }
        });
    Ok(m)
}

/// i.i.d. design matrix under the model assumptions.
pub fn generate_design(
    n: usize,
    p: usize,
    dist: &DesignDistribution,
    seed: u64,
) -> Result<Mat, ModelError> {
    sample_matrix(n, p, dist, seed, "design")
}

/// `n` draws of truncated Gaussian noise, by rejection from `N(0, sigma^2)`.
pub fn sample_noise(n: usize, spec: &NoiseSpec, seed: u64) -> Result<Vec<f64>, ModelError> {
    if n == 0 {
        return Err(ModelError::EmptyDimension("n"));
    }
    NoiseSpec::new(spec.sigma, spec.truncation)?;
    let mut out = vec![0.0; n];
    let (sigma, b_n) = (spec.sigma, spec.truncation);
    out.par_chunks_mut(GEN_BLOCK)
        .enumerate()
        .for_each(|(block, chunk)| {
            let mut rng = rng::stream(seed, "noise", block as u64);
            for v in chunk.iter_mut() {
                *v = loop {
                    let z: f64 = rng.sample(StandardNormal);
                    let candidate = sigma * z;
                    if candidate.abs() <= b_n {
                        break candidate;
                    }
                };
            }
        });
    Ok(out)
}

/// Assemble `y = X theta0 + xi` into a simulated dataset.
pub fn synthesize(spec: ModelSpec, design: Mat, noise: Vec<f64>) -> Result<Dataset, ModelError> {
    if design.nrows() != spec.n || design.ncols() != spec.p {
        return Err(ModelError::DimensionMismatch(format!(
            "design is {}x{}, spec wants {}x{}",
            design.nrows(),
            design.ncols(),
            spec.n,
            spec.p
        )));
    }
    if noise.len() != spec.n {
        return Err(ModelError::DimensionMismatch(format!(
            "noise has length {}, expected n = {}",
            noise.len(),
            spec.n
        )));
    }
    let mut y = design.matvec(&spec.theta0);
    for (yi, xi) in y.iter_mut().zip(&noise) {
        *yi += xi;
    }
    Ok(Dataset {
        x: design,
        y,
        spec: Some(spec),
        knockoffs: None,
        bound: None,
    })
}

/// Parameters for the analytic row-norm bound when the data is not in hand.
#[derive(Debug, Clone, Copy)]
pub struct BoundParams {
    /// Entry bound of the design law.
    pub b: f64,
    pub p: usize,
    /// l1 norm of theta0, or `sqrt(s0)` for a unit-l2 model.
    pub theta0_l1: f64,
    /// Noise truncation `b_n`.
    pub b_n: f64,
}

/// `B = sqrt(2 p b^2 + (b * |theta0|_1 + b_n)^2)`: a bound on the l2 norm of
/// every row of `[X  X~  y]` that holds surely under the model assumptions.
pub fn analytic_row_bound(params: &BoundParams) -> f64 {
    let cross = params.b * params.theta0_l1 + params.b_n;
    (2.0 * params.p as f64 * params.b * params.b + cross * cross).sqrt()
}

/// Largest realized l2 row norm of `[X  X~  y]` (knockoff block optional).
pub fn empirical_row_bound(x: &Mat, knockoffs: Option<&Mat>, y: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for (i, yi) in y.iter().enumerate() {
        let mut sq: f64 = x.row(i).iter().map(|v| v * v).sum();
        if let Some(k) = knockoffs {
            sq += k.row(i).iter().map(|v| v * v).sum::<f64>();
        }
        sq += yi * yi;
        best = best.max(sq.sqrt());
    }
    best
}

/// How `load_csv` treats columns with zero variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantColumnPolicy {
    Error,
    Drop,
}

/// How the entry bound is established for real data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundPolicy {
    /// Take `b` as the post-standardization max |entry| (data unchanged).
    Infer,
    /// Clip standardized entries into `[-b, b]`.
    Clip(f64),
}

/// Read a rectangular numeric CSV with a header row; the named response
/// column becomes `y`, the rest are standardized (centered, unit variance)
/// into the design. Real data has no known entry law, so the reported bound
/// is an empirical stand-in for the generated-data guarantee.
pub fn load_csv(
    path: impl AsRef<Path>,
    response_column: &str,
    constant_columns: ConstantColumnPolicy,
    bound_policy: BoundPolicy,
) -> Result<Dataset, ModelError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let response_idx = headers
        .iter()
        .position(|h| h == response_column)
        .ok_or_else(|| ModelError::MissingResponse(response_column.to_owned()))?;

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        for (col_idx, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| ModelError::CsvCell {
                row: row_idx + 2, // 1-based, counting the header line
                column: headers[col_idx].clone(),
                message: format!("not numeric: {field:?}"),
            })?;
            columns[col_idx].push(value);
        }
    }
    let n = columns[response_idx].len();
    if n == 0 {
        return Err(ModelError::EmptyDimension("n"));
    }

    let standardize = |col: &mut Vec<f64>, name: &str| -> Result<(), ModelError> {
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        if var <= 0.0 {
            return Err(ModelError::ConstantColumn(name.to_owned()));
        }
        let sd = var.sqrt();
        for v in col.iter_mut() {
            *v = (*v - mean) / sd;
        }
        Ok(())
    };

    let mut kept: Vec<usize> = Vec::new();
    for (idx, header) in headers.iter().enumerate() {
        if idx == response_idx {
            continue;
        }
        match standardize(&mut columns[idx], header) {
            Ok(()) => kept.push(idx),
            Err(ModelError::ConstantColumn(name)) => match constant_columns {
                ConstantColumnPolicy::Error => return Err(ModelError::ConstantColumn(name)),
                ConstantColumnPolicy::Drop => {}
            },
            Err(e) => return Err(e),
        }
    }
    standardize(&mut columns[response_idx], &headers[response_idx])?;

    let p = kept.len();
    if p == 0 {
        return Err(ModelError::EmptyDimension("p"));
    }
    let mut x = Mat::zeros(n, p);
    for (out_j, &src_j) in kept.iter().enumerate() {
        let col = &columns[src_j];
        for i in 0..n {
            x[(i, out_j)] = col[i];
        }
    }
    let bound = match bound_policy {
        BoundPolicy::Infer => x.max_abs(),
        BoundPolicy::Clip(b) => {
            for v in x.as_mut_slice().iter_mut() {
                *v = v.clamp(-b, b);
            }
            b
        }
    };
    Ok(Dataset {
        x,
        y: std::mem::take(&mut columns[response_idx]),
        spec: None,
        knockoffs: None,
        bound: Some(bound),
    })
}
