//! The two privatization mechanisms.
//!
//! `jlt_privatize` releases `R [A; w I]` for a Gaussian random projection
//! `R` with i.i.d. `N(0, 1/r)` entries: the appended `w I` block lifts every
//! singular value above the privacy threshold, and the released Gram matrix
//! is positive semi-definite by construction. `gaussian_privatize_moments`
//! is the classical baseline that perturbs `A^T A` with a symmetric noise
//! matrix; its output has no PSD guarantee, which is exactly the failure
//! mode the comparison scenarios measure.
//!
//! The projection is streamed over row blocks so the full `r x (n + d)`
//! matrix is never materialized. Each projection row draws from its own
//! derived stream and the accumulation order over data rows is fixed, so
//! the output is bit-identical for any block size or thread count.

use crate::knockoff::AugmentedMatrix;
use crate::linalg::{axpy, cholesky, Mat};
use crate::par::*;
use crate::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"DPKOJLT1";

/// Projection rows handled per scheduled task; tuning only, never affects
/// output values.
const ROWS_PER_TASK: usize = 16;

/// Data rows accumulated per Gram partial.
const GRAM_BLOCK: usize = 2048;

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("invalid privacy budget: {0}")]
    InvalidBudget(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("row {row} has l2 norm {norm} exceeding the declared bound {bound}")]
    RowBoundViolation { row: usize, norm: f64, bound: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dump: {0}")]
    MalformedDump(String),
}

/// `(epsilon, delta)` differential-privacy budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, PrivacyError> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(PrivacyError::InvalidBudget(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        let e_inv = 1.0 / std::f64::consts::E;
        if !(delta > 0.0 && delta < e_inv) {
            return Err(PrivacyError::InvalidBudget(format!(
                "delta must lie in (0, 1/e), got {delta}"
            )));
        }
        Ok(PrivacyBudget { epsilon, delta })
    }
}

/// Projection geometry plus the derived augmentation scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JltParams {
    pub r: usize,
    pub bound: f64,
    pub w: f64,
}

/// `w^2 = (4 B^2 / eps) (sqrt(2 r log(4/delta)) + log(4/delta))`, the scale
/// of the identity block appended before projecting. Monotone decreasing in
/// `epsilon`, increasing in `r` and `B`.
pub fn compute_w(bound: f64, budget: &PrivacyBudget, r: usize) -> Result<f64, PrivacyError> {
    PrivacyBudget::new(budget.epsilon, budget.delta)?;
    if r < 1 {
        return Err(PrivacyError::InvalidParams("r must be at least 1".into()));
    }
    if !(bound >= 0.0) || !bound.is_finite() {
        return Err(PrivacyError::InvalidParams(format!(
            "bound must be >= 0, got {bound}"
        )));
    }
    let log_term = (4.0 / budget.delta).ln();
    let w2 = 4.0 * bound * bound / budget.epsilon * ((2.0 * r as f64 * log_term).sqrt() + log_term);
    Ok(w2.sqrt())
}

/// Which projection matrix to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    /// i.i.d. `N(0, 1/r)` entries; the actual mechanism.
    Gaussian,
    /// Identity matrix (requires `r = n + d`); test hook for exercising the
    /// padding semantics without randomness.
    IdentityDebug,
}

#[derive(Debug, Clone, Copy)]
pub struct JltOptions {
    /// Rows of `[A; w I]` buffered per streaming step.
    pub block_rows: usize,
    /// Keep the full projection matrix on the output (debug / simulation
    /// diagnostics only; production releases must not retain it).
    pub retain_projection: bool,
    pub projection: ProjectionKind,
    /// Substitute this value for the computed `w` (debug only).
    pub override_w: Option<f64>,
}

impl Default for JltOptions {
    fn default() -> Self {
        JltOptions {
            block_rows: 512,
            retain_projection: false,
            projection: ProjectionKind::Gaussian,
            override_w: None,
        }
    }
}

/// The released data: `A* = R [A; w I]` split back into its blocks.
#[derive(Debug, Clone)]
pub struct PrivatizedData {
    pub xstar: Mat,
    pub xtildestar: Option<Mat>,
    pub ystar: Vec<f64>,
    pub params: JltParams,
    pub budget: PrivacyBudget,
    /// Original sample size (the lasso objective is scaled by it).
    pub n: usize,
    pub p: usize,
    /// Full projection matrix, present only when requested via
    /// `JltOptions::retain_projection`.
    pub projection: Option<Mat>,
}

impl PrivatizedData {
    /// `[X*  X~*]` (or just `X*` without knockoffs) as one matrix.
    pub fn design(&self) -> Mat {
        match &self.xtildestar {
            Some(k) => self.xstar.hcat(k),
            None => self.xstar.clone(),
        }
    }

    pub fn design_dim(&self) -> usize {
        self.p * if self.xtildestar.is_some() { 2 } else { 1 }
    }
}

fn check_row_bound(a: &AugmentedMatrix, bound: f64) -> Result<(), PrivacyError> {
    let mut buf = vec![0.0; a.ncols()];
    for i in 0..a.nrows() {
        a.write_row(i, &mut buf);
        let norm = buf.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > bound * (1.0 + 1e-9) {
            return Err(PrivacyError::RowBoundViolation {
                row: i,
                norm,
                bound,
            });
        }
    }
    Ok(())
}

fn split_output(
    projected: Mat,
    a: &AugmentedMatrix,
    params: JltParams,
    budget: PrivacyBudget,
    projection: Option<Mat>,
) -> PrivatizedData {
    let layout = a.layout();
    let p = layout.p;
    let d = layout.ncols();
    let xstar = projected.columns(0, p);
    let xtildestar = if layout.has_knockoffs {
        Some(projected.columns(p, 2 * p))
    } else {
        None
    };
    let ystar: Vec<f64> = (0..projected.nrows())
        .map(|k| projected[(k, d - 1)])
        .collect();
    PrivatizedData {
        xstar,
        xtildestar,
        ystar,
        params,
        budget,
        n: a.nrows(),
        p,
        projection,
    }
}

enum Coef<'m> {
    /// One stream per projection row, scaled to `N(0, 1/r)`.
    Streams(Vec<ChaCha8Rng>, f64),
    Stored(&'m Mat),
}

/// `coef * [A; w I]` streamed over row blocks. Accumulation over data rows
/// is strictly ascending per output entry, independent of blocking.
fn project_streamed(
    a: &AugmentedMatrix,
    w: f64,
    r: usize,
    mut coef: Coef<'_>,
    block_rows: usize,
) -> Mat {
    let d = a.ncols();
    let n = a.nrows();
    let total = n + d;
    let block_rows = block_rows.max(1);
    let mut acc = Mat::zeros(r, d);
    let mut buf = Mat::zeros(block_rows.min(total), d);
    let mut lo = 0;
    while lo < total {
        let hi = (lo + block_rows).min(total);
        for (bi, i) in (lo..hi).enumerate() {
            let row = buf.row_mut(bi);
            if i < n {
                a.write_row(i, row);
            } else {
                row.fill(0.0);
                row[i - n] = w;
            }
        }
        let nb = hi - lo;
        let buf_ref = &buf;
        match &mut coef {
            Coef::Streams(rngs, scale) => {
                let scale = *scale;
                acc.as_mut_slice()
                    .par_chunks_mut(ROWS_PER_TASK * d)
                    .zip(rngs.par_chunks_mut(ROWS_PER_TASK))
                    .for_each(|(acc_chunk, rng_chunk)| {
                        for (acc_row, rng) in acc_chunk.chunks_mut(d).zip(rng_chunk.iter_mut()) {
                            for bi in 0..nb {
                                let z: f64 = rng.sample(StandardNormal);
                                axpy(acc_row, z * scale, buf_ref.row(bi));
                            }
                        }
                    });
            }
            Coef::Stored(rmat) => {
                let rmat = *rmat;
                acc.as_mut_slice()
                    .par_chunks_mut(ROWS_PER_TASK * d)
                    .enumerate()
                    .for_each(|(chunk_idx, acc_chunk)| {
                        let k0 = chunk_idx * ROWS_PER_TASK;
                        for (dk, acc_row) in acc_chunk.chunks_mut(d).enumerate() {
                            let k = k0 + dk;
                            for bi in 0..nb {
                                axpy(acc_row, rmat[(k, lo + bi)], buf_ref.row(bi));
                            }
                        }
                    });
            }
        }
        lo = hi;
    }
    acc
}

/// Johnson-Lindenstrauss privatization of `[A; w I]`.
///
/// Every row of `A` must have l2 norm at most `bound`; violations are hard
/// errors rather than silent clipping, since clipping would invalidate the
/// sensitivity analysis behind `w`.
pub fn jlt_privatize(
    a: &AugmentedMatrix,
    budget: &PrivacyBudget,
    r: usize,
    bound: f64,
    seed: u64,
    opts: &JltOptions,
) -> Result<PrivatizedData, PrivacyError> {
    let w = match opts.override_w {
        Some(w) => w,
        None => compute_w(bound, budget, r)?,
    };
    if r < 1 {
        return Err(PrivacyError::InvalidParams("r must be at least 1".into()));
    }
    check_row_bound(a, bound)?;
    let d = a.ncols();
    let total = a.nrows() + d;

    let projected;
    let mut projection = None;
    match opts.projection {
        ProjectionKind::Gaussian => {
            if opts.retain_projection {
                let mut rmat = Mat::zeros(r, total);
                let scale = 1.0 / (r as f64).sqrt();
                rmat.as_mut_slice()
                    .par_chunks_mut(total)
                    .enumerate()
                    .for_each(|(k, row)| {
                        let mut rng = rng::stream(seed, "projection", k as u64);
                        for v in row.iter_mut() {
                            let z: f64 = rng.sample(StandardNormal);
                            *v = z * scale;
                        }
                    });
                projected = project_streamed(a, w, r, Coef::Stored(&rmat), opts.block_rows);
                projection = Some(rmat);
            } else {
                let rngs: Vec<ChaCha8Rng> = (0..r)
                    .map(|k| rng::stream(seed, "projection", k as u64))
                    .collect();
                let scale = 1.0 / (r as f64).sqrt();
                projected = project_streamed(a, w, r, Coef::Streams(rngs, scale), opts.block_rows);
            }
        }
        ProjectionKind::IdentityDebug => {
            if r != total {
                return Err(PrivacyError::InvalidParams(format!(
                    "identity projection needs r = n + d = {total}, got {r}"
                )));
            }
            let rmat = Mat::identity(total);
            projected = project_streamed(a, w, r, Coef::Stored(&rmat), opts.block_rows);
            if opts.retain_projection {
                projection = Some(rmat);
            }
        }
    }
    Ok(split_output(
        projected,
        a,
        JltParams { r, bound, w },
        *budget,
        projection,
    ))
}

/// `A^T A` of the (un-augmented) concatenation, streamed in fixed-size row
/// blocks with partials merged in block order.
pub(crate) fn augmented_gram(a: &AugmentedMatrix) -> Mat {
    let d = a.ncols();
    let n = a.nrows();
    let nblocks = n.div_ceil(GRAM_BLOCK).max(1);
    let partials: Vec<Vec<f64>> = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * GRAM_BLOCK;
            let hi = ((b + 1) * GRAM_BLOCK).min(n);
            let mut row = vec![0.0; d];
            let mut part = vec![0.0; d * d];
            for i in lo..hi {
                a.write_row(i, &mut row);
                for j in 0..d {
                    let v = row[j];
                    if v != 0.0 {
                        axpy(&mut part[j * d + j..(j + 1) * d], v, &row[j..]);
                    }
                }
            }
            part
        })
        .collect();
    let mut g = Mat::zeros(d, d);
    for part in &partials {
        for (dst, src) in g.as_mut_slice().iter_mut().zip(part) {
            *dst += src;
        }
    }
    for j in 0..d {
        for k in (j + 1)..d {
            g[(k, j)] = g[(j, k)];
        }
    }
    g
}

/// Law-equivalent fast path for simulations at large `n`.
///
/// Conditional on the data, the rows of `R [A; w I]` are i.i.d.
/// `N(0, (A^T A + w^2 I)/r)`; this samples that law directly through a
/// Cholesky factor, which costs `O(n d^2 + r d^2)` instead of `O(r n d)`.
/// No projection matrix exists on this path, so it cannot serve the
/// decomposition diagnostics.
pub fn jlt_privatize_sketch(
    a: &AugmentedMatrix,
    budget: &PrivacyBudget,
    r: usize,
    bound: f64,
    seed: u64,
) -> Result<PrivatizedData, PrivacyError> {
    let w = compute_w(bound, budget, r)?;
    if r < 1 {
        return Err(PrivacyError::InvalidParams("r must be at least 1".into()));
    }
    check_row_bound(a, bound)?;
    let d = a.ncols();
    let mut g = augmented_gram(a);
    for j in 0..d {
        g[(j, j)] += w * w;
    }
    for v in g.as_mut_slice().iter_mut() {
        *v /= r as f64;
    }
    let l = cholesky(&g).ok_or_else(|| {
        PrivacyError::InvalidParams(
            "augmented Gram is not positive definite; use the streamed projection".into(),
        )
    })?;
    let mut out = Mat::zeros(r, d);
    out.as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(k, row)| {
            let mut rng = rng::stream(seed, "sketch", k as u64);
            let gauss: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            for j in 0..d {
                row[j] = crate::linalg::dot(&l.row(j)[..=j], &gauss[..=j]);
            }
        });
    Ok(split_output(
        out,
        a,
        JltParams { r, bound, w },
        *budget,
        None,
    ))
}

/// Noise scale of the Gaussian mechanism for a second-moment release:
/// `sigma = 2 sqrt(log(1.25/delta)) B^2 / eps`.
pub fn gaussian_noise_sigma(bound: f64, budget: &PrivacyBudget) -> Result<f64, PrivacyError> {
    PrivacyBudget::new(budget.epsilon, budget.delta)?;
    if !(bound >= 0.0) || !bound.is_finite() {
        return Err(PrivacyError::InvalidParams(format!(
            "bound must be >= 0, got {bound}"
        )));
    }
    Ok(2.0 * (1.25 / budget.delta).ln().sqrt() * bound * bound / budget.epsilon)
}

/// Privatized second moments of `[X  X~  y]` under the Gaussian mechanism.
#[derive(Debug, Clone)]
pub struct PrivateMoments {
    /// Noised `[X X~]^T [X X~]`; symmetric by construction, not necessarily
    /// PSD.
    pub gram: Mat,
    /// Noised `[X X~]^T y`.
    pub xty: Vec<f64>,
    /// Noised `y^T y`.
    pub yy: f64,
    pub sigma_noise: f64,
    pub n: usize,
    pub p: usize,
    pub has_knockoffs: bool,
}

impl PrivateMoments {
    pub fn design_dim(&self) -> usize {
        self.p * if self.has_knockoffs { 2 } else { 1 }
    }
}

/// Second-moment release `A^T A + Z` with `Z` symmetric Gaussian noise,
/// partitioned into the design Gram, the design-response moment, and the
/// response second moment.
pub fn gaussian_privatize_moments(
    a: &AugmentedMatrix,
    budget: &PrivacyBudget,
    bound: f64,
    seed: u64,
) -> Result<PrivateMoments, PrivacyError> {
    let sigma_noise = gaussian_noise_sigma(bound, budget)?;
    check_row_bound(a, bound)?;
    Ok(gaussian_moments_with_sigma(a, sigma_noise, seed))
}

/// Same as `gaussian_privatize_moments` but with the noise scale supplied
/// directly (test hook; `sigma_noise = 0` recovers the exact moments).
pub fn gaussian_moments_with_sigma(
    a: &AugmentedMatrix,
    sigma_noise: f64,
    seed: u64,
) -> PrivateMoments {
    let d = a.ncols();
    let mut noised = augmented_gram(a);
    if sigma_noise > 0.0 {
        let mut rng = rng::stream(seed, "gaussian-mechanism", 0);
        for i in 0..d {
            for j in i..d {
                let z: f64 = rng.sample(StandardNormal);
                let noise = z * sigma_noise;
                noised[(i, j)] += noise;
                if j != i {
                    noised[(j, i)] += noise;
                }
            }
        }
    }
    let layout = a.layout();
    let ddim = d - 1;
    let mut gram = Mat::zeros(ddim, ddim);
    for i in 0..ddim {
        gram.row_mut(i).copy_from_slice(&noised.row(i)[..ddim]);
    }
    let xty: Vec<f64> = (0..ddim).map(|i| noised[(i, d - 1)]).collect();
    PrivateMoments {
        gram,
        xty,
        yy: noised[(d - 1, d - 1)],
        sigma_noise,
        n: a.nrows(),
        p: layout.p,
        has_knockoffs: layout.has_knockoffs,
    }
}

/// Binary dump: magic, `r`, `p`, `n`, knockoff flag, `w`, `eps`, `delta`,
/// then `X*`, optional `X~*`, `y*` as little-endian f64 in row-major order.
pub fn write_binary(data: &PrivatizedData, path: impl AsRef<Path>) -> Result<(), PrivacyError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    for v in [
        data.params.r as u64,
        data.p as u64,
        data.n as u64,
        data.xtildestar.is_some() as u64,
    ] {
        f.write_all(&v.to_le_bytes())?;
    }
    for v in [
        data.params.w,
        data.budget.epsilon,
        data.budget.delta,
        data.params.bound,
    ] {
        f.write_all(&v.to_le_bytes())?;
    }
    let mut write_all = |values: &[f64]| -> std::io::Result<()> {
        for v in values {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    write_all(data.xstar.as_slice())?;
    if let Some(k) = &data.xtildestar {
        write_all(k.as_slice())?;
    }
    write_all(&data.ystar)?;
    Ok(())
}

pub fn read_binary(path: impl AsRef<Path>) -> Result<PrivatizedData, PrivacyError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(PrivacyError::MalformedDump("bad magic".into()));
    }
    let mut u = [0u8; 8];
    let mut next_u64 = |f: &mut dyn Read| -> Result<u64, PrivacyError> {
        f.read_exact(&mut u)?;
        Ok(u64::from_le_bytes(u))
    };
    let r = next_u64(&mut f)? as usize;
    let p = next_u64(&mut f)? as usize;
    let n = next_u64(&mut f)? as usize;
    let has_knockoffs = next_u64(&mut f)? != 0;
    let mut b = [0u8; 8];
    let mut next_f64 = |f: &mut dyn Read| -> Result<f64, PrivacyError> {
        f.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    };
    let w = next_f64(&mut f)?;
    let epsilon = next_f64(&mut f)?;
    let delta = next_f64(&mut f)?;
    let bound = next_f64(&mut f)?;
    let read_mat = |f: &mut dyn Read, rows: usize, cols: usize| -> Result<Mat, PrivacyError> {
        let mut m = Mat::zeros(rows, cols);
        let mut buf = [0u8; 8];
        for v in m.as_mut_slice() {
            f.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        Ok(m)
    };
    let xstar = read_mat(&mut f, r, p)?;
    let xtildestar = if has_knockoffs {
        Some(read_mat(&mut f, r, p)?)
    } else {
        None
    };
    let ystar = {
        let m = read_mat(&mut f, r, 1)?;
        m.as_slice().to_vec()
    };
    Ok(PrivatizedData {
        xstar,
        xtildestar,
        ystar,
        params: JltParams { r, bound, w },
        budget: PrivacyBudget { epsilon, delta },
        n,
        p,
        projection: None,
    })
}

/// CSV export of the released matrices (small instances; header row, one
/// projected row per record).
pub fn export_csv(data: &PrivatizedData, path: impl AsRef<Path>) -> Result<(), PrivacyError> {
    let mut out = String::new();
    let mut cols: Vec<String> = (0..data.p).map(|j| format!("xstar{}", j + 1)).collect();
    if data.xtildestar.is_some() {
        cols.extend((0..data.p).map(|j| format!("xtildestar{}", j + 1)));
    }
    cols.push("ystar".into());
    out.push_str(&cols.join(","));
    out.push('\n');
    for k in 0..data.params.r {
        let mut fields: Vec<String> = data.xstar.row(k).iter().map(|v| format!("{v}")).collect();
        if let Some(t) = &data.xtildestar {
            fields.extend(t.row(k).iter().map(|v| format!("{v}")));
        }
        fields.push(format!("{}", data.ystar[k]));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigenvalues;
    use crate::model::{generate_design, sample_noise, DesignDistribution, NoiseSpec};

    fn toy_augmented(n: usize, p: usize, seed: u64) -> (Mat, Mat, Vec<f64>) {
        let dist = DesignDistribution::rademacher();
        let x = generate_design(n, p, &dist, seed).unwrap();
        let k = crate::knockoff::sample_knockoffs(n, p, &dist, seed).unwrap();
        let y = sample_noise(n, &NoiseSpec::new(0.5, 2.0).unwrap(), seed ^ 1).unwrap();
        (x, k, y)
    }

    #[test]
    fn w_matches_direct_evaluation() {
        let budget = PrivacyBudget::new(1.0, 0.01).unwrap();
        let w = compute_w(1.0, &budget, 1500).unwrap();
        let log_term = 400.0f64.ln();
        let expected = (4.0 * ((2.0 * 1500.0 * log_term).sqrt() + log_term)).sqrt();
        assert!((w - expected).abs() < 1e-12);
        assert!((w * w - 560.24).abs() < 0.01);
    }

    #[test]
    fn w_limits_and_scaling() {
        let big = PrivacyBudget::new(1e300, 0.01).unwrap();
        assert!(compute_w(1.0, &big, 100).unwrap() < 1e-100);

        let budget = PrivacyBudget::new(0.7, 0.05).unwrap();
        let w1 = compute_w(1.0, &budget, 64).unwrap();
        let w2 = compute_w(2.0, &budget, 64).unwrap();
        assert_eq!(w2 * w2, 4.0 * (w1 * w1));
    }

    #[test]
    fn w_monotonicity() {
        let budget = |eps: f64| PrivacyBudget::new(eps, 0.01).unwrap();
        assert!(
            compute_w(1.0, &budget(2.0), 100).unwrap() < compute_w(1.0, &budget(1.0), 100).unwrap()
        );
        assert!(
            compute_w(1.0, &budget(1.0), 200).unwrap() > compute_w(1.0, &budget(1.0), 100).unwrap()
        );
        assert!(
            compute_w(2.0, &budget(1.0), 100).unwrap() > compute_w(1.0, &budget(1.0), 100).unwrap()
        );
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(0.0, 0.01).is_err());
        assert!(
            PrivacyBudget::new(1.0, 0.5).is_err(),
            "delta above 1/e must be rejected"
        );
        assert!(PrivacyBudget::new(1.0, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, 0.3).is_ok());
    }

    #[test]
    fn output_shape_and_split() {
        let (x, k, y) = toy_augmented(50, 3, 2);
        let a = AugmentedMatrix::augment(&x, &k, &y).unwrap();
        let bound = crate::model::empirical_row_bound(&x, Some(&k), &y);
        let budget = PrivacyBudget::new(1.0, 0.01).unwrap();
        let out = jlt_privatize(&a, &budget, 17, bound, 3, &JltOptions::default()).unwrap();
        assert_eq!(out.xstar.nrows(), 17);
        assert_eq!(out.xstar.ncols(), 3);
        assert_eq!(out.xtildestar.as_ref().unwrap().ncols(), 3);
        assert_eq!(out.ystar.len(), 17);
        assert!(out.projection.is_none());
    }

    #[test]
    fn identity_projection_padding_semantics() {
        let (x, k, y) = toy_augmented(10, 2, 4);
        let a = AugmentedMatrix::augment(&x, &k, &y).unwrap();
        let d = a.ncols();
        let budget = PrivacyBudget::new(1.0, 0.01).unwrap();
        let opts = JltOptions {
            projection: ProjectionKind::IdentityDebug,
            override_w: Some(0.0),
            ..Default::default()
        };
        let out = jlt_privatize(&a, &budget, 10 + d, 100.0, 0, &opts).unwrap();
        // rows 0..n reproduce [X X~ y]; the wI block contributes zero rows
        for i in 0..10 {
            assert_eq!(out.xstar.row(i), x.row(i));
            assert_eq!(out.xtildestar.as_ref().unwrap().row(i), k.row(i));
            assert_eq!(out.ystar[i], y[i]);
        }
        for i in 10..10 + d {
            assert!(out.xstar.row(i).iter().all(|v| *v == 0.0));
            assert_eq!(out.ystar[i], 0.0);
        }
        // wrong r is rejected
        assert!(jlt_privatize(&a, &budget, 10, 100.0, 0, &opts).is_err());
    }

    #[test]
    fn row_bound_violation_reports_index() {
        let (x, k, mut y) = toy_augmented(8, 2, 6);
        y[5] = 100.0;
        let a = AugmentedMatrix::augment(&x, &k, &y).unwrap();
        let budget = PrivacyBudget::new(1.0, 0.01).unwrap();
        match jlt_privatize(&a, &budget, 4, 3.0, 0, &JltOptions::default()) {
            Err(PrivacyError::RowBoundViolation { row, .. }) => assert_eq!(row, 5),
            other => panic!("expected row bound violation, got {other:?}"),
        }
    }

    #[test]
    fn block_size_independence_is_bitwise() {
        let (x, k, y) = toy_augmented(40, 3, 8);
        let a = AugmentedMatrix::augment(&x, &k, &y).unwrap();
        let bound = crate::model::empirical_row_bound(&x, Some(&k), &y);
        let budget = PrivacyBudget::new(0.8, 0.02).unwrap();
        let run = |block_rows: usize| {
            let opts = JltOptions {
                block_rows,
                ..Default::default()
            };
            jlt_privatize(&a, &budget, 21, bound, 11, &opts).unwrap()
        };
        let base = run(64);
        for block in [1, 7, 40 + 7] {
            let other = run(block);
            assert_eq!(base.xstar, other.xstar);
            assert_eq!(base.xtildestar, other.xtildestar);
            assert_eq!(base.ystar, other.ystar);
        }
    }

    #[test]
    fn retained_projection_reproduces_streamed_output() {
        let (x, k, y) = toy_augmented(30, 2, 12);
        let a = AugmentedMatrix::augment(&x, &k, &y).unwrap();
        let bound = crate::model::empirical_row_bound(&x, Some(&k), &y);
        let budget = PrivacyBudget::new(1.5, 0.01).unwrap();
        let streamed = jlt_privatize(&a, &budget, 12, bound, 5, &JltOptions::default()).unwrap();
        let retained = jlt_privatize(
            &a,
            &budget,
            12,
            bound,
            5,
            &JltOptions {
                retain_projection: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(streamed.xstar, retained.xstar);
        assert_eq!(streamed.ystar, retained.ystar);
        let rmat = retained.projection.unwrap();
        assert_eq!(rmat.nrows(), 12);
        assert_eq!(rmat.ncols(), 30 + a.ncols());
    }

    #[test]
    fn jlt_gram_is_psd() {
        for seed in 0..10 {
            let (x, k, y) = toy_augmented(25, 3, 100 + seed);
            let a = AugmentedMatrix::augment(&x, &k, &y).unwrap();
            let bound = crate::model::empirical_row_bound(&x, Some(&k), &y);
            let budget = PrivacyBudget::new(1.0, 0.01).unwrap();
            let out = jlt_privatize(&a, &budget, 15, bound, seed, &JltOptions::default()).unwrap();
            let design = out.design();
            let gram = design.gram();
            let eig = symmetric_eigenvalues(&gram);
            let scale = gram.max_abs().max(1.0);
            assert!(
                eig[0] >= -1e-10 * scale,
                "min eigenvalue {} at seed {seed}",
                eig[0]
            );
        }
    }

    #[test]
    fn private_design_second_moment_matches_expectation() {
        // E[(1/n) X*^T X*] = (1 + w^2/n) I_p, averaged over fresh (X, R).
        let n = 200;
        let p = 5;
        let r = 100;
        let budget = PrivacyBudget::new(5.0, 0.05).unwrap();
        let dist = DesignDistribution::rademacher();
        let noise = NoiseSpec::new(0.5, 2.0).unwrap();
        let bound = crate::model::analytic_row_bound(&crate::model::BoundParams {
            b: 1.0,
            p,
            theta0_l1: 0.0,
            b_n: noise.truncation,
        });
        let w = compute_w(bound, &budget, r).unwrap();
        let mut mean = Mat::zeros(p, p);
        let draws = 200;
        for rep in 0..draws {
            let x = generate_design(n, p, &dist, 1000 + rep).unwrap();
            let y = sample_noise(n, &noise, 2000 + rep).unwrap();
            let a = AugmentedMatrix::without_knockoffs(&x, &y).unwrap();
            let out =
                jlt_privatize(&a, &budget, r, bound, 3000 + rep, &JltOptions::default()).unwrap();
            let g = out.xstar.gram();
            for i in 0..p {
                for j in 0..p {
                    mean[(i, j)] += g[(i, j)] / (n as f64 * draws as f64);
                }
            }
        }
        let target = 1.0 + w * w / n as f64;
        for i in 0..p {
            for j in 0..p {
                let want = if i == j { target } else { 0.0 };
                assert!(
                    (mean[(i, j)] - want).abs() < 0.1,
                    "entry ({i},{j}) = {} vs {want}",
                    mean[(i, j)]
                );
            }
        }
    }

    #[test]
    fn sketch_path_matches_projection_law() {
        // E[A*^T A*] = A^T A + w^2 I on both paths, same data.
        let (x, k, y) = toy_augmented(60, 2, 31);
        let a = AugmentedMatrix::augment(&x, &k, &y).unwrap();
        let bound = crate::model::empirical_row_bound(&x, Some(&k), &y);
        let budget = PrivacyBudget::new(2.0, 0.05).unwrap();
        let r = 40;
        let d = a.ncols();
        let w = compute_w(bound, &budget, r).unwrap();
        let mut target = augmented_gram(&a);
        for j in 0..d {
            target[(j, j)] += w * w;
        }
        let draws = 400;
        let mut mean_stream = Mat::zeros(d, d);
        let mut mean_sketch = Mat::zeros(d, d);
        for rep in 0..draws {
            let stream =
                jlt_privatize(&a, &budget, r, bound, 500 + rep, &JltOptions::default()).unwrap();
            let sketch = jlt_privatize_sketch(&a, &budget, r, bound, 900 + rep).unwrap();
            for (out, data) in [(&mut mean_stream, &stream), (&mut mean_sketch, &sketch)] {
                let full = data
                    .design()
                    .hcat(&Mat::from_fn(r, 1, |i, _| data.ystar[i]));
                let g = full.gram();
                for i in 0..d {
                    for j in 0..d {
                        out[(i, j)] += g[(i, j)] / draws as f64;
                    }
                }
            }
        }
        let scale = target.max_abs();
        for i in 0..d {
            for j in 0..d {
                assert!(
                    (mean_stream[(i, j)] - target[(i, j)]).abs() < 0.12 * scale,
                    "stream moment ({i},{j})"
                );
                assert!(
                    (mean_sketch[(i, j)] - target[(i, j)]).abs() < 0.12 * scale,
                    "sketch moment ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn gaussian_sigma_matches_direct_evaluation() {
        let budget = PrivacyBudget::new(0.2, 0.01).unwrap();
        let sigma = gaussian_noise_sigma(1.0, &budget).unwrap();
        assert!((sigma - 2.0 * 125.0f64.ln().sqrt() / 0.2).abs() < 1e-12);
        assert!((sigma - 21.97).abs() < 0.01);

        let half = gaussian_noise_sigma(1.0, &PrivacyBudget::new(0.4, 0.01).unwrap()).unwrap();
        assert_eq!(half, sigma / 2.0);
        assert_eq!(gaussian_noise_sigma(0.0, &budget).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_moments_symmetric_and_exact_at_zero_noise() {
        let (x, k, y) = toy_augmented(30, 3, 40);
        let a = AugmentedMatrix::augment(&x, &k, &y).unwrap();
        let noised = gaussian_moments_with_sigma(&a, 1.0, 7);
        assert!(noised.gram.is_symmetric(0.0));
        assert_eq!(noised.design_dim(), 6);

        let clean = gaussian_moments_with_sigma(&a, 0.0, 7);
        let design = x.hcat(&k);
        let gram = design.gram();
        for i in 0..6 {
            for j in 0..6 {
                assert!((clean.gram[(i, j)] - gram[(i, j)]).abs() < 1e-9);
            }
        }
        let xty = design.matvec_t(&y);
        for (a, b) in clean.xty.iter().zip(&xty) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn binary_and_csv_roundtrip() {
        let (x, k, y) = toy_augmented(12, 2, 50);
        let a = AugmentedMatrix::augment(&x, &k, &y).unwrap();
        let bound = crate::model::empirical_row_bound(&x, Some(&k), &y);
        let budget = PrivacyBudget::new(1.0, 0.01).unwrap();
        let out = jlt_privatize(&a, &budget, 6, bound, 1, &JltOptions::default()).unwrap();
        let path = std::env::temp_dir().join("dpko_privatized.bin");
        write_binary(&out, &path).unwrap();
        let back = read_binary(&path).unwrap();
        assert_eq!(back.xstar, out.xstar);
        assert_eq!(back.xtildestar, out.xtildestar);
        assert_eq!(back.ystar, out.ystar);
        assert_eq!(back.params.w, out.params.w);
        assert_eq!(back.n, out.n);

        let csv_path = std::env::temp_dir().join("dpko_privatized.csv");
        export_csv(&out, &csv_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().next().unwrap().contains("ystar"));
    }
}
