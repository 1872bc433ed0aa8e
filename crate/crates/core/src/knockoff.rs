//! Knockoff copies and the augmented matrix `[X  X~  y]`.
//!
//! Under an i.i.d. entry law, a valid model-X knockoff matrix is simply an
//! independent copy of the design drawn from the same distribution. What
//! matters for the downstream selection guarantee is that the copy comes
//! from a stream independent of the design even when the user passes the
//! same seed, hence the dedicated stream tag here.

use crate::linalg::Mat;
use crate::model::{sample_matrix, DesignDistribution, ModelError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KnockoffError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("p must be at least 1")]
    EmptyDesign,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Independent copy of the design, drawn from the same entry law on a
/// stream derived from `(seed, "knockoff")`.
pub fn sample_knockoffs(
    n: usize,
    p: usize,
    dist: &DesignDistribution,
    seed: u64,
) -> Result<Mat, KnockoffError> {
    Ok(sample_matrix(n, p, dist, seed, "knockoff")?)
}

/// Column layout of an augmented matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentedLayout {
    pub p: usize,
    pub has_knockoffs: bool,
}

impl AugmentedLayout {
    pub fn ncols(&self) -> usize {
        if self.has_knockoffs {
            2 * self.p + 1
        } else {
            self.p + 1
        }
    }
}

/// Borrowed view of `[X  X~  y]` (or `[X  y]` when no knockoffs are
/// attached). Rows are assembled on demand; nothing is copied up front.
#[derive(Debug, Clone, Copy)]
pub struct AugmentedMatrix<'a> {
    x: &'a Mat,
    knockoffs: Option<&'a Mat>,
    y: &'a [f64],
}

impl<'a> AugmentedMatrix<'a> {
    /// `[X  X~  y]` with shape checks.
    pub fn augment(x: &'a Mat, knockoffs: &'a Mat, y: &'a [f64]) -> Result<Self, KnockoffError> {
        if x.ncols() == 0 {
            return Err(KnockoffError::EmptyDesign);
        }
        if knockoffs.nrows() != x.nrows() || knockoffs.ncols() != x.ncols() {
            return Err(KnockoffError::DimensionMismatch(format!(
                "knockoffs are {}x{}, design is {}x{}",
                knockoffs.nrows(),
                knockoffs.ncols(),
                x.nrows(),
                x.ncols()
            )));
        }
        if y.len() != x.nrows() {
            return Err(KnockoffError::DimensionMismatch(format!(
                "y has length {}, design has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        Ok(AugmentedMatrix {
            x,
            knockoffs: Some(knockoffs),
            y,
        })
    }

    /// `[X  y]` without a knockoff block, for the plain regression path.
    pub fn without_knockoffs(x: &'a Mat, y: &'a [f64]) -> Result<Self, KnockoffError> {
        if x.ncols() == 0 {
            return Err(KnockoffError::EmptyDesign);
        }
        if y.len() != x.nrows() {
            return Err(KnockoffError::DimensionMismatch(format!(
                "y has length {}, design has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        Ok(AugmentedMatrix {
            x,
            knockoffs: None,
            y,
        })
    }

    pub fn layout(&self) -> AugmentedLayout {
        AugmentedLayout {
            p: self.x.ncols(),
            has_knockoffs: self.knockoffs.is_some(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.layout().ncols()
    }

    /// Write row `i` of the concatenation into `buf` (length `ncols`).
    pub fn write_row(&self, i: usize, buf: &mut [f64]) {
        let p = self.x.ncols();
        debug_assert_eq!(buf.len(), self.ncols());
        buf[..p].copy_from_slice(self.x.row(i));
        if let Some(k) = self.knockoffs {
            buf[p..2 * p].copy_from_slice(k.row(i));
        }
        buf[self.ncols() - 1] = self.y[i];
    }

    /// Materialize the concatenation (small inputs only).
    pub fn to_mat(&self) -> Mat {
        let mut m = Mat::zeros(self.nrows(), self.ncols());
        for i in 0..self.nrows() {
            self.write_row(i, m.row_mut(i));
        }
        m
    }

    /// Recover `(X, X~, y)` as owned values; inverse of `augment`.
    pub fn split(&self) -> (Mat, Option<Mat>, Vec<f64>) {
        (self.x.clone(), self.knockoffs.cloned(), self.y.to_vec())
    }
}
