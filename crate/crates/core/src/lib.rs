//! Differentially private model-X knockoff variable selection.
//!
//! The pipeline: generate (or load) a design, draw knockoff copies, release
//! the concatenated data through a privatization mechanism, solve an
//! l1-penalized regression on the release, debias it, and run the knockoff
//! filter on the resulting feature statistics. The headline mechanism is a
//! Gaussian Johnson-Lindenstrauss projection of the row-augmented data,
//! which keeps the released second moments positive semi-definite; the
//! classical Gaussian second-moment mechanism is included as the baseline
//! it is compared against.
//!
//! `theory` predicts power and FDP limits by Monte Carlo and screens the
//! parameter regimes in which debiasing is justified; `harness` drives the
//! simulation scenarios and the real-data workflow behind the CLI.

pub mod debias;
pub mod filter;
pub mod harness;
pub mod knockoff;
pub mod linalg;
pub mod model;
mod par;
pub mod privacy;
pub mod rng;
pub mod solver;
pub mod theory;
