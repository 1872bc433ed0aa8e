//! Feature statistics and the knockoff selection rule.
//!
//! `W_j = f(v_j; a) - f(v_{j+p}; a)` compares a coordinate of the (debiased)
//! estimate against its knockoff copy. Under the null the two are
//! exchangeable, so `W_j` is sign-symmetric, and the data-driven threshold
//! turns that symmetry into a finite-sample FDR guarantee.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("estimate length {0} is odd; expected (original, knockoff) pairs")]
    OddLength(usize),
    #[error("threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("target FDR must lie in (0, 1), got {0}")]
    BadTarget(f64),
    #[error("ground truth has no signals (s0 = 0)")]
    EmptySupport,
}

/// The coordinate-wise statistic `f(x; a)`.
#[derive(Debug, Clone, Copy)]
pub enum StatisticKind {
    /// `f(x; a) = |x|`: magnitude of the debiased coordinate.
    AbsDebiased,
    /// `f(x; a) = (|x| - a)_+ / phi_w`: magnitude of the lasso coordinate
    /// recovered from the debiased one (lasso coefficient difference).
    Lcd { phi_w: f64 },
    /// User statistic with its regularity metadata (Lipschitz constant and
    /// the linear-growth constants); the metadata is carried, not checked.
    Custom {
        f: fn(f64, f64) -> f64,
        lipschitz: f64,
        c_a: f64,
        c_x: f64,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct StatisticFamily {
    pub kind: StatisticKind,
    /// Scale argument `a` used when evaluating on data.
    pub scale: f64,
}

impl StatisticFamily {
    pub fn abs_debiased() -> Self {
        StatisticFamily {
            kind: StatisticKind::AbsDebiased,
            scale: 1.0,
        }
    }

    /// LCD statistic for a lasso run at `lambda` under ridge factor
    /// `phi_w = 1 + w^2/n`.
    pub fn lcd(lambda: f64, w: f64, n: usize) -> Self {
        StatisticFamily {
            kind: StatisticKind::Lcd {
                phi_w: 1.0 + w * w / n as f64,
            },
            scale: lambda,
        }
    }

    pub fn eval(&self, x: f64, a: f64) -> f64 {
        match self.kind {
            StatisticKind::AbsDebiased => x.abs(),
            StatisticKind::Lcd { phi_w } => (x.abs() - a).max(0.0) / phi_w,
            StatisticKind::Custom { f, .. } => f(x, a),
        }
    }

    /// Evaluate at the family's own scale.
    pub fn eval_scaled(&self, x: f64) -> f64 {
        self.eval(x, self.scale)
    }
}

/// `W_j = f(v_j; a) - f(v_{j+p}; a)` over an (original, knockoff) estimate
/// of even length `2p`.
pub fn feature_statistics(
    estimate: &[f64],
    family: &StatisticFamily,
) -> Result<Vec<f64>, FilterError> {
    if estimate.len() % 2 != 0 {
        return Err(FilterError::OddLength(estimate.len()));
    }
    let p = estimate.len() / 2;
    Ok((0..p)
        .map(|j| family.eval_scaled(estimate[j]) - family.eval_scaled(estimate[j + p]))
        .collect())
}

/// Estimated false discovery proportion at threshold `t`. The `plus`
/// variant adds one to the negative count; only that variant carries the
/// exact finite-sample FDR guarantee.
pub fn fdp_hat(w: &[f64], t: f64, plus: bool) -> Result<f64, FilterError> {
    if !(t > 0.0) {
        return Err(FilterError::BadThreshold(t));
    }
    let negatives = w.iter().filter(|&&v| v <= -t).count();
    let positives = w.iter().filter(|&&v| v >= t).count();
    let numerator = negatives + usize::from(plus);
    Ok(numerator as f64 / positives.max(1) as f64)
}

/// Smallest candidate `t` with `fdp_hat(W, t) <= q`; candidates are the
/// distinct nonzero `|W_j|`, and the answer is `+inf` when none qualifies.
pub fn knockoff_threshold(w: &[f64], q: f64, plus: bool) -> Result<f64, FilterError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(FilterError::BadTarget(q));
    }
    let mut candidates: Vec<f64> = w.iter().map(|v| v.abs()).filter(|v| *v > 0.0).collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    for t in candidates {
        if fdp_hat(w, t, plus)? <= q {
            return Ok(t);
        }
    }
    Ok(f64::INFINITY)
}

/// `{ j : W_j >= t_hat }`; empty at `t_hat = +inf`.
pub fn select(w: &[f64], t_hat: f64) -> Vec<usize> {
    w.iter()
        .enumerate()
        .filter_map(|(j, &v)| (v >= t_hat).then_some(j))
        .collect()
}

/// Realized `(FDP, Power)` against the true support (simulation mode).
pub fn evaluate(selected: &[usize], support: &[usize]) -> Result<(f64, f64), FilterError> {
    if support.is_empty() {
        return Err(FilterError::EmptySupport);
    }
    let in_support = |j: &usize| support.binary_search(j).is_ok();
    let true_hits = selected.iter().filter(|j| in_support(j)).count();
    let false_hits = selected.len() - true_hits;
    let fdp = false_hits as f64 / selected.len().max(1) as f64;
    let power = true_hits as f64 / support.len() as f64;
    Ok((fdp, power))
}

/// One filter run: statistics in, threshold and selection out.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub w: Vec<f64>,
    pub t_hat: f64,
    pub selected: Vec<usize>,
    /// Estimate at the chosen threshold; `None` when nothing qualified.
    pub fdp_hat_at_t: Option<f64>,
    pub plus: bool,
}

pub fn run_filter(w: Vec<f64>, q: f64, plus: bool) -> Result<SelectionResult, FilterError> {
    let t_hat = knockoff_threshold(&w, q, plus)?;
    let selected = select(&w, t_hat);
    let fdp_hat_at_t = t_hat
        .is_finite()
        .then(|| fdp_hat(&w, t_hat, plus))
        .transpose()?;
    Ok(SelectionResult {
        w,
        t_hat,
        selected,
        fdp_hat_at_t,
        plus,
    })
}
