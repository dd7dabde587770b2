//! Maximum achievable average score under target routing fractions.
//!
//! Given target counts `c` (prompts per model, `Σc = N`), the best average
//! score is a count-constrained assignment problem. Dualizing only the count
//! constraints with per-model prices `α` gives
//!
//! ```text
//! g(α) = (1/N) [ Σ_j max_i (s_i(x_j) − α_i) + Σ_i α_i c_i ]
//! ```
//!
//! which is convex, and for fixed prices every prompt independently picks
//! `argmax_i (s_i(x_j) − α_i)`. [`solve_dual`] minimizes `g` with a
//! subgradient method, repairs the induced assignment to match the counts,
//! then runs count-preserving exchange cycles until no improving exchange is
//! left. The exchange phase certifies optimality and yields exact prices, so
//! the reported value and `α⋆` (the gradient of the score with respect to the
//! routing fractions) are exact rather than subgradient approximations.

mod exchange;
mod oracle;

pub use oracle::{exact_score_oracle, exact_score_oracle_bounded, DEFAULT_ORACLE_MAX_PROMPTS};

use crate::error::{Error, Result};
use crate::workload::ScoreMatrix;

const COUNT_SUM_TOL: f64 = 1e-9;
const INTEGRAL_TOL: f64 = 1e-9;

/// Target number of prompts per model. Fractional counts are allowed
/// (continuous relaxation `c_i = N·w_i`).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetCounts {
    counts: Vec<f64>,
}

impl TargetCounts {
    /// Validates `Σc = n_prompts` (absolute tolerance 1e-9) and `c ≥ 0`.
    pub fn new(counts: Vec<f64>, n_prompts: usize) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::validation("target counts are empty"));
        }
        for (i, &c) in counts.iter().enumerate() {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::validation(format!("target count {i} is {c}, must be ≥ 0")));
            }
        }
        let sum: f64 = counts.iter().sum();
        if (sum - n_prompts as f64).abs() > COUNT_SUM_TOL {
            return Err(Error::validation(format!(
                "target counts sum to {sum}, expected {n_prompts}"
            )));
        }
        Ok(Self { counts })
    }

    /// Counts `N·w_i`, rescaled so they sum to `N` exactly up to rounding.
    pub fn from_fractions(w: &[f64], n_prompts: usize) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if w.iter().any(|&x| !x.is_finite() || x < 0.0) || !(total > 0.0) {
            return Err(Error::validation("routing fractions must be nonnegative and non-zero"));
        }
        let n = n_prompts as f64;
        let counts = w.iter().map(|&x| n * x / total).collect();
        Self::new(counts, n_prompts)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Whether every count is an integer (within 1e-9).
    pub fn is_integral(&self) -> bool {
        self.counts.iter().all(|c| (c - c.round()).abs() <= INTEGRAL_TOL)
    }
}

/// Per-model dual prices `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPrices(pub Vec<f64>);

impl DualPrices {
    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shifts all prices so the smallest is zero. `g` and the assignment
    /// rule are invariant under uniform shifts when `Σc = N`.
    pub fn normalized(mut self) -> Self {
        let min = self.0.iter().copied().fold(f64::INFINITY, f64::min);
        if min.is_finite() {
            for a in &mut self.0 {
                *a -= min;
            }
        }
        self
    }
}

/// Subgradient method hyperparameters. Step `η_t = eta0 / √(t+1)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubgradientParams {
    pub eta0: f64,
    pub max_iter: usize,
    /// Stop once every `|n_i(α) − c_i|` is strictly below this many prompts.
    pub residual_tol: f64,
}

impl Default for SubgradientParams {
    fn default() -> Self {
        Self { eta0: 1.0, max_iter: 500, residual_tol: 1.0 }
    }
}

impl SubgradientParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::validation("dual.eta0 must be positive"));
        }
        if !(self.residual_tol >= 0.0) {
            return Err(Error::validation("dual.residual_tol must be nonnegative"));
        }
        Ok(())
    }
}

/// Result of [`solve_dual`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    /// Optimal prices, gauge-fixed so `min α_i = 0`.
    pub alpha_star: DualPrices,
    /// Maximum achievable average score for the target counts.
    pub score: f64,
    /// Model serving each prompt in the optimal assignment (largest share
    /// for prompts split under fractional counts; ties to lowest index).
    pub assignment: Vec<usize>,
    /// `(n_i(α⋆) − c_i)/N` for the price-induced assignment.
    pub count_residual: Vec<f64>,
    /// `|g(α⋆) − primal value|`.
    pub duality_gap: f64,
    /// Subgradient iterations performed.
    pub iterations: usize,
    /// Whether the subgradient phase reached its residual tolerance before
    /// `max_iter`. The exchange phase runs either way.
    pub converged: bool,
    /// Improving exchange cycles applied after repair.
    pub exchange_cycles: usize,
}

fn check_dims(scores: &ScoreMatrix, m: usize, what: &str) -> Result<()> {
    if m != scores.n_models() {
        return Err(Error::validation(format!(
            "{what} has length {m}, score matrix has {} models",
            scores.n_models()
        )));
    }
    Ok(())
}

/// Index of the largest adjusted score `s_i − α_i`, ties to the lowest index.
#[inline]
pub(crate) fn best_model(row: &[f64], alpha: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_v = row[0] - alpha[0];
    for i in 1..row.len() {
        let v = row[i] - alpha[i];
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    (best, best_v)
}

/// Per-prompt argmax of adjusted scores, plus the resulting counts `n_i(α)`.
pub fn assign_prompts(scores: &ScoreMatrix, alpha: &DualPrices) -> Result<(Vec<usize>, Vec<usize>)> {
    check_dims(scores, alpha.len(), "price vector")?;
    Ok(assign_unchecked(scores, alpha.as_slice()))
}

fn assign_unchecked(scores: &ScoreMatrix, alpha: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut counts = vec![0usize; alpha.len()];
    let assignment = scores
        .rows()
        .map(|row| {
            let (i, _) = best_model(row, alpha);
            counts[i] += 1;
            i
        })
        .collect();
    (assignment, counts)
}

/// `g(α)` exactly as defined in the module docs.
pub fn dual_objective(scores: &ScoreMatrix, counts: &TargetCounts, alpha: &DualPrices) -> Result<f64> {
    check_dims(scores, alpha.len(), "price vector")?;
    check_dims(scores, counts.len(), "target counts")?;
    Ok(dual_value(scores, counts.as_slice(), alpha.as_slice()))
}

pub(crate) fn dual_value(scores: &ScoreMatrix, counts: &[f64], alpha: &[f64]) -> f64 {
    let inner: f64 = scores.rows().map(|row| best_model(row, alpha).1).sum();
    let linear: f64 = alpha.iter().zip(counts).map(|(a, c)| a * c).sum();
    (inner + linear) / scores.n_prompts() as f64
}

/// Solves the dual from zero prices.
pub fn solve_dual(
    scores: &ScoreMatrix,
    counts: &TargetCounts,
    params: &SubgradientParams,
) -> Result<DualSolution> {
    solve_dual_from(scores, counts, params, None)
}

/// Solves the dual, starting the subgradient method from `warm` when given.
///
/// For integer counts the reported score is the average of the repaired,
/// exchange-optimal integral assignment. For fractional counts it is
/// `g(α⋆)`; both coincide with the optimal value of the relaxed problem.
pub fn solve_dual_from(
    scores: &ScoreMatrix,
    counts: &TargetCounts,
    params: &SubgradientParams,
    warm: Option<&DualPrices>,
) -> Result<DualSolution> {
    check_dims(scores, counts.len(), "target counts")?;
    params.validate()?;
    let m = scores.n_models();
    let n = scores.n_prompts() as f64;
    let c = counts.as_slice();

    let mut alpha = match warm {
        Some(a) => {
            check_dims(scores, a.len(), "warm-start prices")?;
            a.0.clone()
        }
        None => vec![0.0; m],
    };

    // Subgradient phase with best-iterate tracking.
    let mut best_alpha = alpha.clone();
    let mut best_g = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let (_, n_alpha) = assign_unchecked(scores, &alpha);
        let g = dual_value(scores, c, &alpha);
        if g < best_g {
            best_g = g;
            best_alpha.clone_from(&alpha);
        }
        if n_alpha.iter().zip(c).all(|(&ni, &ci)| (ni as f64 - ci).abs() < params.residual_tol) {
            converged = true;
            break;
        }
        if iterations >= params.max_iter {
            break;
        }
        let eta = params.eta0 / ((iterations + 1) as f64).sqrt();
        for i in 0..m {
            alpha[i] += eta * (n_alpha[i] as f64 - c[i]) / n;
        }
        iterations += 1;
    }

    // Repair to the target counts, then exchange to optimality.
    let mut plan = exchange::MassPlan::from_prices(scores, &best_alpha);
    plan.repair(scores, c, &best_alpha);
    let outcome = plan.polish(scores);

    let alpha_star = DualPrices(outcome.prices).normalized();
    let g_star = dual_value(scores, c, &alpha_star.0);
    let primal = plan.value(scores);
    let score = if counts.is_integral() { primal } else { g_star }.clamp(0.0, 1.0);

    let (_, n_star) = assign_unchecked(scores, &alpha_star.0);
    let count_residual = n_star.iter().zip(c).map(|(&ni, &ci)| (ni as f64 - ci) / n).collect();

    Ok(DualSolution {
        alpha_star,
        score,
        assignment: plan.dominant_models(),
        count_residual,
        duality_gap: (g_star - primal).abs(),
        iterations,
        converged,
        exchange_cycles: outcome.cycles,
    })
}
