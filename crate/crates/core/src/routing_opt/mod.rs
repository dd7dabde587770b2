//! Routing-fraction optimization for a fixed system setup.
//!
//! The latency constraint `L(Θ,w) ≤ τ` is relaxed with a multiplier `β ≥ 0`:
//!
//! ```text
//! J(Θ, w; β) = Ŝ(w) − β (L(Θ, w) − τ)
//! ```
//!
//! [`optimize_fractions`] maximizes `J` over the simplex by projected gradient
//! ascent, using the optimal dual prices as `∇Ŝ` and the piecewise-linear
//! latency models for `∇L`. [`optimize_beta`] bisects on `β` and keeps the
//! solution at the smallest `β` that met the target.

mod simplex;

pub use simplex::{project_simplex, RoutingFractions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::{Metric, ProfileLibrary, SetupLatency, DEFAULT_KAPPA};
use crate::score_dual::{solve_dual, solve_dual_from, DualPrices, SubgradientParams, TargetCounts};
use crate::setup_search::SystemSetup;
use crate::workload::ScoreMatrix;

/// Inputs shared by every setup evaluation.
#[derive(Debug, Clone, Copy)]
pub struct RoutingContext<'a> {
    pub scores: &'a ScoreMatrix,
    pub profiles: &'a ProfileLibrary,
    /// Global arrival rate, requests per second.
    pub lambda: f64,
    /// Latency target, milliseconds.
    pub tau: f64,
    pub metric: Metric,
    /// Loads above `kappa ×` the profiled range make a solution infeasible.
    pub kappa: f64,
    pub dual: SubgradientParams,
}

impl<'a> RoutingContext<'a> {
    pub fn new(
        scores: &'a ScoreMatrix,
        profiles: &'a ProfileLibrary,
        lambda: f64,
        tau: f64,
        metric: Metric,
    ) -> Self {
        Self {
            scores,
            profiles,
            lambda,
            tau,
            metric,
            kappa: DEFAULT_KAPPA,
            dual: SubgradientParams::default(),
        }
    }
}

/// Projected gradient ascent hyperparameters (constant step).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgaParams {
    pub step: f64,
    pub max_iter: usize,
    /// Stop early once a projected step moves no coordinate by more than this.
    pub stationary_tol: f64,
}

impl Default for PgaParams {
    fn default() -> Self {
        Self { step: 0.05, max_iter: 200, stationary_tol: 1e-12 }
    }
}

impl PgaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::validation("pga.step must be positive"));
        }
        if !(self.stationary_tol >= 0.0) {
            return Err(Error::validation("pga.stationary_tol must be nonnegative"));
        }
        Ok(())
    }
}

/// Outcome of [`optimize_fractions`].
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSolveResult {
    pub w: RoutingFractions,
    /// `J(Θ, w; β)` at `w`.
    pub objective: f64,
    /// `Ŝ(w)`.
    pub score: f64,
    /// `L(Θ, w)` in milliseconds.
    pub latency: f64,
    /// Optimal dual prices at `w`, i.e. `∇Ŝ(w)` up to a uniform shift.
    pub alpha: DualPrices,
    /// Per-model load `λ w_i`, requests per second.
    pub loads: Vec<f64>,
    /// Per-model flag: load beyond `κ ×` the profiled range.
    pub out_of_range: Vec<bool>,
    pub iterations: usize,
    /// Whether the iterates became stationary before `max_iter`.
    pub converged: bool,
}

impl RelaxedSolveResult {
    pub fn any_out_of_range(&self) -> bool {
        self.out_of_range.iter().any(|&f| f)
    }
}

fn relaxed_objective(score: f64, latency: f64, beta: f64, tau: f64) -> f64 {
    if beta == 0.0 {
        score
    } else {
        score - beta * (latency - tau)
    }
}

fn check_models(setup: &SystemSetup, scores: &ScoreMatrix) -> Result<()> {
    if setup.len() != scores.n_models() {
        return Err(Error::validation(format!(
            "setup has {} models, score matrix has {}",
            setup.len(),
            scores.n_models()
        )));
    }
    for (ms, name) in setup.per_model.iter().zip(scores.models()) {
        if &ms.model != name {
            return Err(Error::validation(format!(
                "setup model `{}` does not match score column `{name}`",
                ms.model
            )));
        }
    }
    Ok(())
}

/// Maximizes `J(Θ, w; β)` over the simplex for a fixed setup, starting from
/// uniform fractions, and returns the best iterate seen.
pub fn optimize_fractions(
    setup: &SystemSetup,
    beta: f64,
    ctx: &RoutingContext<'_>,
    params: &PgaParams,
) -> Result<RelaxedSolveResult> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::validation(format!("beta {beta} must be finite and ≥ 0")));
    }
    params.validate()?;
    check_models(setup, ctx.scores)?;
    let lat = SetupLatency::new(ctx.profiles, setup, ctx.lambda, ctx.metric)?;
    let n = ctx.scores.n_prompts();
    let m = setup.len();

    let mut w = RoutingFractions::uniform(m);
    let mut warm: Option<DualPrices> = None;
    let mut best: Option<(f64, RoutingFractions)> = None;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let counts = TargetCounts::from_fractions(&w, n)?;
        let dual = solve_dual_from(ctx.scores, &counts, &ctx.dual, warm.as_ref())?;
        let latency = lat.latency(&w)?;
        let value = if beta == 0.0 { dual.score } else { dual.score - beta * latency };
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, w.clone()));
        }
        if iterations >= params.max_iter {
            break;
        }
        let grad_l = lat.gradient(&w)?;
        let ascent: Vec<f64> = w
            .iter()
            .zip(dual.alpha_star.as_slice())
            .zip(&grad_l)
            .map(|((wi, a), gl)| wi + params.step * (a - beta * gl))
            .collect();
        let next = project_simplex(&ascent)?;
        let moved = next.iter().zip(w.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        w = next;
        warm = Some(dual.alpha_star);
        iterations += 1;
        if moved <= params.stationary_tol {
            converged = true;
            break;
        }
    }

    let (_, w) = best.expect("at least one iterate is evaluated");
    // Re-evaluate from a cold start so the reported values depend on `w` only.
    let counts = TargetCounts::from_fractions(&w, n)?;
    let dual = solve_dual(ctx.scores, &counts, &ctx.dual)?;
    let latency = lat.latency(&w)?;
    Ok(RelaxedSolveResult {
        objective: relaxed_objective(dual.score, latency, beta, ctx.tau),
        score: dual.score,
        latency,
        alpha: dual.alpha_star,
        loads: lat.loads(&w),
        out_of_range: lat.out_of_range(&w, ctx.kappa),
        w,
        iterations,
        converged,
    })
}

/// Bisection bounds on `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub beta_min: f64,
    pub beta_max: f64,
    pub epsilon: f64,
    pub pga: PgaParams,
}

impl BetaParams {
    /// Defaults scaled to the latency target: `β ∈ [0, 10/τ]`, `ε` =
    /// interval / 2¹⁰.
    pub fn for_target(tau: f64, pga: PgaParams) -> Self {
        let beta_max = 10.0 / tau;
        Self { beta_min: 0.0, beta_max, epsilon: beta_max / 1024.0, pga }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_min >= 0.0 && self.beta_min < self.beta_max && self.beta_max.is_finite()) {
            return Err(Error::validation(format!(
                "beta bounds must satisfy 0 ≤ beta_min < beta_max (got {} and {})",
                self.beta_min, self.beta_max
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::validation("beta epsilon must be positive"));
        }
        self.pga.validate()
    }

    /// Number of halvings until the interval is no wider than `ε`,
    /// i.e. `⌈log₂((β_max − β_min)/ε)⌉` (zero when already narrow enough).
    pub fn steps(&self) -> usize {
        let mut width = self.beta_max - self.beta_min;
        let mut n = 0;
        while width > self.epsilon {
            width /= 2.0;
            n += 1;
        }
        n
    }
}

/// One bisection probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaStep {
    pub beta: f64,
    pub latency: f64,
    pub score: f64,
    pub feasible: bool,
}

/// Outcome of [`optimize_beta`].
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSearchResult {
    pub w_star: Option<RoutingFractions>,
    pub beta_star: Option<f64>,
    pub feasible: bool,
    pub trace: Vec<BetaStep>,
    /// Full solve at `β⋆`, when feasible.
    pub solution: Option<RelaxedSolveResult>,
    /// The last probe's solve, kept for reporting infeasible setups.
    pub last_probe: Option<RelaxedSolveResult>,
}

/// Bisection on `β`: probes whose latency exceeds `τ` (or that load a model
/// past its profiled range) raise `β_min`; the others lower `β_max` and
/// become the recorded answer.
pub fn optimize_beta(
    setup: &SystemSetup,
    ctx: &RoutingContext<'_>,
    params: &BetaParams,
) -> Result<BetaSearchResult> {
    params.validate()?;
    let mut lo = params.beta_min;
    let mut hi = params.beta_max;
    let mut trace = Vec::new();
    let mut best: Option<(f64, RelaxedSolveResult)> = None;
    let mut last_probe = None;
    for _ in 0..params.steps() {
        let beta = 0.5 * (lo + hi);
        let r = optimize_fractions(setup, beta, ctx, &params.pga)?;
        let feasible = r.latency <= ctx.tau && !r.any_out_of_range();
        trace.push(BetaStep { beta, latency: r.latency, score: r.score, feasible });
        if feasible {
            hi = beta;
            best = Some((beta, r.clone()));
        } else {
            lo = beta;
        }
        last_probe = Some(r);
    }
    Ok(match best {
        Some((beta, r)) => BetaSearchResult {
            w_star: Some(r.w.clone()),
            beta_star: Some(beta),
            feasible: true,
            trace,
            solution: Some(r),
            last_probe,
        },
        None => BetaSearchResult {
            w_star: None,
            beta_star: None,
            feasible: false,
            trace,
            solution: None,
            last_probe,
        },
    })
}
