use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::latency::SetupLatency;
use crate::routing_opt::{optimize_beta, optimize_fractions, BetaParams, RoutingContext, RoutingFractions};

use super::placement::{ffd_place, shard_memory_list};
use super::space::{enumerate_setups, retain, RejectReason, Retention, SetupSpace};
use super::{MemoryTable, Rho, SystemSetup};

/// Scores and latencies closer than this are treated as ties.
const TIE_EPS: f64 = 1e-12;

/// Cluster description plus routing inputs.
#[derive(Debug, Clone, Copy)]
pub struct SearchContext<'a> {
    pub gpus: usize,
    pub rho_min: Rho,
    pub memory: &'a MemoryTable,
    pub routing: RoutingContext<'a>,
    /// Worker threads for candidate evaluation; `None` uses all cores.
    /// Results do not depend on this value.
    pub parallelism: Option<usize>,
}

/// Best operating point found for one retained setup.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    /// Position of the setup in the full enumeration order.
    pub setup_id: usize,
    pub setup: SystemSetup,
    /// Score at `β⋆` when feasible, otherwise at the last bisection probe.
    pub score: f64,
    pub latency: f64,
    pub beta: Option<f64>,
    pub feasible: bool,
    pub w: Vec<f64>,
}

/// The selected setup and routing.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub setup_id: usize,
    pub setup: SystemSetup,
    pub w: RoutingFractions,
    pub beta: f64,
    pub score: f64,
    pub latency: f64,
    pub enumerated_count: usize,
    pub retained_count: usize,
    pub evaluated_count: usize,
    /// Per-model load `λ w_i`.
    pub loads: Vec<f64>,
    /// Per-model latency `ℓ_i(λ w_i)`.
    pub model_latencies: Vec<f64>,
    pub out_of_range: Vec<bool>,
    /// GPUs hosting each model's shards (FFD placement).
    pub placement: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// `None` when no retained setup meets the latency target.
    pub best: Option<PlanResult>,
    /// One record per retained setup, in enumeration order.
    pub records: Vec<SweepRecord>,
    pub enumerated_count: usize,
    pub retained_count: usize,
    pub evaluated_count: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
}

/// Retained setups, enumeration size and reject tallies.
pub type Retained = (Vec<(usize, SystemSetup)>, usize, BTreeMap<RejectReason, usize>);

/// Setups that survive the compute window and FFD check, with their
/// enumeration index. Also returns the enumeration size and reject tallies.
pub fn retained_setups(
    space: &SetupSpace,
    gpus: usize,
    rho_min: Rho,
    mem: &MemoryTable,
) -> Result<Retained> {
    let mut kept = Vec::new();
    let mut rejected = BTreeMap::new();
    let mut enumerated = 0;
    for (id, setup) in enumerate_setups(space)?.enumerate() {
        enumerated += 1;
        match retain(&setup, gpus, rho_min, mem)? {
            Retention::Retained => kept.push((id, setup)),
            Retention::Rejected(r) => *rejected.entry(r).or_insert(0) += 1,
        }
    }
    Ok((kept, enumerated, rejected))
}

fn evaluate(
    id: usize,
    setup: &SystemSetup,
    routing: &RoutingContext<'_>,
    params: &BetaParams,
) -> Result<SweepRecord> {
    let search = optimize_beta(setup, routing, params)?;
    let (r, beta) = match (search.solution, search.last_probe) {
        (Some(sol), _) => (sol, search.beta_star),
        (None, Some(last)) => (last, None),
        (None, None) => (optimize_fractions(setup, params.beta_max, routing, &params.pga)?, None),
    };
    Ok(SweepRecord {
        setup_id: id,
        setup: setup.clone(),
        score: r.score,
        latency: r.latency,
        beta,
        feasible: search.feasible,
        w: r.w.into_inner(),
    })
}

/// Whether `a` beats `b`: higher score, then lower latency, then the
/// lexicographically smaller setup.
fn better(a: &SweepRecord, b: &SweepRecord) -> bool {
    if (a.score - b.score).abs() > TIE_EPS {
        return a.score > b.score;
    }
    if (a.latency - b.latency).abs() > TIE_EPS {
        return a.latency < b.latency;
    }
    a.setup.sort_key().cmp(&b.setup.sort_key()) == Ordering::Less
}

/// Evaluates every retained setup and picks the best feasible one.
pub fn select_setup(space: &SetupSpace, ctx: &SearchContext<'_>, params: &BetaParams) -> Result<SearchOutcome> {
    params.validate()?;
    let (retained, enumerated, rejected) = retained_setups(space, ctx.gpus, ctx.rho_min, ctx.memory)?;
    let routing = ctx.routing;

    let run = || -> Result<Vec<SweepRecord>> {
        retained.par_iter().map(|(id, s)| evaluate(*id, s, &routing, params)).collect()
    };
    let records = match ctx.parallelism {
        Some(0) => return Err(Error::validation("parallelism must be at least 1")),
        Some(1) => retained.iter().map(|(id, s)| evaluate(*id, s, &routing, params)).collect::<Result<Vec<_>>>()?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::validation(format!("cannot start {n} worker threads: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let winner = records.iter().filter(|r| r.feasible).fold(None::<&SweepRecord>, |acc, r| match acc {
        Some(b) if !better(r, b) => Some(b),
        _ => Some(r),
    });

    let best = match winner {
        Some(rec) => Some(plan_from(rec, ctx, enumerated, retained.len(), records.len())?),
        None => None,
    };
    Ok(SearchOutcome {
        best,
        enumerated_count: enumerated,
        retained_count: retained.len(),
        evaluated_count: records.len(),
        records,
        rejected,
    })
}

fn plan_from(
    rec: &SweepRecord,
    ctx: &SearchContext<'_>,
    enumerated: usize,
    retained: usize,
    evaluated: usize,
) -> Result<PlanResult> {
    let r = &ctx.routing;
    let lat = SetupLatency::new(r.profiles, &rec.setup, r.lambda, r.metric)?;
    let shards = shard_memory_list(&rec.setup, ctx.memory)?;
    let gpu_of = ffd_place(&shards, ctx.gpus)?
        .ok_or_else(|| Error::validation(format!("retained setup {} no longer places", rec.setup)))?;
    let mut placement = Vec::with_capacity(rec.setup.len());
    let mut offset = 0;
    for ms in &rec.setup.per_model {
        let tp = ms.tp as usize;
        let mut gpus = gpu_of[offset..offset + tp].to_vec();
        gpus.sort_unstable();
        placement.push(gpus);
        offset += tp;
    }
    Ok(PlanResult {
        setup_id: rec.setup_id,
        setup: rec.setup.clone(),
        w: RoutingFractions::new(rec.w.clone())?,
        beta: rec.beta.unwrap_or(0.0),
        score: rec.score,
        latency: rec.latency,
        enumerated_count: enumerated,
        retained_count: retained,
        evaluated_count: evaluated,
        loads: lat.loads(&rec.w),
        model_latencies: lat.model_latencies(&rec.w),
        out_of_range: lat.out_of_range(&rec.w, r.kappa),
        placement,
    })
}
