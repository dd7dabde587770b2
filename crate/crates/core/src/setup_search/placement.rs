use crate::error::{Error, Result};

use super::{MemoryTable, SystemSetup};

/// Capacity slack for summing decimal memory fractions.
const CAPACITY_EPS: f64 = 1e-9;

/// One tensor-parallel shard and the GPU memory fraction it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub model: String,
    pub size: f64,
}

impl Shard {
    pub fn new(model: impl Into<String>, size: f64) -> Self {
        Self { model: model.into(), size }
    }
}

/// `tp_i` shards of size `m_i(tp_i)` per model, in model order.
pub fn shard_memory_list(setup: &SystemSetup, mem: &MemoryTable) -> Result<Vec<Shard>> {
    let mut out = Vec::new();
    for ms in &setup.per_model {
        let size = mem.get(&ms.model, ms.tp).ok_or_else(|| {
            Error::config(format!("missing memory entry for ({}, tp={})", ms.model, ms.tp))
        })?;
        out.extend((0..ms.tp).map(|_| Shard::new(ms.model.clone(), size)));
    }
    Ok(out)
}

/// First-fit decreasing with unit GPU capacity and no two shards of one
/// model on the same GPU. Returns the GPU index of every shard (input
/// order), or `None` if some shard cannot be placed.
///
/// Shards are visited by size descending, then model name, then input order.
pub fn ffd_place(shards: &[Shard], gpus: usize) -> Result<Option<Vec<usize>>> {
    if gpus == 0 {
        return Err(Error::validation("GPU count must be at least 1"));
    }
    if let Some(s) = shards.iter().find(|s| !(s.size > 0.0 && s.size <= 1.0)) {
        return Err(Error::validation(format!(
            "shard of `{}` has size {}, must be in (0, 1]",
            s.model, s.size
        )));
    }
    let mut order: Vec<usize> = (0..shards.len()).collect();
    order.sort_by(|&a, &b| {
        shards[b]
            .size
            .total_cmp(&shards[a].size)
            .then_with(|| shards[a].model.cmp(&shards[b].model))
    });

    let mut free = vec![1.0f64; gpus];
    let mut hosted: Vec<Vec<&str>> = vec![Vec::new(); gpus];
    let mut placement = vec![usize::MAX; shards.len()];
    for idx in order {
        let shard = &shards[idx];
        let slot = (0..gpus).find(|&g| {
            free[g] + CAPACITY_EPS >= shard.size && !hosted[g].contains(&shard.model.as_str())
        });
        match slot {
            Some(g) => {
                free[g] -= shard.size;
                hosted[g].push(&shard.model);
                placement[idx] = g;
            }
            None => return Ok(None),
        }
    }
    Ok(Some(placement))
}

pub fn ffd_feasible(shards: &[Shard], gpus: usize) -> Result<bool> {
    Ok(ffd_place(shards, gpus)?.is_some())
}
