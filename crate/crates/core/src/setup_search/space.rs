use std::collections::HashSet;

use crate::error::{Error, Result};

use super::placement::{ffd_feasible, shard_memory_list};
use super::{MemoryTable, ModelSetup, Rho, SystemSetup};

/// Candidate tensor-parallelism levels and compute fractions of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelChoices {
    pub model: String,
    pub tp: Vec<u32>,
    pub rho: Vec<Rho>,
}

impl ModelChoices {
    /// Number of `(tp, ρ)` combinations.
    pub fn len(&self) -> usize {
        self.tp.len() * self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn choice(&self, k: usize) -> ModelSetup {
        let r = self.rho.len();
        ModelSetup { model: self.model.clone(), tp: self.tp[k / r], rho: self.rho[k % r] }
    }
}

/// Per-model choice lists; the setup space is their Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct SetupSpace {
    pub models: Vec<ModelChoices>,
}

impl SetupSpace {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::validation("setup space has no models"));
        }
        let mut names = HashSet::new();
        for mc in &self.models {
            if !names.insert(mc.model.as_str()) {
                return Err(Error::validation(format!("model `{}` listed twice", mc.model)));
            }
            if mc.tp.is_empty() {
                return Err(Error::validation(format!("model `{}` has no tp choices", mc.model)));
            }
            if mc.rho.is_empty() {
                return Err(Error::validation(format!("model `{}` has no rho choices", mc.model)));
            }
            if mc.tp.contains(&0) {
                return Err(Error::validation(format!("model `{}`: tp must be ≥ 1", mc.model)));
            }
            if mc.tp.iter().collect::<HashSet<_>>().len() != mc.tp.len() {
                return Err(Error::validation(format!("model `{}`: duplicate tp choice", mc.model)));
            }
            if mc.rho.iter().collect::<HashSet<_>>().len() != mc.rho.len() {
                return Err(Error::validation(format!("model `{}`: duplicate rho choice", mc.model)));
            }
        }
        Ok(())
    }

    /// `Π_i K_i`, saturating.
    pub fn size(&self) -> usize {
        self.models.iter().fold(1usize, |acc, m| acc.saturating_mul(m.len()))
    }

    pub fn model_names(&self) -> Vec<String> {
        self.models.iter().map(|m| m.model.clone()).collect()
    }
}

/// Lexicographic walk over the setup space. The first model varies slowest;
/// within a model, `tp` varies slower than `ρ`, both in the listed order.
#[derive(Debug, Clone)]
pub struct SetupIter<'a> {
    space: &'a SetupSpace,
    digits: Vec<usize>,
    done: bool,
}

impl Iterator for SetupIter<'_> {
    type Item = SystemSetup;

    fn next(&mut self) -> Option<SystemSetup> {
        if self.done {
            return None;
        }
        let setup = SystemSetup::new(
            self.space.models.iter().zip(&self.digits).map(|(mc, &k)| mc.choice(k)).collect(),
        );
        self.done = true;
        for pos in (0..self.digits.len()).rev() {
            self.digits[pos] += 1;
            if self.digits[pos] < self.space.models[pos].len() {
                self.done = false;
                break;
            }
            self.digits[pos] = 0;
        }
        Some(setup)
    }
}

pub fn enumerate_setups(space: &SetupSpace) -> Result<SetupIter<'_>> {
    space.validate()?;
    Ok(SetupIter { space, digits: vec![0; space.models.len()], done: false })
}

/// Aggregate compute demand `C(Θ) = Σ tp_i ρ_i`, in GPUs.
pub fn compute_demand(setup: &SystemSetup) -> f64 {
    compute_demand_micros(setup) as f64 / 1e6
}

pub(crate) fn compute_demand_micros(setup: &SystemSetup) -> u64 {
    setup.per_model.iter().map(|m| u64::from(m.tp) * u64::from(m.rho.micros())).sum()
}

/// Why a setup was pruned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RejectReason {
    /// `C(Θ) < G · ρ_min`.
    UnderUtilized,
    /// `C(Θ) > G`.
    OverBudget,
    /// FFD could not place the shards.
    PlacementInfeasible,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::UnderUtilized => "UNDER_UTILIZED",
            RejectReason::OverBudget => "OVER_BUDGET",
            RejectReason::PlacementInfeasible => "PLACEMENT_INFEASIBLE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retention {
    Retained,
    Rejected(RejectReason),
}

impl Retention {
    pub fn is_retained(self) -> bool {
        self == Retention::Retained
    }
}

/// Compute-window pruning followed by the FFD deployability check.
pub fn retain(setup: &SystemSetup, gpus: usize, rho_min: Rho, mem: &MemoryTable) -> Result<Retention> {
    if gpus == 0 {
        return Err(Error::validation("GPU count must be at least 1"));
    }
    let demand = compute_demand_micros(setup);
    let g = gpus as u64;
    if demand < g * u64::from(rho_min.micros()) {
        return Ok(Retention::Rejected(RejectReason::UnderUtilized));
    }
    if demand > g * u64::from(Rho::full().micros()) {
        return Ok(Retention::Rejected(RejectReason::OverBudget));
    }
    let shards = shard_memory_list(setup, mem)?;
    if !ffd_feasible(&shards, gpus)? {
        return Ok(Retention::Rejected(RejectReason::PlacementInfeasible));
    }
    Ok(Retention::Retained)
}
