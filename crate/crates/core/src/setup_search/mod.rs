//! Discretized system-setup search.
//!
//! Every model picks a tensor-parallelism level and a compute fraction from
//! its own choice lists; the Cartesian product of those choices is pruned by
//! aggregate compute demand and by first-fit-decreasing placement of the
//! induced shards, and every retained setup gets its own `β` search.

mod placement;
mod select;
mod space;

pub use placement::{ffd_feasible, ffd_place, shard_memory_list, Shard};
pub use select::{select_setup, PlanResult, SearchContext, SearchOutcome, SweepRecord};
pub use space::{
    compute_demand, enumerate_setups, retain, ModelChoices, RejectReason, Retention, SetupIter,
    SetupSpace,
};

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

const RHO_SCALE: f64 = 1_000_000.0;

/// Fraction of a GPU's compute granted to a model, in (0, 1].
///
/// Stored in millionths so that equality, hashing and compute-demand sums
/// are exact for decimal inputs such as 0.1 or 0.35.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rho(u32);

impl Rho {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value <= 1.0) {
            return Err(Error::validation(format!("compute fraction {value} must be in (0, 1]")));
        }
        let micros = (value * RHO_SCALE).round();
        if micros < 1.0 {
            return Err(Error::validation(format!("compute fraction {value} is below 1e-6")));
        }
        Ok(Self(micros as u32))
    }

    pub const fn full() -> Self {
        Self(RHO_SCALE as u32)
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / RHO_SCALE
    }

    pub fn micros(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Rho {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Tensor-parallelism level and compute fraction of one model. GPU
/// placement and memory share are derived (FFD placement, `m_i(tp)`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelSetup {
    pub model: String,
    pub tp: u32,
    pub rho: Rho,
}

/// One setup per model, in model order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SystemSetup {
    pub per_model: Vec<ModelSetup>,
}

impl SystemSetup {
    pub fn new(per_model: Vec<ModelSetup>) -> Self {
        Self { per_model }
    }

    pub fn len(&self) -> usize {
        self.per_model.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_model.is_empty()
    }

    /// Ordering key for tie-breaks: `(tp, ρ)` per model, in model order.
    pub fn sort_key(&self) -> Vec<(u32, u32)> {
        self.per_model.iter().map(|m| (m.tp, m.rho.micros())).collect()
    }
}

impl fmt::Display for SystemSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.per_model.iter().enumerate() {
            if i > 0 {
                f.write_str(" | ")?;
            }
            write!(f, "{} tp={} rho={}", m.model, m.tp, m.rho)?;
        }
        Ok(())
    }
}

/// Minimum per-shard GPU memory fraction `m_i(tp)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryTable {
    entries: BTreeMap<(String, u32), f64>,
}

impl MemoryTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: impl Into<String>, tp: u32, fraction: f64) -> Result<()> {
        let model = model.into();
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::validation(format!(
                "memory fraction {fraction} for ({model}, tp={tp}) must be in (0, 1]"
            )));
        }
        if self.entries.insert((model.clone(), tp), fraction).is_some() {
            return Err(Error::validation(format!("duplicate memory entry ({model}, tp={tp})")));
        }
        Ok(())
    }

    pub fn get(&self, model: &str, tp: u32) -> Option<f64> {
        self.entries.get(&(model.to_string(), tp)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Deserialize)]
struct MemoryRow {
    model: String,
    tp: u32,
    mem_fraction: f64,
}

/// Loads memory-table CSV (`model,tp,mem_fraction`).
pub fn load_memory(path: &Path) -> Result<MemoryTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_memory(file).map_err(|e| match e {
        Error::Csv { source, .. } => Error::csv(path, source),
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn read_memory<R: Read>(reader: R) -> Result<MemoryTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut table = MemoryTable::new();
    for row in rdr.deserialize::<MemoryRow>() {
        let row = row.map_err(|e| Error::csv("<memory>", e))?;
        table.insert(row.model, row.tp, row.mem_fraction)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_is_exact_in_decimal() {
        let a = Rho::new(0.1).unwrap();
        let b = Rho::new(0.2).unwrap();
        let c = Rho::new(0.7).unwrap();
        assert_eq!(a.micros() + b.micros() + c.micros(), Rho::full().micros());
        assert_eq!(Rho::new(0.3).unwrap(), Rho::new(0.1 + 0.2).unwrap());
        assert!(Rho::new(0.0).is_err());
        assert!(Rho::new(1.01).is_err());
        assert_eq!(Rho::new(0.5).unwrap().to_string(), "0.5");
    }

    #[test]
    fn memory_csv() {
        let t = read_memory("model,tp,mem_fraction\nA,1,0.9\nA,2,0.5\n".as_bytes()).unwrap();
        assert_eq!(t.get("A", 2), Some(0.5));
        assert_eq!(t.get("A", 4), None);
        assert!(read_memory("model,tp,mem_fraction\nA,1,1.5\n".as_bytes()).is_err());
        assert!(read_memory("model,tp,mem_fraction\nA,1,0.5\nA,1,0.6\n".as_bytes()).is_err());
    }
}
