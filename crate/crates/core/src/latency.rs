//! Setup-specific piecewise-linear latency models.
//!
//! Each (model, tp, ρ, metric) has its own profiled curve of average latency
//! versus offered load. Between knots the curve is linearly interpolated;
//! beyond the last knot the final segment is extended, and callers can ask
//! which models are loaded past `κ ×` the profiled range.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::setup_search::{Rho, SystemSetup};

pub const DEFAULT_KAPPA: f64 = 1.25;

/// Request-level average latency metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "TTFT")]
    Ttft,
    #[serde(rename = "TPOT")]
    Tpot,
    #[serde(rename = "E2E")]
    E2e,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Ttft => "TTFT",
            Metric::Tpot => "TPOT",
            Metric::E2e => "E2E",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "TTFT" => Ok(Metric::Ttft),
            "TPOT" => Ok(Metric::Tpot),
            "E2E" => Ok(Metric::E2e),
            other => Err(Error::validation(format!(
                "unknown metric `{other}` (expected TTFT, TPOT or E2E)"
            ))),
        }
    }
}

/// A profiled operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knot {
    /// Offered load, requests per second.
    pub load: f64,
    /// Average latency, milliseconds.
    pub latency: f64,
}

/// Lookup key of a latency profile.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProfileKey {
    pub model: String,
    pub tp: u32,
    pub rho: Rho,
    pub metric: Metric,
}

impl fmt::Display for ProfileKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, tp={}, rho={}, {})", self.model, self.tp, self.rho, self.metric)
    }
}

/// Latency-vs-load curve for one model under one setup.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyProfile {
    pub key: ProfileKey,
    knots: Vec<Knot>,
}

impl LatencyProfile {
    /// Sorts knots by load and validates them. A profile whose first knot is
    /// above zero load gets a synthetic knot at zero load carrying the first
    /// measured latency.
    pub fn new(key: ProfileKey, mut knots: Vec<Knot>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::validation(format!(
                "profile {key} has {} knot(s), at least 2 required",
                knots.len()
            )));
        }
        for k in &knots {
            if !k.load.is_finite() || k.load < 0.0 {
                return Err(Error::validation(format!("profile {key}: invalid load {}", k.load)));
            }
            if !k.latency.is_finite() || k.latency < 0.0 {
                return Err(Error::validation(format!(
                    "profile {key}: invalid latency {}",
                    k.latency
                )));
            }
        }
        knots.sort_by(|a, b| a.load.total_cmp(&b.load));
        if let Some(w) = knots.windows(2).find(|w| w[0].load >= w[1].load) {
            return Err(Error::validation(format!(
                "profile {key}: duplicate load {}",
                w[1].load
            )));
        }
        if knots[0].load > 0.0 {
            let first = knots[0].latency;
            knots.insert(0, Knot { load: 0.0, latency: first });
        }
        Ok(Self { key, knots })
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    /// Largest profiled load.
    pub fn max_load(&self) -> f64 {
        self.knots[self.knots.len() - 1].load
    }

    /// Index of the segment used at `load`: the segment starting at the last
    /// knot with `knot.load ≤ load`, clamped to the final segment.
    fn segment(&self, load: f64) -> usize {
        let after = self.knots.partition_point(|k| k.load <= load);
        after.saturating_sub(1).min(self.knots.len() - 2)
    }

    fn segment_slope(&self, s: usize) -> f64 {
        let (a, b) = (self.knots[s], self.knots[s + 1]);
        (b.latency - a.latency) / (b.load - a.load)
    }

    pub(crate) fn latency_unchecked(&self, load: f64) -> f64 {
        let first = self.knots[0];
        if load <= first.load {
            return first.latency;
        }
        let s = self.segment(load);
        let a = self.knots[s];
        if load == a.load {
            return a.latency;
        }
        a.latency + self.segment_slope(s) * (load - a.load)
    }

    pub(crate) fn slope_unchecked(&self, load: f64) -> f64 {
        if load < self.knots[0].load {
            return 0.0;
        }
        self.segment_slope(self.segment(load))
    }

    /// Interpolated latency (ms) at `load` (req/s).
    pub fn latency_at(&self, load: f64) -> Result<f64> {
        check_load(load)?;
        Ok(self.latency_unchecked(load))
    }

    /// Slope (ms per req/s) of the active segment; right segment at knots.
    pub fn latency_slope(&self, load: f64) -> Result<f64> {
        check_load(load)?;
        Ok(self.slope_unchecked(load))
    }
}

fn check_load(load: f64) -> Result<()> {
    if load.is_nan() || load < 0.0 {
        return Err(Error::validation(format!("load {load} must be nonnegative")));
    }
    Ok(())
}

/// All profiles, keyed by (model, tp, ρ, metric).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileLibrary {
    profiles: BTreeMap<ProfileKey, LatencyProfile>,
}

impl ProfileLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, profile: LatencyProfile) -> Result<()> {
        if self.profiles.contains_key(&profile.key) {
            return Err(Error::validation(format!("duplicate profile {}", profile.key)));
        }
        self.profiles.insert(profile.key.clone(), profile);
        Ok(())
    }

    pub fn get(&self, key: &ProfileKey) -> Option<&LatencyProfile> {
        self.profiles.get(key)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LatencyProfile> {
        self.profiles.values()
    }

    /// Profiles for every model of `setup`, in model order.
    pub fn resolve(&self, setup: &SystemSetup, metric: Metric) -> Result<Vec<&LatencyProfile>> {
        setup
            .per_model
            .iter()
            .map(|ms| {
                let key = ProfileKey { model: ms.model.clone(), tp: ms.tp, rho: ms.rho, metric };
                self.profiles
                    .get(&key)
                    .ok_or_else(|| Error::config(format!("missing latency profile {key}")))
            })
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct ProfileRow {
    model: String,
    tp: u32,
    rho: f64,
    metric: String,
    load_rps: f64,
    latency_ms: f64,
}

/// Loads profile CSV (`model,tp,rho,metric,load_rps,latency_ms`).
pub fn load_profiles(path: &Path) -> Result<ProfileLibrary> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_profiles(file).map_err(|e| match e {
        Error::Csv { source, .. } => Error::csv(path, source),
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn read_profiles<R: Read>(reader: R) -> Result<ProfileLibrary> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut grouped: BTreeMap<ProfileKey, Vec<Knot>> = BTreeMap::new();
    for (line, row) in rdr.deserialize::<ProfileRow>().enumerate() {
        let row = row.map_err(|e| Error::csv("<profiles>", e))?;
        if row.tp == 0 {
            return Err(Error::validation(format!("row {line}: tp must be ≥ 1")));
        }
        let key = ProfileKey {
            model: row.model,
            tp: row.tp,
            rho: Rho::new(row.rho).map_err(|e| Error::validation(format!("row {line}: {e}")))?,
            metric: row.metric.parse()?,
        };
        grouped.entry(key).or_default().push(Knot { load: row.load_rps, latency: row.latency_ms });
    }
    let mut lib = ProfileLibrary::new();
    for (key, knots) in grouped {
        lib.insert(LatencyProfile::new(key, knots)?)?;
    }
    Ok(lib)
}

/// Latency evaluation for one fixed system setup.
#[derive(Debug, Clone)]
pub struct SetupLatency<'a> {
    profiles: Vec<&'a LatencyProfile>,
    lambda: f64,
}

impl<'a> SetupLatency<'a> {
    pub fn new(lib: &'a ProfileLibrary, setup: &SystemSetup, lambda: f64, metric: Metric) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::validation(format!("arrival rate {lambda} must be positive")));
        }
        Ok(Self { profiles: lib.resolve(setup, metric)?, lambda })
    }

    pub fn n_models(&self) -> usize {
        self.profiles.len()
    }

    fn check(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.profiles.len() {
            return Err(Error::validation(format!(
                "routing vector has length {}, setup has {} models",
                w.len(),
                self.profiles.len()
            )));
        }
        if let Some(x) = w.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::validation(format!("routing fraction {x} must be nonnegative")));
        }
        Ok(())
    }

    /// `L(Θ, w) = Σ_i w_i · ℓ_i(λ w_i)`.
    pub fn latency(&self, w: &[f64]) -> Result<f64> {
        self.check(w)?;
        Ok(self
            .profiles
            .iter()
            .zip(w)
            .map(|(p, &wi)| if wi == 0.0 { 0.0 } else { wi * p.latency_unchecked(self.lambda * wi) })
            .sum())
    }

    /// `∂L/∂w_i = ℓ_i(λ w_i) + λ w_i · ℓ_i'(λ w_i)`.
    pub fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check(w)?;
        Ok(self
            .profiles
            .iter()
            .zip(w)
            .map(|(p, &wi)| {
                let load = self.lambda * wi;
                p.latency_unchecked(load) + load * p.slope_unchecked(load)
            })
            .collect())
    }

    /// Per-model loads `λ w_i`.
    pub fn loads(&self, w: &[f64]) -> Vec<f64> {
        w.iter().map(|wi| self.lambda * wi).collect()
    }

    /// Per-model latency `ℓ_i(λ w_i)`.
    pub fn model_latencies(&self, w: &[f64]) -> Vec<f64> {
        self.profiles.iter().zip(w).map(|(p, wi)| p.latency_unchecked(self.lambda * wi)).collect()
    }

    /// Whether each model's load exceeds `kappa ×` its last profiled load.
    pub fn out_of_range(&self, w: &[f64], kappa: f64) -> Vec<bool> {
        self.profiles
            .iter()
            .zip(w)
            .map(|(p, wi)| self.lambda * wi > kappa * p.max_load())
            .collect()
    }
}

/// `L(Θ, w)` for a setup resolved from `lib`.
pub fn system_latency(
    lib: &ProfileLibrary,
    setup: &SystemSetup,
    w: &[f64],
    lambda: f64,
    metric: Metric,
) -> Result<f64> {
    SetupLatency::new(lib, setup, lambda, metric)?.latency(w)
}

/// `∇_w L(Θ, w)` for a setup resolved from `lib`.
pub fn system_latency_grad(
    lib: &ProfileLibrary,
    setup: &SystemSetup,
    w: &[f64],
    lambda: f64,
    metric: Metric,
) -> Result<Vec<f64>> {
    SetupLatency::new(lib, setup, lambda, metric)?.gradient(w)
}
