use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::latency::{load_profiles, Metric, ProfileLibrary, DEFAULT_KAPPA};
use crate::routing_opt::{BetaParams, PgaParams, RoutingContext};
use crate::score_dual::SubgradientParams;
use crate::setup_search::{load_memory, MemoryTable, ModelChoices, Rho, SetupSpace};
use crate::workload::{load_scores, synth_scores, BetaShape, ScoreMatrix};

/// Planner configuration, read from a TOML document.
///
/// ```toml
/// gpu_count = 4
/// arrival_rate = 20.0
/// latency_target_ms = 500.0
/// metric = "TTFT"
///
/// [files]
/// profiles = "profiles.csv"
/// memory = "memory.csv"
/// scores = "scores.csv"
///
/// [[models]]
/// name = "llama-8b"
/// tp = [1, 2]
/// rho = [0.5, 1.0]
/// ```
///
/// Paths are relative to the config file. Without `files.scores`, a
/// `[synthetic]` block is required and every model needs a `score_shape`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub gpu_count: usize,
    /// Requests per second.
    pub arrival_rate: f64,
    pub latency_target_ms: f64,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    #[serde(default = "default_rho_min")]
    pub rho_min: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; all available cores when absent.
    pub parallelism: Option<usize>,
    pub files: FilesConfig,
    pub synthetic: Option<SyntheticConfig>,
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub dual: SubgradientParams,
    #[serde(default)]
    pub pga: PgaParams,
    #[serde(default)]
    pub beta: BetaConfig,
}

fn default_metric() -> Metric {
    Metric::Ttft
}

fn default_rho_min() -> f64 {
    1.0
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilesConfig {
    pub profiles: PathBuf,
    pub memory: PathBuf,
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_prompts: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub tp: Vec<u32>,
    pub rho: Vec<f64>,
    pub score_shape: Option<BetaShape>,
}

/// Optional overrides; unset fields scale with the latency target.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaConfig {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub epsilon: Option<f64>,
}

impl PlannerConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.gpu_count < 1 {
            return Err(Error::validation("gpu_count must be at least 1"));
        }
        if !(self.arrival_rate > 0.0 && self.arrival_rate.is_finite()) {
            return Err(Error::validation(format!("arrival_rate = {} must be positive", self.arrival_rate)));
        }
        if !(self.latency_target_ms > 0.0 && self.latency_target_ms.is_finite()) {
            return Err(Error::validation(format!(
                "latency_target_ms = {} must be positive",
                self.latency_target_ms
            )));
        }
        if !(self.rho_min > 0.0 && self.rho_min <= 1.0) {
            return Err(Error::validation(format!("rho_min = {} must be in (0, 1]", self.rho_min)));
        }
        if !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return Err(Error::validation(format!("kappa = {} must be at least 1", self.kappa)));
        }
        if self.parallelism == Some(0) {
            return Err(Error::validation("parallelism must be at least 1"));
        }
        if self.models.is_empty() {
            return Err(Error::validation("models: at least one model is required"));
        }
        match (&self.files.scores, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::validation("files.scores and [synthetic] are mutually exclusive"))
            }
            (None, None) => return Err(Error::validation("either files.scores or [synthetic] is required")),
            (None, Some(_)) => {
                if let Some(m) = self.models.iter().find(|m| m.score_shape.is_none()) {
                    return Err(Error::validation(format!(
                        "models.{}.score_shape is required for synthetic scores",
                        m.name
                    )));
                }
            }
            (Some(_), None) => {}
        }
        self.dual.validate()?;
        self.pga.validate()?;
        self.beta_params().validate()?;
        self.space()?.validate()
    }

    pub fn model_names(&self) -> Vec<String> {
        self.models.iter().map(|m| m.name.clone()).collect()
    }

    pub fn space(&self) -> Result<SetupSpace> {
        let models = self
            .models
            .iter()
            .map(|m| {
                let rho = m
                    .rho
                    .iter()
                    .map(|&r| Rho::new(r).map_err(|e| Error::validation(format!("models.{}.rho: {e}", m.name))))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ModelChoices { model: m.name.clone(), tp: m.tp.clone(), rho })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SetupSpace { models })
    }

    pub fn rho_min(&self) -> Result<Rho> {
        Rho::new(self.rho_min).map_err(|e| Error::validation(format!("rho_min: {e}")))
    }

    pub fn beta_params(&self) -> BetaParams {
        let mut p = BetaParams::for_target(self.latency_target_ms, self.pga);
        if let Some(v) = self.beta.min {
            p.beta_min = v;
        }
        if let Some(v) = self.beta.max {
            p.beta_max = v;
            if self.beta.epsilon.is_none() {
                p.epsilon = (p.beta_max - p.beta_min) / 1024.0;
            }
        }
        if let Some(v) = self.beta.epsilon {
            p.epsilon = v;
        }
        p
    }
}

/// A validated config with every referenced input loaded.
#[derive(Debug, Clone)]
pub struct Planner {
    pub config: PlannerConfig,
    pub space: SetupSpace,
    pub scores: ScoreMatrix,
    pub profiles: ProfileLibrary,
    pub memory: MemoryTable,
}

impl Planner {
    /// Reads and validates the config at `path`, then loads its inputs.
    /// `seed` overrides the config's seed.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: PlannerConfig = toml::from_str(&text)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        if let Some(s) = seed {
            config.seed = s;
        }
        config.validate()?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let names = config.model_names();
        let scores = match (&config.files.scores, &config.synthetic) {
            (Some(p), _) => load_scores(&base.join(p), &names)?,
            (None, Some(syn)) => {
                let shapes: Vec<BetaShape> = config.models.iter().filter_map(|m| m.score_shape).collect();
                synth_scores(syn.n_prompts, &shapes, config.seed)?.with_model_names(names)?
            }
            (None, None) => unreachable!("validated above"),
        };
        let profiles = load_profiles(&base.join(&config.files.profiles))?;
        let memory = load_memory(&base.join(&config.files.memory))?;
        let space = config.space()?;
        Ok(Self { config, space, scores, profiles, memory })
    }

    pub fn routing(&self) -> RoutingContext<'_> {
        let c = &self.config;
        let mut ctx =
            RoutingContext::new(&self.scores, &self.profiles, c.arrival_rate, c.latency_target_ms, c.metric);
        ctx.kappa = c.kappa;
        ctx.dual = c.dual;
        ctx
    }
}
