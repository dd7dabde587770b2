//! Prompt-score matrices: the per-prompt, per-model predicted quality that
//! the score objective is built from.
//!
//! Scores come either from a router export (CSV with a `prompt_id` column
//! followed by one column per model) or from a seeded Beta generator used
//! for synthetic scenarios.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};

pub const PROMPT_ID_COLUMN: &str = "prompt_id";

/// N×M matrix of predicted scores, row `j` column `i` holding the score of
/// model `i` on prompt `j`. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    prompts: Vec<String>,
    models: Vec<String>,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    /// Builds a matrix from row-major data, checking every invariant.
    pub fn new(prompts: Vec<String>, models: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if prompts.is_empty() {
            return Err(Error::validation("score matrix has no prompts"));
        }
        if models.is_empty() {
            return Err(Error::validation("score matrix has no models"));
        }
        if rows.len() != prompts.len() {
            return Err(Error::validation(format!(
                "score matrix has {} rows but {} prompt ids",
                rows.len(),
                prompts.len()
            )));
        }
        let mut seen = HashSet::new();
        for m in &models {
            if !seen.insert(m.as_str()) {
                return Err(Error::validation(format!("duplicate model name `{m}`")));
            }
        }
        let mut scores = Vec::with_capacity(prompts.len() * models.len());
        for (j, row) in rows.into_iter().enumerate() {
            if row.len() != models.len() {
                return Err(Error::validation(format!(
                    "row {j} has {} values, expected {}",
                    row.len(),
                    models.len()
                )));
            }
            for (i, &v) in row.iter().enumerate() {
                check_score(v, j, &models[i])?;
            }
            scores.extend(row);
        }
        Ok(Self { prompts, models, scores })
    }

    /// Convenience constructor with generated prompt ids `p1..pN` and model
    /// names `m1..mM`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let prompts = (1..=n).map(|j| format!("p{j}")).collect();
        let models = (1..=m).map(|i| format!("m{i}")).collect();
        Self::new(prompts, models, rows)
    }

    pub fn n_prompts(&self) -> usize {
        self.prompts.len()
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    /// Scores of every model on prompt `j`.
    pub fn row(&self, j: usize) -> &[f64] {
        let m = self.models.len();
        &self.scores[j * m..(j + 1) * m]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.scores.chunks_exact(self.models.len())
    }

    pub fn get(&self, prompt: usize, model: usize) -> f64 {
        self.scores[prompt * self.models.len() + model]
    }

    /// Mean score of model `i` over all prompts.
    pub fn column_mean(&self, i: usize) -> f64 {
        self.rows().map(|r| r[i]).sum::<f64>() / self.n_prompts() as f64
    }

    /// Returns the same data under new model names (same order and count).
    pub fn with_model_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.models.len() {
            return Err(Error::validation(format!(
                "expected {} model names, got {}",
                self.models.len(),
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for m in &names {
            if !seen.insert(m.as_str()) {
                return Err(Error::validation(format!("duplicate model name `{m}`")));
            }
        }
        self.models = names;
        Ok(self)
    }

    /// Writes the matrix as score CSV. Values use the shortest decimal
    /// representation that parses back to the identical `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![PROMPT_ID_COLUMN.to_string()];
        header.extend(self.models.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.prompts.iter().zip(self.rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_score(v: f64, row: usize, model: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::validation(format!(
            "row {row}: score {v} for model `{model}` is outside [0, 1]"
        )));
    }
    Ok(())
}

/// Loads a score CSV, reordering columns to `model_order`.
pub fn load_scores(path: &Path, model_order: &[String]) -> Result<ScoreMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_scores(file, model_order).map_err(|e| match e {
        Error::Csv { source, .. } => Error::csv(path, source),
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses score CSV from any reader. Row indices in errors are 0-based data
/// rows (the header is not counted).
pub fn read_scores<R: Read>(reader: R, model_order: &[String]) -> Result<ScoreMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::csv("<scores>", e))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return Err(Error::validation("score file is empty"));
    }
    let id_col = header
        .iter()
        .position(|h| h.trim() == PROMPT_ID_COLUMN)
        .ok_or_else(|| Error::config(format!("missing column `{PROMPT_ID_COLUMN}`")))?;
    if model_order.is_empty() {
        return Err(Error::validation("model order is empty"));
    }
    let cols = model_order
        .iter()
        .map(|m| {
            header
                .iter()
                .position(|h| h.trim() == m)
                .ok_or_else(|| Error::config(format!("missing column `{m}`")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut prompts = Vec::new();
    let mut rows = Vec::new();
    for (j, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv("<scores>", e))?;
        prompts.push(rec.get(id_col).unwrap_or_default().trim().to_string());
        let row = cols
            .iter()
            .zip(model_order)
            .map(|(&c, m)| {
                let raw = rec.get(c).unwrap_or_default().trim();
                let v: f64 = raw.parse().map_err(|_| {
                    Error::validation(format!("row {j}: cannot parse `{raw}` for model `{m}`"))
                })?;
                check_score(v, j, m)?;
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::validation("score file has no data rows"));
    }
    ScoreMatrix::new(prompts, model_order.to_vec(), rows)
}

/// Shape parameters of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct BetaShape {
    pub a: f64,
    pub b: f64,
}

impl BetaShape {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

/// Draws an `n_prompts × params.len()` matrix, column `i` i.i.d. from
/// `Beta(params[i])`. Deterministic for a fixed seed; models are named
/// `m1..mM`.
pub fn synth_scores(n_prompts: usize, params: &[BetaShape], seed: u64) -> Result<ScoreMatrix> {
    if n_prompts == 0 {
        return Err(Error::validation("n_prompts must be at least 1"));
    }
    if params.is_empty() {
        return Err(Error::validation("at least one model is required"));
    }
    let dists = params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if !(p.a > 0.0 && p.b > 0.0 && p.a.is_finite() && p.b.is_finite()) {
                return Err(Error::validation(format!(
                    "model {i}: Beta shape ({}, {}) must be positive",
                    p.a, p.b
                )));
            }
            Beta::new(p.a, p.b).map_err(|e| Error::validation(format!("model {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n_prompts)
        .map(|_| dists.iter().map(|d| d.sample(&mut rng).clamp(0.0, 1.0)).collect())
        .collect();
    ScoreMatrix::from_rows(rows)
}
