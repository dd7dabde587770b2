//! Count-matching repair and exchange-cycle polishing of a prompt→model
//! mass assignment.
//!
//! An assignment meeting the target counts is optimal iff no cyclic exchange
//! of prompt mass between models (model `i₁` hands a prompt to `i₂`, `i₂`
//! hands one to `i₃`, …, back to `i₁`) increases the total score. Only the
//! cheapest prompt per ordered model pair matters, so the check runs on an
//! `M`-node graph. Once no negative cycle remains, the shortest-path
//! potentials of that graph are optimal dual prices.

use crate::workload::ScoreMatrix;

use super::best_model;

/// Masses below this are treated as absent.
const MASS_EPS: f64 = 1e-12;
/// Count imbalance below this is considered matched.
const COUNT_EPS: f64 = 1e-9;
/// Relaxation threshold for the exchange graph.
const COST_EPS: f64 = 1e-12;

pub(super) struct MassPlan {
    m: usize,
    /// Row-major N×M, `mass[j*m + i]` = share of prompt j served by model i.
    mass: Vec<f64>,
    load: Vec<f64>,
}

pub(super) struct PolishOutcome {
    pub prices: Vec<f64>,
    pub cycles: usize,
}

impl MassPlan {
    pub fn from_prices(scores: &ScoreMatrix, alpha: &[f64]) -> Self {
        let m = scores.n_models();
        let mut mass = vec![0.0; scores.n_prompts() * m];
        let mut load = vec![0.0; m];
        for (j, row) in scores.rows().enumerate() {
            let (i, _) = best_model(row, alpha);
            mass[j * m + i] = 1.0;
            load[i] += 1.0;
        }
        Self { m, mass, load }
    }

    /// Moves mass from over- to under-assigned models, lowest adjusted-score
    /// regret first, until every load matches its target.
    pub fn repair(&mut self, scores: &ScoreMatrix, target: &[f64], alpha: &[f64]) {
        let m = self.m;
        loop {
            let (over, excess) = argmax_by(m, |i| self.load[i] - target[i]);
            let (under, deficit) = argmax_by(m, |i| target[i] - self.load[i]);
            if excess <= COUNT_EPS || deficit <= COUNT_EPS {
                break;
            }
            let mut pick = None;
            let mut pick_regret = f64::INFINITY;
            for (j, row) in scores.rows().enumerate() {
                if self.mass[j * m + over] <= MASS_EPS {
                    continue;
                }
                let regret = (row[over] - alpha[over]) - (row[under] - alpha[under]);
                if regret < pick_regret {
                    pick_regret = regret;
                    pick = Some(j);
                }
            }
            let Some(j) = pick else { break };
            let have = self.mass[j * m + over];
            let delta = have.min(excess).min(deficit);
            self.shift(j, over, under, delta);
        }
    }

    fn shift(&mut self, prompt: usize, from: usize, to: usize, delta: f64) {
        let m = self.m;
        let src = &mut self.mass[prompt * m + from];
        *src -= delta;
        if *src <= MASS_EPS {
            *src = 0.0;
        }
        self.mass[prompt * m + to] += delta;
        self.load[from] -= delta;
        self.load[to] += delta;
    }

    /// Cheapest exchange per ordered model pair: `cost[i][k]` is the score
    /// lost by moving one unit of some prompt currently on `i` over to `k`.
    fn exchange_graph(&self, scores: &ScoreMatrix) -> (Vec<f64>, Vec<usize>) {
        let m = self.m;
        let mut cost = vec![f64::INFINITY; m * m];
        let mut via = vec![usize::MAX; m * m];
        for (j, row) in scores.rows().enumerate() {
            for i in 0..m {
                if self.mass[j * m + i] <= MASS_EPS {
                    continue;
                }
                for k in 0..m {
                    if k == i {
                        continue;
                    }
                    let c = row[i] - row[k];
                    if c < cost[i * m + k] {
                        cost[i * m + k] = c;
                        via[i * m + k] = j;
                    }
                }
            }
        }
        (cost, via)
    }

    /// Cancels improving exchange cycles until none is left, then returns
    /// the shortest-path potentials as prices.
    pub fn polish(&mut self, scores: &ScoreMatrix) -> PolishOutcome {
        let m = self.m;
        let max_cycles = 64 * (scores.n_prompts() + m) * m;
        let mut cycles = 0;
        loop {
            let (cost, via) = self.exchange_graph(scores);
            match bellman_ford(m, &cost) {
                Ok(dist) => {
                    return PolishOutcome { prices: dist.iter().map(|d| -d).collect(), cycles };
                }
                Err(cycle) => {
                    let total: f64 = cycle.iter().map(|&(i, k)| cost[i * m + k]).sum();
                    if total >= -COST_EPS || cycles >= max_cycles {
                        let dist = bellman_ford_relaxed(m, &cost);
                        return PolishOutcome { prices: dist.iter().map(|d| -d).collect(), cycles };
                    }
                    let delta = cycle
                        .iter()
                        .map(|&(i, k)| self.mass[via[i * m + k] * m + i])
                        .fold(f64::INFINITY, f64::min);
                    for &(i, k) in &cycle {
                        self.shift(via[i * m + k], i, k, delta);
                    }
                    cycles += 1;
                }
            }
        }
    }

    pub fn value(&self, scores: &ScoreMatrix) -> f64 {
        let m = self.m;
        let total: f64 = scores
            .rows()
            .enumerate()
            .map(|(j, row)| row.iter().zip(&self.mass[j * m..(j + 1) * m]).map(|(s, x)| s * x).sum::<f64>())
            .sum();
        total / scores.n_prompts() as f64
    }

    pub fn dominant_models(&self) -> Vec<usize> {
        self.mass
            .chunks_exact(self.m)
            .map(|x| argmax_by(self.m, |i| x[i]).0)
            .collect()
    }
}

fn argmax_by(m: usize, f: impl Fn(usize) -> f64) -> (usize, f64) {
    let mut best = 0;
    let mut best_v = f(0);
    for i in 1..m {
        let v = f(i);
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    (best, best_v)
}

/// Shortest distances from a virtual source joined to every node at zero
/// cost. Returns a negative cycle as a list of edges if one exists.
fn bellman_ford(m: usize, cost: &[f64]) -> Result<Vec<f64>, Vec<(usize, usize)>> {
    let mut dist = vec![0.0; m];
    let mut pred = vec![usize::MAX; m];
    let mut last = None;
    for _ in 0..m {
        last = None;
        for i in 0..m {
            for k in 0..m {
                let c = cost[i * m + k];
                if c.is_finite() && dist[i] + c < dist[k] - COST_EPS {
                    dist[k] = dist[i] + c;
                    pred[k] = i;
                    last = Some(k);
                }
            }
        }
        if last.is_none() {
            return Ok(dist);
        }
    }
    let Some(mut v) = last else { return Ok(dist) };
    for _ in 0..=m {
        v = pred[v];
        if v == usize::MAX {
            return Ok(dist);
        }
    }
    let start = v;
    let mut edges = Vec::new();
    loop {
        let p = pred[v];
        if p == usize::MAX || edges.len() > m {
            return Ok(dist);
        }
        edges.push((p, v));
        v = p;
        if v == start {
            break;
        }
    }
    edges.reverse();
    Err(edges)
}

/// Distances after `m` relaxation passes regardless of residual cycles;
/// only used when cycles are numerically negligible.
fn bellman_ford_relaxed(m: usize, cost: &[f64]) -> Vec<f64> {
    let mut dist = vec![0.0; m];
    for _ in 0..m {
        for i in 0..m {
            for k in 0..m {
                let c = cost[i * m + k];
                if c.is_finite() && dist[i] + c < dist[k] - COST_EPS {
                    dist[k] = dist[i] + c;
                }
            }
        }
    }
    dist
}
