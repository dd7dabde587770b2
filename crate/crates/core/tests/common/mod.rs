#![allow(dead_code)]

use routeplan::latency::{Knot, LatencyProfile, Metric, ProfileKey, ProfileLibrary};
use routeplan::setup_search::{ModelSetup, Rho, SystemSetup};
use routeplan::workload::ScoreMatrix;

pub fn names(n: usize) -> Vec<String> {
    ["A", "B", "C", "D", "E"][..n].iter().map(|s| s.to_string()).collect()
}

pub fn matrix(rows: Vec<Vec<f64>>) -> ScoreMatrix {
    let m = rows[0].len();
    ScoreMatrix::from_rows(rows).unwrap().with_model_names(names(m)).unwrap()
}

pub fn rho(x: f64) -> Rho {
    Rho::new(x).unwrap()
}

pub fn ms(model: &str, tp: u32, r: f64) -> ModelSetup {
    ModelSetup { model: model.into(), tp, rho: rho(r) }
}

/// `tp = 1, ρ = 1` for every model.
pub fn flat_setup(m: usize) -> SystemSetup {
    SystemSetup::new(names(m).iter().map(|n| ms(n, 1, 1.0)).collect())
}

pub fn profile(model: &str, tp: u32, r: f64, knots: &[(f64, f64)]) -> LatencyProfile {
    let key = ProfileKey { model: model.into(), tp, rho: rho(r), metric: Metric::Ttft };
    LatencyProfile::new(key, knots.iter().map(|&(load, latency)| Knot { load, latency }).collect()).unwrap()
}

pub fn library(ps: Vec<LatencyProfile>) -> ProfileLibrary {
    let mut l = ProfileLibrary::new();
    for p in ps {
        l.insert(p).unwrap();
    }
    l
}

// ---------------------------------------------------------------------------
// Oracles. None of these call into the crate's solvers.
// ---------------------------------------------------------------------------

/// Best average score over all assignments with exactly `counts[i]` prompts
/// on model `i`, by depth-first enumeration.
pub fn brute_force_assignment(rows: &[Vec<f64>], counts: &[usize]) -> f64 {
    fn go(rows: &[Vec<f64>], j: usize, left: &mut [usize], acc: f64, best: &mut f64) {
        if j == rows.len() {
            *best = best.max(acc);
            return;
        }
        for i in 0..left.len() {
            if left[i] > 0 {
                left[i] -= 1;
                go(rows, j + 1, left, acc + rows[j][i], best);
                left[i] += 1;
            }
        }
    }
    let mut left = counts.to_vec();
    let mut best = f64::NEG_INFINITY;
    go(rows, 0, &mut left, 0.0, &mut best);
    best / rows.len() as f64
}

/// `g(α)` written out directly.
pub fn g_direct(rows: &[Vec<f64>], counts: &[f64], alpha: &[f64]) -> f64 {
    let inner: f64 = rows
        .iter()
        .map(|r| r.iter().zip(alpha).map(|(s, a)| s - a).fold(f64::NEG_INFINITY, f64::max))
        .sum();
    let lin: f64 = alpha.iter().zip(counts).map(|(a, c)| a * c).sum();
    (inner + lin) / rows.len() as f64
}

/// Optimal value of the count-constrained (fractional) assignment LP for
/// `M ∈ {2, 3}`, as `min_α g(α)` over the vertices of the breakpoint
/// arrangement (gauge `α_0 = 0`). Requires every count to be positive.
pub fn lp_value(rows: &[Vec<f64>], counts: &[f64]) -> f64 {
    let m = counts.len();
    let mut cands: Vec<Vec<f64>> = Vec::new();
    match m {
        2 => {
            for r in rows {
                cands.push(vec![0.0, r[1] - r[0]]);
            }
        }
        3 => {
            let a: Vec<f64> = rows.iter().map(|r| r[1] - r[0]).collect();
            let b: Vec<f64> = rows.iter().map(|r| r[2] - r[0]).collect();
            let d: Vec<f64> = rows.iter().map(|r| r[1] - r[2]).collect();
            for &x in &a {
                for &y in &b {
                    cands.push(vec![0.0, x, y]);
                }
                for &z in &d {
                    cands.push(vec![0.0, x, x - z]);
                }
            }
            for &y in &b {
                for &z in &d {
                    cands.push(vec![0.0, y + z, y]);
                }
            }
        }
        _ => panic!("lp_value supports two or three models"),
    }
    cands.iter().map(|al| g_direct(rows, counts, al)).fold(f64::INFINITY, f64::min)
}

/// Two-model LP value with `c1` prompts (possibly fractional) on model 1:
/// start from all-model-0 and move the prompts with the largest gains.
pub fn lp_value_two(rows: &[Vec<f64>], c1: f64) -> f64 {
    let base: f64 = rows.iter().map(|r| r[0]).sum();
    let mut gains: Vec<f64> = rows.iter().map(|r| r[1] - r[0]).collect();
    gains.sort_by(|a, b| b.total_cmp(a));
    let mut left = c1;
    let mut total = base;
    for g in gains {
        if left <= 0.0 {
            break;
        }
        let take = left.min(1.0);
        total += take * g;
        left -= take;
    }
    total / rows.len() as f64
}

/// Linear interpolation through `knots` (sorted, first load 0), final slope
/// extended past the last knot.
pub fn interp(knots: &[(f64, f64)], x: f64) -> f64 {
    let k = knots.len();
    let seg = (1..k).find(|&i| x <= knots[i].0).unwrap_or(k - 1);
    let (x0, y0) = knots[seg - 1];
    let (x1, y1) = knots[seg];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Whether the shards fit on `gpus` unit-capacity GPUs with no two shards
/// of one model together, by trying every assignment.
pub fn exhaustive_packing(shards: &[(String, f64)], gpus: usize) -> bool {
    fn go(shards: &[(String, f64)], k: usize, load: &mut [f64], who: &mut [Vec<String>]) -> bool {
        if k == shards.len() {
            return true;
        }
        let (model, size) = &shards[k];
        for g in 0..load.len() {
            if load[g] + size <= 1.0 + 1e-9 && !who[g].contains(model) {
                load[g] += size;
                who[g].push(model.clone());
                if go(shards, k + 1, load, who) {
                    return true;
                }
                who[g].pop();
                load[g] -= size;
            }
        }
        false
    }
    go(shards, 0, &mut vec![0.0; gpus], &mut vec![Vec::new(); gpus])
}

/// Euclidean projection onto the simplex by enumerating supports: for each
/// nonempty support `S`, the projection onto its affine hull is
/// `v_S − (Σv_S − 1)/|S|`; the closest feasible candidate wins.
pub fn face_projection(v: &[f64]) -> Vec<f64> {
    let m = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let idx: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let shift = (idx.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / idx.len() as f64;
        let mut w = vec![0.0; m];
        for &i in &idx {
            w[i] = v[i] - shift;
        }
        if w.iter().any(|&x| x < -1e-15) {
            continue;
        }
        let d = dist2(&w, v);
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, w));
        }
    }
    best.unwrap().1
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Coarse-to-fine grid minimization of `‖w − v‖²` over the simplex
/// (M ∈ {2, 3}). Returns the minimal squared distance found.
pub fn grid_projection_value(v: &[f64]) -> f64 {
    let m = v.len();
    let (mut lo, mut hi) = (vec![0.0; m - 1], vec![1.0; m - 1]);
    let mut best = (f64::INFINITY, vec![0.0; m - 1]);
    for _ in 0..12 {
        let steps = 40;
        let h: Vec<f64> = lo.iter().zip(&hi).map(|(l, u)| (u - l) / steps as f64).collect();
        let mut idx = vec![0usize; m - 1];
        loop {
            let free: Vec<f64> = idx.iter().enumerate().map(|(d, &k)| lo[d] + h[d] * k as f64).collect();
            let rest = 1.0 - free.iter().sum::<f64>();
            if rest >= -1e-15 {
                let mut w = free.clone();
                w.push(rest.max(0.0));
                let d = dist2(&w, v);
                if d < best.0 {
                    best = (d, free.clone());
                }
            }
            let mut pos = 0;
            loop {
                if pos == idx.len() {
                    break;
                }
                idx[pos] += 1;
                if idx[pos] <= steps {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == idx.len() {
                break;
            }
        }
        for d in 0..m - 1 {
            lo[d] = (best.1[d] - 2.0 * h[d]).max(0.0);
            hi[d] = (best.1[d] + 2.0 * h[d]).min(1.0);
        }
    }
    best.0
}

// ---------------------------------------------------------------------------
// Scenario files for end-to-end runs.
// ---------------------------------------------------------------------------

pub struct ScenarioModel {
    pub name: &'static str,
    /// Beta shape of the synthetic scores.
    pub shape: (f64, f64),
    /// TTFT at zero load with one full GPU, ms.
    pub base_ms: f64,
    /// Memory fraction per shard for tp = 1, 2, 4.
    pub mem: [f64; 3],
}

pub fn hetero_models() -> Vec<ScenarioModel> {
    vec![
        ScenarioModel { name: "large", shape: (8.0, 2.0), base_ms: 260.0, mem: [0.9, 0.5, 0.3] },
        ScenarioModel { name: "medium", shape: (5.0, 4.0), base_ms: 140.0, mem: [0.5, 0.3, 0.2] },
        ScenarioModel { name: "small", shape: (2.0, 5.0), base_ms: 60.0, mem: [0.3, 0.2, 0.15] },
    ]
}

pub const TP_CHOICES: [u32; 3] = [1, 2, 4];
pub const RHO_CHOICES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// Latency grows as compute shrinks and load rises; saturation load
/// scales with `tp · ρ`.
pub fn synthetic_knots(base_ms: f64, tp: u32, rho: f64) -> Vec<(f64, f64)> {
    let speed = (tp as f64).powf(0.8) * rho.powf(0.9);
    let cap = 12.0 * speed;
    let zero = base_ms / speed;
    [0.0, 5.0, 10.0, 20.0, 40.0]
        .iter()
        .map(|&load| (load, zero * (1.0 + 1.5 * (load / cap).powi(2))))
        .collect()
}

pub fn profiles_csv(models: &[ScenarioModel]) -> String {
    let mut out = String::from("model,tp,rho,metric,load_rps,latency_ms\n");
    for m in models {
        for tp in TP_CHOICES {
            for rho in RHO_CHOICES {
                for (load, lat) in synthetic_knots(m.base_ms, tp, rho) {
                    out.push_str(&format!("{},{tp},{rho},TTFT,{load},{lat}\n", m.name));
                }
            }
        }
    }
    out
}

pub fn memory_csv(models: &[ScenarioModel]) -> String {
    let mut out = String::from("model,tp,mem_fraction\n");
    for m in models {
        for (tp, f) in TP_CHOICES.iter().zip(m.mem) {
            out.push_str(&format!("{},{tp},{f}\n", m.name));
        }
    }
    out
}

/// Config text for the heterogeneous scenario with synthetic scores.
pub fn hetero_config(gpus: usize, lambda: f64, tau: f64, rho_min: f64, n_prompts: usize) -> String {
    let mut out = format!(
        "gpu_count = {gpus}\narrival_rate = {lambda:?}\nlatency_target_ms = {tau:?}\nmetric = \"TTFT\"\nrho_min = {rho_min:?}\nseed = 11\n\n[files]\nprofiles = \"profiles.csv\"\nmemory = \"memory.csv\"\n\n[synthetic]\nn_prompts = {n_prompts}\n"
    );
    for m in hetero_models() {
        out.push_str(&format!(
            "\n[[models]]\nname = \"{}\"\ntp = [1, 2, 4]\nrho = [0.25, 0.5, 0.75, 1.0]\nscore_shape = {{ a = {:?}, b = {:?} }}\n",
            m.name, m.shape.0, m.shape.1
        ));
    }
    out
}

/// Writes the heterogeneous scenario into `dir` and returns the config path.
pub fn write_hetero(dir: &std::path::Path, config: &str) -> std::path::PathBuf {
    let models = hetero_models();
    std::fs::write(dir.join("profiles.csv"), profiles_csv(&models)).unwrap();
    std::fs::write(dir.join("memory.csv"), memory_csv(&models)).unwrap();
    let path = dir.join("planner.toml");
    std::fs::write(&path, config).unwrap();
    path
}
