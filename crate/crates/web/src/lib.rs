//! Browser demo bindings.
//!
//! Each operation is a plain function returning JSON (or an error message)
//! so it can be tested natively; the `#[wasm_bindgen]` wrappers only convert
//! errors into JavaScript exceptions.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use otx_core::exact::hungarian;
use otx_core::measures::{cost_matrix, CostSpec, PointCloud};
use otx_core::priors::{geodesic_interpolation, sample, simplex_edge_interpolation, PriorSpec};
use otx_core::sinkhorn::{entropy, sharp_cost, sinkhorn_divergence, sinkhorn_log, SinkhornParams};
use otx_core::sweep::{self, SweepConfig};
use otx_core::Matrix;

const MAX_POINTS: usize = 64;
const MAX_SWEEP_DIM: usize = 256;
const MAX_SWEEP_M: usize = 256;
const MAX_TRIALS: usize = 20;

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn check_range(name: &str, v: usize, lo: usize, hi: usize) -> Result<(), String> {
    if (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(format!("{name} must be in [{lo}, {hi}], got {v}"))
    }
}

#[derive(Serialize)]
struct PlanView {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    /// Doubly stochastic plan after rounding.
    plan: Vec<Vec<f64>>,
    sharp_cost: f64,
    divergence: f64,
    entropy: f64,
    exact_cost: f64,
    assignment: Vec<usize>,
    iterations: usize,
    converged: bool,
}

/// Entropic plan between two seeded uniform clouds in the unit square,
/// next to the exact assignment.
pub fn transport_plan_json(
    m: usize,
    epsilon: f64,
    iters: usize,
    seed: u64,
) -> Result<String, String> {
    check_range("m", m, 1, MAX_POINTS)?;
    let square = PriorSpec::SquareUniform;
    let x = sample(&square, m, seed).map_err(|e| e.to_string())?;
    let y = sample(&square, m, seed.wrapping_add(1)).map_err(|e| e.to_string())?;
    let spec = CostSpec::squared_euclidean();
    let params = SinkhornParams::new(epsilon, iters);
    let inner = || -> otx_core::Result<PlanView> {
        let c = cost_matrix(&x, &y, spec)?;
        let rep = sinkhorn_log(&c, params)?;
        let exact = hungarian(&c)?;
        Ok(PlanView {
            x: rows(x.matrix()),
            y: rows(y.matrix()),
            plan: rows(rep.coupling.matrix()),
            sharp_cost: sharp_cost(&rep.coupling, &c)?,
            divergence: sinkhorn_divergence(&x, &y, spec, params)?,
            entropy: entropy(&rep.coupling),
            exact_cost: exact.avg_cost,
            assignment: exact.permutation,
            iterations: rep.iterations_used,
            converged: rep.converged,
        })
    };
    to_json(&inner().map_err(|e| e.to_string())?)
}

#[derive(Serialize)]
struct SweepPoint {
    sigma: f64,
    mean_hungarian: f64,
    mean_w2: f64,
}

#[derive(Serialize)]
struct SweepView {
    d: usize,
    points: Vec<SweepPoint>,
    frac_trials_argmin_below_one: f64,
    argmin_mean_hungarian: f64,
    argmin_mean_w2: f64,
}

/// Matching cost and moment-based `W₂` against `σ` for one dimension.
pub fn gauss_sweep_json(d: usize, m: usize, trials: usize, seed: u64) -> Result<String, String> {
    check_range("d", d, 1, MAX_SWEEP_DIM)?;
    check_range("m", m, 2, MAX_SWEEP_M)?;
    check_range("trials", trials, 1, MAX_TRIALS)?;
    let cfg = SweepConfig {
        dims: vec![d],
        m,
        trials,
        seed,
        ..SweepConfig::default()
    };
    let rows = sweep::run_sweep(&cfg).map_err(|e| e.to_string())?;
    let points = cfg
        .sigmas
        .iter()
        .map(|&sigma| {
            let cell: Vec<_> = rows.iter().filter(|r| r.sigma == sigma).collect();
            let n = cell.len() as f64;
            SweepPoint {
                sigma,
                mean_hungarian: cell.iter().map(|r| r.hungarian_avg_cost).sum::<f64>() / n,
                mean_w2: cell.iter().map(|r| r.w2gauss_estimate).sum::<f64>() / n,
            }
        })
        .collect();
    let s = &sweep::summarize(&rows)[0];
    to_json(&SweepView {
        d,
        points,
        frac_trials_argmin_below_one: s.frac_trials_argmin_below_one,
        argmin_mean_hungarian: s.argmin_mean_hungarian,
        argmin_mean_w2: s.argmin_mean_w2,
    })
}

#[derive(Serialize)]
struct PriorView {
    samples: Vec<Vec<f64>>,
    path: Vec<Vec<f64>>,
}

/// Prior samples plus an interpolation path: a great-circle arc between two
/// samples on the sphere, or the straight edge between two vertices of the simplex.
pub fn prior_path_json(
    kind: &str,
    dim: usize,
    n: usize,
    steps: usize,
    seed: u64,
) -> Result<String, String> {
    check_range("dim", dim, 2, 16)?;
    check_range("n", n, 2, 2000)?;
    check_range("steps", steps, 1, 200)?;
    let ts: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    let (spec, path) = match kind {
        "sphere" => {
            let spec = PriorSpec::SphereUniform { dim };
            let ends = sample(&spec, 2, seed.wrapping_add(1)).map_err(|e| e.to_string())?;
            let (a, b) = (ends.row(0), ends.row(1));
            let path = ts
                .iter()
                .map(|&t| geodesic_interpolation(&a, &b, t))
                .collect::<Result<Vec<_>, _>>();
            (spec, path.map_err(|e| e.to_string())?)
        }
        "simplex" => {
            let spec = PriorSpec::Dirichlet {
                alpha: vec![0.5; dim],
            };
            let path = ts
                .iter()
                .map(|&t| simplex_edge_interpolation(0, 1, t, dim))
                .collect::<Result<Vec<_>, _>>();
            (spec, path.map_err(|e| e.to_string())?)
        }
        other => {
            return Err(format!(
                "unknown prior kind '{other}' (expected sphere or simplex)"
            ))
        }
    };
    let samples: PointCloud = sample(&spec, n, seed).map_err(|e| e.to_string())?;
    to_json(&PriorView {
        samples: samples.rows(),
        path,
    })
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn transport_plan(m: usize, epsilon: f64, iters: usize, seed: u32) -> Result<String, JsValue> {
    js(transport_plan_json(m, epsilon, iters, seed.into()))
}

#[wasm_bindgen]
pub fn gauss_sweep(d: usize, m: usize, trials: usize, seed: u32) -> Result<String, JsValue> {
    js(gauss_sweep_json(d, m, trials, seed.into()))
}

#[wasm_bindgen]
pub fn prior_path(
    kind: &str,
    dim: usize,
    n: usize,
    steps: usize,
    seed: u32,
) -> Result<String, JsValue> {
    js(prior_path_json(kind, dim, n, steps, seed.into()))
}
