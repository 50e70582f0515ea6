//! High-dimensional Gaussian matching sweep.
//!
//! For each dimension `d`, trial and scale `σ`, draws `X ~ N(0, I_d)^M` and
//! `Y ~ N(0, σ² I_d)^M` and records the exact matching cost between them next
//! to the moment-based `W₂` estimate of `Y` against `N(0, I_d)`. Within a
//! (d, trial) cell the same standard-normal draws are reused for every `σ`
//! (`Y = σ·W`), so the σ-profile of a trial is free of resampling noise.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::exact::hungarian;
use crate::gaussian::{estimate_moments, w2_gaussian, GaussianParams};
use crate::measures::{cost_matrix, format_f64, CostSpec, PointCloud};
use crate::priors::{sample_with, seeded_rng, PriorSpec};

fn default_dims() -> Vec<usize> {
    vec![64]
}

fn default_sigmas() -> Vec<f64> {
    (6..=12).map(|k| k as f64 / 10.0).collect()
}

fn default_m() -> usize {
    128
}

fn default_trials() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            dims: default_dims(),
            sigmas: default_sigmas(),
            m: default_m(),
            trials: default_trials(),
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dims.is_empty() || self.dims.contains(&0) {
            out.push("dims: must be a nonempty list of positive dimensions".to_string());
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            out.push("sigmas: must be a nonempty list of positive scales".to_string());
        }
        if self.m < 2 {
            out.push(format!("m: must be >= 2, got {}", self.m));
        }
        if self.trials == 0 {
            out.push("trials: must be >= 1".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(OtError::invalid(p.join("; ")))
        }
    }

    /// All `(d, trial)` cells in output order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.dims
            .iter()
            .flat_map(|&d| (0..self.trials).map(move |t| (d, t)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub d: usize,
    pub sigma: f64,
    pub trial: usize,
    pub hungarian_avg_cost: f64,
    pub w2gauss_estimate: f64,
}

/// Seed of one `(d, trial)` cell, independent of evaluation order.
pub fn cell_seed(seed: u64, d: usize, trial: usize) -> u64 {
    // splitmix64 finalizer over the packed coordinates
    let mut z = seed ^ ((d as u64) << 32) ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Rows for every `σ` of one `(d, trial)` cell.
pub fn run_cell(cfg: &SweepConfig, d: usize, trial: usize) -> Result<Vec<SweepRow>> {
    let mut rng = seeded_rng(cell_seed(cfg.seed, d, trial));
    let normal = PriorSpec::GaussianStandard { dim: d };
    let x = sample_with(&normal, cfg.m, &mut rng)?;
    let w = sample_with(&normal, cfg.m, &mut rng)?;
    let standard = GaussianParams::standard(d);
    let spec = CostSpec::squared_euclidean();
    cfg.sigmas
        .iter()
        .map(|&sigma| {
            let y = PointCloud::new(w.matrix() * sigma)?;
            let cost = hungarian(&cost_matrix(&x, &y, spec)?)?.avg_cost;
            let w2 = w2_gaussian(&estimate_moments(&y)?, &standard)?;
            Ok(SweepRow {
                d,
                sigma,
                trial,
                hungarian_avg_cost: cost,
                w2gauss_estimate: w2,
            })
        })
        .collect()
}

/// Whole sweep, sequentially.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (d, t) in cfg.cells() {
        rows.extend(run_cell(cfg, d, t)?);
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Canonical order: `d`, then `σ`, then trial.
pub fn sort_rows(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| {
        a.d.cmp(&b.d)
            .then(a.sigma.total_cmp(&b.sigma))
            .then(a.trial.cmp(&b.trial))
    });
}

pub fn write_rows<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "d",
        "sigma",
        "trial",
        "hungarian_avg_cost",
        "w2gauss_estimate",
    ])?;
    for r in rows {
        wtr.write_record([
            r.d.to_string(),
            format_f64(r.sigma),
            r.trial.to_string(),
            format_f64(r.hungarian_avg_cost),
            format_f64(r.w2gauss_estimate),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-dimension summary of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub d: usize,
    /// Fraction of trials whose cheapest matching occurs at some `σ < 1`.
    pub frac_trials_argmin_below_one: f64,
    /// `σ` minimizing the trial-averaged matching cost.
    pub argmin_mean_hungarian: f64,
    /// `σ` minimizing the trial-averaged moment estimate.
    pub argmin_mean_w2: f64,
}

fn argmin_by(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    pairs
        .fold((f64::NAN, f64::INFINITY), |best, (s, v)| {
            if v < best.1 {
                (s, v)
            } else {
                best
            }
        })
        .0
}

pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut dims: Vec<usize> = rows.iter().map(|r| r.d).collect();
    dims.dedup();
    dims.into_iter()
        .map(|d| {
            let cell: Vec<&SweepRow> = rows.iter().filter(|r| r.d == d).collect();
            let mut sigmas: Vec<f64> = cell.iter().map(|r| r.sigma).collect();
            sigmas.sort_by(f64::total_cmp);
            sigmas.dedup();
            let mut trials: Vec<usize> = cell.iter().map(|r| r.trial).collect();
            trials.sort_unstable();
            trials.dedup();
            let below = trials
                .iter()
                .filter(|&&t| {
                    argmin_by(
                        cell.iter()
                            .filter(|r| r.trial == t)
                            .map(|r| (r.sigma, r.hungarian_avg_cost)),
                    ) < 1.0
                })
                .count();
            let mean = |s: f64, f: fn(&SweepRow) -> f64| {
                let v: Vec<f64> = cell.iter().filter(|r| r.sigma == s).map(|r| f(r)).collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            SweepSummary {
                d,
                frac_trials_argmin_below_one: below as f64 / trials.len() as f64,
                argmin_mean_hungarian: argmin_by(
                    sigmas
                        .iter()
                        .map(|&s| (s, mean(s, |r| r.hungarian_avg_cost))),
                ),
                argmin_mean_w2: argmin_by(
                    sigmas.iter().map(|&s| (s, mean(s, |r| r.w2gauss_estimate))),
                ),
            }
        })
        .collect()
}
