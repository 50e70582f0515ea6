//! Seeded property suites.
//!
//! Each property returns an [`Outcome`]; failures carry the offending instance
//! as JSON so it can be replayed. Properties that exercise a solver take it as
//! an argument, which lets tests swap in deliberately broken implementations.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde_json::{json, Value};

use crate::diff::ops::{sinkhorn_divergence_var, transport_term_var};
use crate::diff::{finite_difference_check, grad, Tape};
use crate::error::{OtError, Result};
use crate::exact::{
    brute_force_assignment, empirical_wp, hungarian, mmd_biased, sliced_wasserstein,
};
use crate::gaussian::{estimate_moments, w2_gaussian, GaussianParams};
use crate::measures::{cost_matrix, CostMatrix, CostSpec, PointCloud};
use crate::nets::{spectral_norm, Activation, Head, Mlp, NormKind, OptimizerKind};
use crate::priors::{sample, sample_with, seeded_rng, PriorSpec, Rng64};
use crate::sae::{
    nat_equivalence_check, round_loss, train, Autoencoder, OptimizerConfig, SaeConfig, Variant,
};
use crate::sinkhorn::{
    round_to_polytope, sharp_cost, sinkhorn_divergence, sinkhorn_log, SinkhornParams,
};
use crate::{datasets, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    /// Failing instance, serialized for replay.
    pub instance: Option<Value>,
}

impl Outcome {
    fn pass(name: &'static str, detail: impl Into<String>) -> Self {
        Self {
            name,
            passed: true,
            detail: detail.into(),
            instance: None,
        }
    }

    fn fail(name: &'static str, detail: impl Into<String>, instance: Value) -> Self {
        Self {
            name,
            passed: false,
            detail: detail.into(),
            instance: Some(instance),
        }
    }

    fn error(name: &'static str, err: OtError) -> Self {
        Self {
            name,
            passed: false,
            detail: format!("error: {err}"),
            instance: None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )?;
        if let Some(inst) = &self.instance {
            write!(f, "\n  instance: {inst}")?;
        }
        Ok(())
    }
}

/// Runs `body`, mapping an error into a failed outcome.
fn guarded(name: &'static str, body: impl FnOnce() -> Result<Outcome>) -> Outcome {
    body().unwrap_or_else(|e| Outcome::error(name, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    All,
    Sinkhorn,
    Exact,
    Gaussian,
    Diff,
    Theory,
}

impl FromStr for Suite {
    type Err = OtError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Suite::All,
            "sinkhorn" => Suite::Sinkhorn,
            "exact" => Suite::Exact,
            "gaussian" => Suite::Gaussian,
            "diff" => Suite::Diff,
            "theory" => Suite::Theory,
            other => {
                return Err(OtError::invalid(format!(
                "unknown suite '{other}' (expected all, sinkhorn, exact, gaussian, diff or theory)"
            )))
            }
        })
    }
}

/// Runs a suite with the given base seed.
pub fn run(suite: Suite, seed: u64) -> Vec<Outcome> {
    match suite {
        Suite::All => [
            Suite::Sinkhorn,
            Suite::Exact,
            Suite::Gaussian,
            Suite::Diff,
            Suite::Theory,
        ]
        .into_iter()
        .flat_map(|s| run(s, seed))
        .collect(),
        Suite::Sinkhorn => vec![
            sinkhorn_matches_assignment(seed, 100, &default_plan_solver),
            debias_and_symmetry(seed, 100, &sinkhorn_divergence),
            large_epsilon_uniform(&|c, eps| {
                Ok(sinkhorn_log(c, SinkhornParams::new(eps, 100))?
                    .coupling
                    .into_matrix())
            }),
            rounding_exact(seed, 100, &|r| Ok(round_to_polytope(r)?.into_matrix())),
        ],
        Suite::Exact => vec![
            hungarian_matches_brute_force(seed, 200, 8),
            self_distances_vanish(seed),
        ],
        Suite::Gaussian => vec![gaussian_closed_forms(seed), gaussian_moment_estimate(seed)],
        Suite::Diff => vec![
            divergence_gradient(seed),
            divergence_stationary(seed),
            sae_loss_gradient(seed),
        ],
        Suite::Theory => vec![
            triangle_inequality(seed, 500),
            data_processing(seed, 100),
            lipschitz_bound(seed, 1000),
            nat_equivalence(seed, 200),
            capacity_chain(seed),
        ],
    }
}

fn uniform_cloud(rng: &mut Rng64, m: usize, d: usize) -> PointCloud {
    PointCloud::new(Matrix::from_fn(m, d, |_, _| rng.random::<f64>())).expect("finite")
}

fn normal_cloud(rng: &mut Rng64, m: usize, d: usize) -> PointCloud {
    sample_with(&PriorSpec::GaussianStandard { dim: d }, m, rng).expect("valid prior")
}

fn mat_json(m: &Matrix) -> Value {
    json!((0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect::<Vec<f64>>())
        .collect::<Vec<_>>())
}

fn cloud_json(x: &PointCloud) -> Value {
    mat_json(x.matrix())
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// `ε = 1e−3`, `L = 5000` log-domain plan, as used by the agreement property.
pub fn default_plan_solver(c: &CostMatrix) -> Result<Matrix> {
    Ok(sinkhorn_log(c, SinkhornParams::new(1e-3, 5000))?
        .coupling
        .into_matrix())
}

/// The sharp cross term of a near-zero-ε plan agrees with the exact
/// assignment cost within 1% (M = 6, d = 2, squared Euclidean).
pub fn sinkhorn_matches_assignment(
    seed: u64,
    instances: usize,
    solver: &dyn Fn(&CostMatrix) -> Result<Matrix>,
) -> Outcome {
    const NAME: &str = "sinkhorn_matches_assignment";
    guarded(NAME, || {
        let mut rng = seeded_rng(seed ^ 0x51);
        let mut worst = 0.0_f64;
        for k in 0..instances {
            let x = uniform_cloud(&mut rng, 6, 2);
            let y = uniform_cloud(&mut rng, 6, 2);
            let c = cost_matrix(&x, &y, CostSpec::squared_euclidean())?;
            let plan = solver(&c)?;
            let coupling = round_to_polytope(&plan)?;
            let cross = sharp_cost(&coupling, &c)?;
            let exact = brute_force_assignment(&c)?.avg_cost;
            let err = rel_err(cross, exact);
            worst = worst.max(err);
            if !(err <= 0.01) {
                return Ok(Outcome::fail(
                    NAME,
                    format!("instance {k}: sinkhorn {cross} vs exact {exact} (rel {err:.3e})"),
                    json!({"x": cloud_json(&x), "y": cloud_json(&y)}),
                ));
            }
        }
        Ok(Outcome::pass(
            NAME,
            format!("{instances} instances, worst rel error {worst:.3e}"),
        ))
    })
}

/// `S(X, X) = 0` and `S(X, Y) = S(Y, X)` within 1e−9 for ε ∈ {0.05, 0.5, 5}.
pub fn debias_and_symmetry(
    seed: u64,
    instances: usize,
    divergence: &dyn Fn(&PointCloud, &PointCloud, CostSpec, SinkhornParams) -> Result<f64>,
) -> Outcome {
    const NAME: &str = "debias_and_symmetry";
    guarded(NAME, || {
        let mut rng = seeded_rng(seed ^ 0x52);
        let spec = CostSpec::squared_euclidean();
        let mut worst = 0.0_f64;
        for k in 0..instances {
            let eps = [0.05, 0.5, 5.0][k % 3];
            let params = SinkhornParams::new(eps, 20_000).with_tol(1e-12);
            let m = rng.random_range(2..=8);
            let x = uniform_cloud(&mut rng, m, 2);
            let y = uniform_cloud(&mut rng, m, 2);
            let sxx = divergence(&x, &x, spec, params)?;
            let sxy = divergence(&x, &y, spec, params)?;
            let syx = divergence(&y, &x, spec, params)?;
            let gap = (sxy - syx).abs();
            worst = worst.max(sxx.abs()).max(gap);
            if !(sxx.abs() <= 1e-9 && gap <= 1e-9) {
                return Ok(Outcome::fail(
                    NAME,
                    format!(
                        "instance {k} (eps {eps}): S(X,X) = {sxx:e}, |S(X,Y) - S(Y,X)| = {gap:e}"
                    ),
                    json!({"epsilon": eps, "x": cloud_json(&x), "y": cloud_json(&y)}),
                ));
            }
        }
        Ok(Outcome::pass(
            NAME,
            format!("{instances} instances, worst deviation {worst:.3e}"),
        ))
    })
}

/// With ε = 1e6 every entry of the doubly stochastic plan is within 1e−6
/// of `1/M` for M ∈ {2, 8, 32}.
pub fn large_epsilon_uniform(solver: &dyn Fn(&CostMatrix, f64) -> Result<Matrix>) -> Outcome {
    const NAME: &str = "large_epsilon_uniform";
    guarded(NAME, || {
        let mut rng = seeded_rng(0x53);
        for m in [2, 8, 32] {
            let x = uniform_cloud(&mut rng, m, 2);
            let y = uniform_cloud(&mut rng, m, 2);
            let c = cost_matrix(&x, &y, CostSpec::squared_euclidean())?;
            let r = solver(&c, 1e6)?;
            let dev = r
                .iter()
                .map(|v| (v - 1.0 / m as f64).abs())
                .fold(0.0, f64::max);
            if !(dev <= 1e-6) {
                return Ok(Outcome::fail(
                    NAME,
                    format!("M = {m}: max deviation from 1/M is {dev:e}"),
                    json!({"x": cloud_json(&x), "y": cloud_json(&y)}),
                ));
            }
        }
        Ok(Outcome::pass(NAME, "M in {2, 8, 32}"))
    })
}

/// Rounded matrices have unit row and column sums within 1e−12, and
/// rounding them again changes nothing beyond 1e−12.
pub fn rounding_exact(
    seed: u64,
    instances: usize,
    rounder: &dyn Fn(&Matrix) -> Result<Matrix>,
) -> Outcome {
    const NAME: &str = "rounding_exact";
    guarded(NAME, || {
        let mut rng = seeded_rng(seed ^ 0x54);
        let mut worst = 0.0_f64;
        for k in 0..instances {
            let m = rng.random_range(2..=10);
            let scale = rng.random_range(0.1..3.0) / m as f64;
            let r = Matrix::from_fn(m, m, |_, _| scale * (0.01 + rng.random::<f64>()));
            let once = rounder(&r)?;
            let twice = rounder(&once)?;
            let rows = (0..m)
                .map(|i| (once.row(i).sum() - 1.0).abs())
                .fold(0.0, f64::max);
            let cols = (0..m)
                .map(|j| (once.column(j).sum() - 1.0).abs())
                .fold(0.0, f64::max);
            let idem = (&twice - &once).amax();
            let dev = rows.max(cols).max(idem);
            worst = worst.max(dev);
            if !(dev <= 1e-12) {
                return Ok(Outcome::fail(
                    NAME,
                    format!(
                        "instance {k}: row err {rows:e}, col err {cols:e}, idempotence {idem:e}"
                    ),
                    json!({"matrix": mat_json(&r)}),
                ));
            }
        }
        Ok(Outcome::pass(
            NAME,
            format!("{instances} matrices, worst deviation {worst:.3e}"),
        ))
    })
}

/// Hungarian average cost equals the brute-force optimum within 1e−12.
pub fn hungarian_matches_brute_force(seed: u64, instances: usize, max_m: usize) -> Outcome {
    const NAME: &str = "hungarian_matches_brute_force";
    guarded(NAME, || {
        let mut rng = seeded_rng(seed ^ 0x55);
        for k in 0..instances {
            let m = rng.random_range(1..=max_m);
            let p = [1.0, 2.0, 3.0][k % 3];
            let x = uniform_cloud(&mut rng, m, 3);
            let y = uniform_cloud(&mut rng, m, 3);
            let c = cost_matrix(&x, &y, CostSpec::new(p)?)?;
            let h = hungarian(&c)?.avg_cost;
            let b = brute_force_assignment(&c)?.avg_cost;
            if !((h - b).abs() <= 1e-12) {
                return Ok(Outcome::fail(
                    NAME,
                    format!("instance {k}: hungarian {h} vs brute force {b}"),
                    json!({"p": p, "cost": mat_json(c.values())}),
                ));
            }
        }
        Ok(Outcome::pass(
            NAME,
            format!("{instances} instances, M <= {max_m}"),
        ))
    })
}

/// Every sample distance vanishes on identical clouds.
pub fn self_distances_vanish(seed: u64) -> Outcome {
    const NAME: &str = "self_distances_vanish";
    guarded(NAME, || {
        let mut rng = seeded_rng(seed ^ 0x56);
        for k in 0..20 {
            let x = uniform_cloud(&mut rng, 7, 3);
            let spec = CostSpec::squared_euclidean();
            let vals = [
                ("empirical_wp", empirical_wp(&x, &x, spec)?, 0.0),
                ("sliced", sliced_wasserstein(&x, &x, 2.0, 20, seed)?, 0.0),
                ("mmd", mmd_biased(&x, &x, 1.0)?, 1e-12),
                (
                    "sinkhorn",
                    sinkhorn_divergence(&x, &x, spec, SinkhornParams::new(0.1, 2000))?,
                    1e-9,
                ),
            ];
            for (what, v, tol) in vals {
                if !(v.abs() <= tol) {
                    return Ok(Outcome::fail(
                        NAME,
                        format!("instance {k}: {what}(X, X) = {v:e}"),
                        cloud_json(&x),
                    ));
                }
            }
        }
        Ok(Outcome::pass(
            NAME,
            "W_p, sliced, MMD and Sinkhorn on 20 clouds",
        ))
    })
}

/// Isotropic and mean-shift closed forms within 1e−9.
pub fn gaussian_closed_forms(seed: u64) -> Outcome {
    const NAME: &str = "gaussian_closed_forms";
    guarded(NAME, || {
        let mut rng = seeded_rng(seed ^ 0x57);
        for k in 0..50 {
            let d = rng.random_range(1..=8);
            let (s1, s2) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
            let zero = nalgebra::DVector::zeros(d);
            let iso = w2_gaussian(
                &GaussianParams::isotropic(zero.clone(), s1),
                &GaussianParams::isotropic(zero, s2),
            )?;
            let expect = (d as f64).sqrt() * (s1 - s2).abs();
            let mu1 = nalgebra::DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
            let mu2 = nalgebra::DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
            let a = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let cov = &a * a.transpose() + Matrix::identity(d, d) * 0.1;
            let shift = w2_gaussian(
                &GaussianParams::new(mu1.clone(), cov.clone())?,
                &GaussianParams::new(mu2.clone(), cov)?,
            )?;
            let shift_expect = (&mu1 - &mu2).norm();
            if !((iso - expect).abs() <= 1e-9 && (shift - shift_expect).abs() <= 1e-9) {
                return Ok(Outcome::fail(
                    NAME,
                    format!("instance {k}: isotropic {iso} vs {expect}, shift {shift} vs {shift_expect}"),
                    json!({"d": d, "sigma1": s1, "sigma2": s2, "mu1": mu1.as_slice(), "mu2": mu2.as_slice()}),
                ));
            }
        }
        Ok(Outcome::pass(NAME, "50 isotropic and mean-shift cases"))
    })
}

/// Moment-based estimate at d = 2, M = 2000 is within 10% + 0.05 of the
/// analytic value for 10 seeds.
pub fn gaussian_moment_estimate(seed: u64) -> Outcome {
    const NAME: &str = "gaussian_moment_estimate";
    guarded(NAME, || {
        let mean = nalgebra::DVector::from_vec(vec![1.0, -0.5]);
        let cov = Matrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let target = GaussianParams::new(mean.clone(), cov.clone())?;
        let standard = GaussianParams::standard(2);
        let analytic = w2_gaussian(&target, &standard)?;
        let root = crate::gaussian::sqrtm_psd(&cov)?;
        for s in 0..10 {
            let z = sample(
                &PriorSpec::GaussianStandard { dim: 2 },
                2000,
                seed.wrapping_add(s),
            )?;
            let x = z.map_linear(&root)?;
            let x = PointCloud::new(Matrix::from_fn(x.len(), 2, |i, j| {
                x.matrix()[(i, j)] + mean[j]
            }))?;
            let est = w2_gaussian(&estimate_moments(&x)?, &standard)?;
            if !((est - analytic).abs() <= 0.1 * analytic + 0.05) {
                return Ok(Outcome::fail(
                    NAME,
                    format!(
                        "seed {}: estimate {est} vs analytic {analytic}",
                        seed.wrapping_add(s)
                    ),
                    json!({"seed": seed.wrapping_add(s)}),
                ));
            }
        }
        Ok(Outcome::pass(
            NAME,
            format!("10 seeds around analytic {analytic:.6}"),
        ))
    })
}

/// FD check of the divergence gradient in both clouds (M = 5, d = 2,
/// ε = 0.5, L = 200, h = 1e−4), relative error ≤ 1e−4.
pub fn divergence_gradient(seed: u64) -> Outcome {
    const NAME: &str = "divergence_gradient";
    guarded(NAME, || {
        let mut rng = seeded_rng(seed ^ 0x58);
        let x = uniform_cloud(&mut rng, 5, 2);
        let y = uniform_cloud(&mut rng, 5, 2);
        let params = SinkhornParams::new(0.5, 200).with_tol(0.0);
        let rep = finite_difference_check(
            &[x.matrix().clone(), y.matrix().clone()],
            |_, p| sinkhorn_divergence_var(p[0], p[1], CostSpec::squared_euclidean(), params),
            1e-4,
        )?;
        if rep.max_rel_error <= 1e-4 {
            Ok(Outcome::pass(
                NAME,
                format!("max rel error {:.3e}", rep.max_rel_error),
            ))
        } else {
            Ok(Outcome::fail(
                NAME,
                format!("max rel error {:.3e}", rep.max_rel_error),
                json!({"x": cloud_json(&x), "y": cloud_json(&y)}),
            ))
        }
    })
}

/// The divergence gradient at `X = Y` has norm ≤ 1e−6.
pub fn divergence_stationary(seed: u64) -> Outcome {
    const NAME: &str = "divergence_stationary";
    guarded(NAME, || {
        let mut rng = seeded_rng(seed ^ 0x59);
        let x = uniform_cloud(&mut rng, 5, 2);
        let params = SinkhornParams::new(0.5, 200).with_tol(0.0);
        let y = x.clone();
        let (_, g) = grad(&[x.matrix().clone()], |t, p| {
            let yv = t.leaf(y.matrix().clone());
            sinkhorn_divergence_var(p[0], yv, CostSpec::squared_euclidean(), params)
        })?;
        let norm = g[0].norm();
        if norm <= 1e-6 {
            Ok(Outcome::pass(NAME, format!("gradient norm {norm:.3e}")))
        } else {
            Ok(Outcome::fail(
                NAME,
                format!("gradient norm {norm:e}"),
                cloud_json(&x),
            ))
        }
    })
}

/// Small SAE configuration used by the gradient and capacity checks.
pub fn check_sae_config(variant: Variant) -> SaeConfig {
    SaeConfig {
        variant,
        epsilon: 0.5,
        iters: 100,
        tol: 0.0,
        beta: 1.0,
        p: 2.0,
        batch_size: 8,
        prior: PriorSpec::GaussianStandard { dim: 2 },
        encoder_hidden: vec![8],
        decoder_hidden: vec![8],
        activation: Activation::Tanh,
        optimizer: OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
        },
        epochs: 1,
        seed: 0,
        record_wall_time: false,
    }
}

/// FD check of the full SAE loss in all encoder and decoder weights
/// (8 samples, 2-layer MLPs), relative error ≤ 1e−3.
pub fn sae_loss_gradient(seed: u64) -> Outcome {
    const NAME: &str = "sae_loss_gradient";
    guarded(NAME, || {
        let cfg = check_sae_config(Variant::Sae);
        let ae = Autoencoder::init(&cfg, 3, &mut seeded_rng(seed ^ 0x5a))?;
        let x = sample(&PriorSpec::GaussianStandard { dim: 3 }, 8, seed ^ 0x5b)?;
        let z = sample(&cfg.prior, 8, seed ^ 0x5c)?;
        let rep = finite_difference_check(
            &ae.params(),
            |t, p| Ok(round_loss(&cfg, &ae, t, p, &x, &z)?.total),
            1e-5,
        )?;
        if rep.max_rel_error <= 1e-3 {
            Ok(Outcome::pass(
                NAME,
                format!("max rel error {:.3e}", rep.max_rel_error),
            ))
        } else {
            Ok(Outcome::fail(
                NAME,
                format!("max rel error {:.3e}", rep.max_rel_error),
                json!({"x": cloud_json(&x), "z": cloud_json(&z)}),
            ))
        }
    })
}

/// `W_p(X, Z) ≤ W_p(X, Y) + W_p(Y, Z) + 1e−9` on random triples.
pub fn triangle_inequality(seed: u64, triples: usize) -> Outcome {
    const NAME: &str = "triangle_inequality";
    guarded(NAME, || {
        let mut rng = seeded_rng(seed ^ 0x5d);
        for k in 0..triples {
            let m = rng.random_range(2..=6);
            let d = rng.random_range(1..=3);
            let spec = CostSpec::new([1.0, 2.0, 3.0][k % 3])?;
            let (x, y, z) = (
                uniform_cloud(&mut rng, m, d),
                uniform_cloud(&mut rng, m, d),
                uniform_cloud(&mut rng, m, d),
            );
            let (xy, yz, xz) = (
                empirical_wp(&x, &y, spec)?,
                empirical_wp(&y, &z, spec)?,
                empirical_wp(&x, &z, spec)?,
            );
            if !(xz <= xy + yz + 1e-9) {
                return Ok(Outcome::fail(
                    NAME,
                    format!("triple {k}: W(X,Z) = {xz} > {xy} + {yz}"),
                    json!({"p": spec.p(), "x": cloud_json(&x), "y": cloud_json(&y), "z": cloud_json(&z)}),
                ));
            }
        }
        Ok(Outcome::pass(
            NAME,
            format!("{triples} triples, p in {{1, 2, 3}}"),
        ))
    })
}

/// `W₂(AX, AY) ≤ ‖A‖₂ · W₂(X, Y) + 1e−9` for random linear maps.
pub fn data_processing(seed: u64, maps: usize) -> Outcome {
    const NAME: &str = "data_processing";
    guarded(NAME, || {
        let mut rng = seeded_rng(seed ^ 0x5e);
        let spec = CostSpec::squared_euclidean();
        for k in 0..maps {
            let m = rng.random_range(2..=7);
            let d = rng.random_range(1..=4);
            let d_out = rng.random_range(1..=4);
            let a = Matrix::from_fn(d_out, d, |_, _| rng.random_range(-2.0..2.0));
            let (x, y) = (normal_cloud(&mut rng, m, d), normal_cloud(&mut rng, m, d));
            let lhs = empirical_wp(&x.map_linear(&a)?, &y.map_linear(&a)?, spec)?;
            let rhs = spectral_norm(&a, 1e-14) * empirical_wp(&x, &y, spec)?;
            if !(lhs <= rhs + 1e-9) {
                return Ok(Outcome::fail(
                    NAME,
                    format!("map {k}: W(AX, AY) = {lhs} > {rhs}"),
                    json!({"a": mat_json(&a), "x": cloud_json(&x), "y": cloud_json(&y)}),
                ));
            }
        }
        Ok(Outcome::pass(NAME, format!("{maps} random linear maps")))
    })
}

/// `‖f(u) − f(v)‖ ≤ Lip(f)·‖u − v‖` for random MLPs in the 1, 2 and ∞ norms.
pub fn lipschitz_bound(seed: u64, pairs: usize) -> Outcome {
    const NAME: &str = "lipschitz_bound";
    guarded(NAME, || {
        let mut rng = seeded_rng(seed ^ 0x5f);
        let acts = [Activation::Relu, Activation::Tanh, Activation::Sigmoid];
        let norms = [NormKind::L1, NormKind::L2, NormKind::LInf];
        let per_net = pairs.div_ceil(acts.len() * norms.len()).max(1);
        for act in acts {
            let net = Mlp::new(&[4, 16, 16, 3], act, Head::Linear, &mut rng)?;
            let u = normal_cloud(&mut rng, per_net, 4);
            let v =
                PointCloud::new(u.matrix() + normal_cloud(&mut rng, per_net, 4).matrix() * 0.1)?;
            let (fu, fv) = (net.forward(&u)?, net.forward(&v)?);
            for norm in norms {
                let lip = net.lipschitz_upper_bound(norm);
                for i in 0..per_net {
                    let din: Vec<f64> = u.row(i).iter().zip(v.row(i)).map(|(a, b)| a - b).collect();
                    let dout: Vec<f64> = fu
                        .row(i)
                        .iter()
                        .zip(fv.row(i))
                        .map(|(a, b)| a - b)
                        .collect();
                    let (ni, no) = (norm.vector_norm(&din), norm.vector_norm(&dout));
                    if !(no <= lip * ni * (1.0 + 1e-12) + 1e-15) {
                        return Ok(Outcome::fail(
                            NAME,
                            format!("{act:?} {norm:?}: ratio {} exceeds bound {lip}", no / ni),
                            json!({"u": u.row(i), "v": v.row(i)}),
                        ));
                    }
                }
            }
        }
        Ok(Outcome::pass(
            NAME,
            format!(
                "{} pairs over relu/tanh/sigmoid nets and 3 norms",
                per_net * 9
            ),
        ))
    })
}

/// Trace maximization and squared-Euclidean matching select the same
/// permutations on random unit-row instances at M = 5.
pub fn nat_equivalence(seed: u64, instances: usize) -> Outcome {
    const NAME: &str = "nat_equivalence";
    guarded(NAME, || {
        let mut rng = seeded_rng(seed ^ 0x60);
        for k in 0..instances {
            let d = rng.random_range(2..=4);
            let sphere = PriorSpec::SphereUniform { dim: d };
            let z = sample_with(&sphere, 5, &mut rng)?;
            let f = sample_with(&sphere, 5, &mut rng)?;
            if !nat_equivalence_check(&z, &f)? {
                return Ok(Outcome::fail(
                    NAME,
                    format!("instance {k}: argmax trace differs from argmin cost"),
                    json!({"z": cloud_json(&z), "f": cloud_json(&f)}),
                ));
            }
        }
        Ok(Outcome::pass(
            NAME,
            format!("{instances} instances at M = 5"),
        ))
    })
}

/// After a short training run, on held-out batches:
/// `W₂(x, G(Q(x))) + Lip(G)·W₂(Q(x), z) ≥ W₂(x, G(z)) − 1e−6`.
pub fn capacity_chain(seed: u64) -> Outcome {
    const NAME: &str = "capacity_chain";
    guarded(NAME, || {
        let mut cfg = check_sae_config(Variant::Sae);
        cfg.tol = 1e-9;
        cfg.epochs = 3;
        cfg.optimizer.lr = 1e-2;
        cfg.seed = seed;
        let data = datasets::toy_mixture(64, seed ^ 0x61)?;
        let ae = train(&cfg, &data)?.model;
        let spec = CostSpec::squared_euclidean();
        let lip = ae.decoder.lipschitz_upper_bound(NormKind::L2);
        for b in 0..5u64 {
            let x = datasets::toy_mixture(16, seed ^ (0x62 + b))?;
            let z = sample(&cfg.prior, 16, seed ^ (0x70 + b))?;
            let z_tilde = ae.encoder.forward(&x)?;
            let recon = empirical_wp(&x, &ae.decoder.forward(&z_tilde)?, spec)?;
            let latent = empirical_wp(&z_tilde, &z, spec)?;
            let gen = empirical_wp(&x, &ae.decoder.forward(&z)?, spec)?;
            let upper = recon + lip * latent;
            if !(upper >= gen - 1e-6) {
                return Ok(Outcome::fail(
                    NAME,
                    format!("batch {b}: bound {upper} < W(x, G(z)) = {gen}"),
                    json!({"x": cloud_json(&x), "z": cloud_json(&z)}),
                ));
            }
        }
        Ok(Outcome::pass(
            NAME,
            format!("5 held-out batches, Lip(G) <= {lip:.4}"),
        ))
    })
}

/// Sharp cross term alone (no debiasing), evaluated through the tape.
pub fn cross_term(
    x: &PointCloud,
    y: &PointCloud,
    spec: CostSpec,
    params: SinkhornParams,
) -> Result<f64> {
    let tape = Tape::new();
    let v = transport_term_var(
        tape.leaf(x.matrix().clone()),
        tape.leaf(y.matrix().clone()),
        spec,
        params,
    )?;
    Ok(v.item())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        for s in ["all", "sinkhorn", "exact", "gaussian", "diff", "theory"] {
            assert!(s.parse::<Suite>().is_ok());
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn sinkhorn_suite_passes() {
        for o in run(Suite::Sinkhorn, 0) {
            assert!(o.passed, "{o}");
        }
    }

    #[test]
    fn exact_gaussian_and_diff_suites_pass() {
        for suite in [Suite::Exact, Suite::Gaussian, Suite::Diff] {
            for o in run(suite, 0) {
                assert!(o.passed, "{o}");
            }
        }
    }

    #[test]
    fn theory_suite_passes() {
        for o in run(Suite::Theory, 0) {
            assert!(o.passed, "{o}");
        }
    }

    #[test]
    fn non_debiased_divergence_is_caught() {
        let biased = |x: &PointCloud, y: &PointCloud, spec: CostSpec, params: SinkhornParams| {
            cross_term(x, y, spec, params)
        };
        let o = debias_and_symmetry(0, 10, &biased);
        assert!(!o.passed);
        assert!(o.instance.is_some());
        assert!(o.to_string().starts_with("FAIL debias_and_symmetry"));
    }
}
