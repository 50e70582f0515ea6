//! Latent priors and interpolation helpers.
//!
//! Randomness comes from ChaCha8 seeded through `seed_from_u64`, so every
//! stream is reproducible from its integer seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::measures::PointCloud;
use crate::Matrix;

pub type Rng64 = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Prior over the latent space. The square prior is uniform on `[0,1]²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    GaussianStandard { dim: usize },
    SphereUniform { dim: usize },
    Dirichlet { alpha: Vec<f64> },
    SquareUniform,
}

impl PriorSpec {
    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::GaussianStandard { dim } | PriorSpec::SphereUniform { dim } => *dim,
            PriorSpec::Dirichlet { alpha } => alpha.len(),
            PriorSpec::SquareUniform => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PriorSpec::GaussianStandard { dim } | PriorSpec::SphereUniform { dim } if *dim == 0 => {
                Err(OtError::invalid("prior dimension must be at least 1"))
            }
            PriorSpec::Dirichlet { alpha } if alpha.len() < 2 => Err(OtError::invalid(
                "dirichlet needs at least two concentration parameters",
            )),
            PriorSpec::Dirichlet { alpha }
                if alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) =>
            {
                Err(OtError::invalid(
                    "dirichlet concentrations must be positive and finite",
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Draws `m` i.i.d. rows from the prior using the seed's stream.
pub fn sample(spec: &PriorSpec, m: usize, seed: u64) -> Result<PointCloud> {
    sample_with(spec, m, &mut seeded_rng(seed))
}

/// As [`sample`], drawing from an existing stream.
pub fn sample_with<R: Rng + ?Sized>(spec: &PriorSpec, m: usize, rng: &mut R) -> Result<PointCloud> {
    spec.validate()?;
    if m == 0 {
        return Err(OtError::invalid("sample count must be at least 1"));
    }
    let d = spec.dim();
    let mut out = Matrix::zeros(m, d);
    match spec {
        PriorSpec::GaussianStandard { .. } => {
            for i in 0..m {
                for k in 0..d {
                    out[(i, k)] = StandardNormal.sample(rng);
                }
            }
        }
        PriorSpec::SphereUniform { .. } => {
            for i in 0..m {
                let v = unit_vector(d, rng);
                for k in 0..d {
                    out[(i, k)] = v[k];
                }
            }
        }
        PriorSpec::Dirichlet { alpha } => {
            let gammas = alpha
                .iter()
                .map(|a| {
                    Gamma::new(*a, 1.0).map_err(|e| OtError::invalid(format!("gamma({a}): {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            for i in 0..m {
                let row = loop {
                    let g: Vec<f64> = gammas.iter().map(|gm| gm.sample(rng)).collect();
                    let s: f64 = g.iter().sum();
                    if s > 0.0 && s.is_finite() {
                        break g.into_iter().map(|v| v / s).collect::<Vec<_>>();
                    }
                };
                for k in 0..d {
                    out[(i, k)] = row[k];
                }
            }
        }
        PriorSpec::SquareUniform => {
            for i in 0..m {
                out[(i, 0)] = rng.random::<f64>();
                out[(i, 1)] = rng.random::<f64>();
            }
        }
    }
    PointCloud::new(out)
}

fn unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            return g.into_iter().map(|v| v / n).collect();
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Spherical linear interpolation between unit vectors. Nearly parallel
/// inputs (angle below 1e-6) use normalized linear interpolation.
pub fn geodesic_interpolation(z1: &[f64], z2: &[f64], t: f64) -> Result<Vec<f64>> {
    if z1.len() != z2.len() || z1.is_empty() {
        return Err(OtError::invalid(
            "endpoints must be nonempty and of equal dimension",
        ));
    }
    for (name, z) in [("z1", z1), ("z2", z2)] {
        if (norm(z) - 1.0).abs() > 1e-9 {
            return Err(OtError::invalid(format!("{name} is not a unit vector")));
        }
    }
    let dot: f64 = z1
        .iter()
        .zip(z2)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .clamp(-1.0, 1.0);
    let omega = dot.acos();
    if std::f64::consts::PI - omega < 1e-9 {
        return Err(OtError::invalid(
            "antipodal endpoints have no unique geodesic",
        ));
    }
    if omega < 1e-6 {
        let lerp: Vec<f64> = z1
            .iter()
            .zip(z2)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        let n = norm(&lerp);
        return Ok(lerp.into_iter().map(|v| v / n).collect());
    }
    let s = omega.sin();
    let w1 = ((1.0 - t) * omega).sin() / s;
    let w2 = (t * omega).sin() / s;
    Ok(z1.iter().zip(z2).map(|(a, b)| w1 * a + w2 * b).collect())
}

/// Point on the simplex edge from vertex `v1` to vertex `v2`.
pub fn simplex_edge_interpolation(v1: usize, v2: usize, t: f64, dim: usize) -> Result<Vec<f64>> {
    if v1 >= dim || v2 >= dim {
        return Err(OtError::invalid(format!(
            "vertex index out of range for dimension {dim}"
        )));
    }
    if v1 == v2 {
        return Err(OtError::invalid("edge endpoints must differ"));
    }
    let mut out = vec![0.0; dim];
    out[v1] = 1.0 - t;
    out[v2] = t;
    Ok(out)
}
