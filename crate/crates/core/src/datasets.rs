//! Synthetic datasets used by the presets, the acceptance suite and the demo.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::measures::PointCloud;
use crate::priors::seeded_rng;
use crate::Matrix;

/// A generated dataset, as named in run configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    SwissRoll { n: usize, noise: f64, seed: u64 },
    ToyMixture { n: usize, seed: u64 },
}

impl DatasetSpec {
    pub fn generate(&self) -> Result<PointCloud> {
        match *self {
            DatasetSpec::SwissRoll { n, noise, seed } => swiss_roll(n, noise, seed),
            DatasetSpec::ToyMixture { n, seed } => toy_mixture(n, seed),
        }
    }
}

/// The noiseless roll point for parameters `(t, h)`.
pub fn swiss_roll_point(t: f64, h: f64) -> [f64; 3] {
    [t * t.cos(), h, t * t.sin()]
}

/// Swiss roll in R³: `t ~ U[1.5π, 4.5π]`, `h ~ U[0, 10]`,
/// point `(t cos t, h, t sin t) + noise·η` with `η ~ N(0, I)`.
pub fn swiss_roll(n: usize, noise: f64, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(OtError::invalid("swiss roll needs n >= 1"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(OtError::invalid(format!("noise must be >= 0, got {noise}")));
    }
    let mut rng = seeded_rng(seed);
    let pi = std::f64::consts::PI;
    let mut m = Matrix::zeros(n, 3);
    for i in 0..n {
        let t = rng.random_range(1.5 * pi..4.5 * pi);
        let h = rng.random_range(0.0..10.0);
        let base = swiss_roll_point(t, h);
        for (j, b) in base.into_iter().enumerate() {
            let eta: f64 = StandardNormal.sample(&mut rng);
            m[(i, j)] = b + noise * eta;
        }
    }
    PointCloud::new(m)
}

/// Equal-weight mixture of isotropic Gaussians centred at `centers`.
pub fn gaussian_mixture(
    n: usize,
    centers: &[Vec<f64>],
    sigma: f64,
    seed: u64,
) -> Result<PointCloud> {
    let d = centers
        .first()
        .map(Vec::len)
        .ok_or_else(|| OtError::invalid("mixture needs a center"))?;
    if d == 0 || centers.iter().any(|c| c.len() != d) {
        return Err(OtError::invalid(
            "mixture centers must share a positive dimension",
        ));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(OtError::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut rng = seeded_rng(seed);
    let mut m = Matrix::zeros(n, d);
    for i in 0..n {
        let c = &centers[rng.random_range(0..centers.len())];
        for j in 0..d {
            let eta: f64 = StandardNormal.sample(&mut rng);
            m[(i, j)] = c[j] + sigma * eta;
        }
    }
    PointCloud::new(m)
}

/// Four well-separated planar clusters.
pub fn toy_mixture(n: usize, seed: u64) -> Result<PointCloud> {
    let centers = vec![
        vec![2.0, 2.0],
        vec![-2.0, 2.0],
        vec![-2.0, -2.0],
        vec![2.0, -2.0],
    ];
    gaussian_mixture(n, &centers, 0.3, seed)
}
