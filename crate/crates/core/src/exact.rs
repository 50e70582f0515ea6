//! Exact and alternative estimators: Hungarian assignment, a brute-force
//! permutation oracle, sliced Wasserstein and the biased MMD.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{OtError, Result};
use crate::measures::{cost_matrix, CostMatrix, CostSpec, PointCloud};
use crate::priors::seeded_rng;
use crate::Matrix;

/// Largest problem the brute-force oracle accepts (9! = 362880 permutations).
pub const BRUTE_FORCE_MAX: usize = 9;

pub const DEFAULT_PROJECTIONS: usize = 50;

/// A perfect matching `i ↦ permutation[i]` and its cost.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub permutation: Vec<usize>,
    pub total_cost: f64,
    pub avg_cost: f64,
}

impl Assignment {
    fn from_permutation(c: &Matrix, permutation: Vec<usize>) -> Self {
        let total_cost = permutation_cost(c, &permutation);
        let avg_cost = total_cost / permutation.len() as f64;
        Self {
            permutation,
            total_cost,
            avg_cost,
        }
    }

    /// The 0/1 matrix with `P[i, π(i)] = 1`.
    pub fn permutation_matrix(&self) -> Matrix {
        let m = self.permutation.len();
        let mut p = Matrix::zeros(m, m);
        for (i, &j) in self.permutation.iter().enumerate() {
            p[(i, j)] = 1.0;
        }
        p
    }
}

/// `Σ_i C[i, π(i)]`, summed in row order.
pub fn permutation_cost(c: &Matrix, permutation: &[usize]) -> f64 {
    permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| c[(i, j)])
        .sum()
}

fn check_square(c: &CostMatrix) -> Result<()> {
    if !c.is_square() {
        return Err(OtError::invalid(format!(
            "assignment needs a square cost matrix, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    Ok(())
}

/// Minimum-cost perfect matching by shortest augmenting paths with
/// row/column potentials, `O(M³)`.
pub fn hungarian(c: &CostMatrix) -> Result<Assignment> {
    check_square(c)?;
    let a = c.values();
    let n = a.nrows();
    // 1-based: index 0 is the virtual source column
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut permutation = vec![0usize; n];
    for j in 1..=n {
        permutation[p[j] - 1] = j - 1;
    }
    Ok(Assignment::from_permutation(a, permutation))
}

/// Advances `perm` to the next permutation in lexicographic order.
pub(crate) fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// Exhaustive search over all `M!` permutations. Ties keep the
/// lexicographically smallest permutation.
pub fn brute_force_assignment(c: &CostMatrix) -> Result<Assignment> {
    check_square(c)?;
    let n = c.nrows();
    if n > BRUTE_FORCE_MAX {
        return Err(OtError::invalid(format!(
            "brute force limited to M <= {BRUTE_FORCE_MAX}, got {n}"
        )));
    }
    let a = c.values();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = permutation_cost(a, &perm);
    while next_permutation(&mut perm) {
        let cost = permutation_cost(a, &perm);
        if cost < best_cost {
            best_cost = cost;
            best.copy_from_slice(&perm);
        }
    }
    Ok(Assignment::from_permutation(a, best))
}

fn check_pair(x: &PointCloud, y: &PointCloud) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(OtError::invalid(format!(
            "dimension mismatch: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    if x.len() != y.len() {
        return Err(OtError::invalid(format!(
            "clouds must have equal size, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

/// Exact empirical `W_p` (the metric, i.e. the `p`-th root of the optimal average cost).
pub fn empirical_wp(x: &PointCloud, y: &PointCloud, spec: CostSpec) -> Result<f64> {
    check_pair(x, y)?;
    let c = cost_matrix(x, y, spec)?;
    let avg = hungarian(&c)?.avg_cost;
    Ok(avg.max(0.0).powf(1.0 / spec.p()))
}

/// Sliced estimate of `W_p^p`: the average over `n_proj` random directions
/// of the 1-D optimal cost between sorted projections.
pub fn sliced_wasserstein(
    x: &PointCloud,
    y: &PointCloud,
    p: f64,
    n_proj: usize,
    seed: u64,
) -> Result<f64> {
    check_pair(x, y)?;
    let spec = CostSpec::new(p)?;
    if n_proj == 0 {
        return Err(OtError::invalid("need at least one projection"));
    }
    let d = x.dim();
    let m = x.len();
    let mut rng = seeded_rng(seed);
    let mut total = 0.0;
    let mut px = vec![0.0; m];
    let mut py = vec![0.0; m];
    for _ in 0..n_proj {
        let theta = loop {
            let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                break g.into_iter().map(|v| v / norm).collect::<Vec<_>>();
            }
        };
        for i in 0..m {
            px[i] = (0..d).map(|k| x.matrix()[(i, k)] * theta[k]).sum();
            py[i] = (0..d).map(|k| y.matrix()[(i, k)] * theta[k]).sum();
        }
        px.sort_by(f64::total_cmp);
        py.sort_by(f64::total_cmp);
        total += px
            .iter()
            .zip(&py)
            .map(|(a, b)| spec.pow_abs(a - b))
            .sum::<f64>()
            / m as f64;
    }
    Ok(total / n_proj as f64)
}

fn mean_kernel(a: &PointCloud, b: &PointCloud, two_sigma2: f64) -> f64 {
    let c = cost_matrix(a, b, CostSpec::squared_euclidean()).expect("dimensions checked");
    c.values().map(|d2| (-d2 / two_sigma2).exp()).mean()
}

/// Biased (V-statistic) MMD² with a Gaussian RBF kernel
/// `k(x,y) = exp(−‖x−y‖²/(2σ²))`.
pub fn mmd_biased(x: &PointCloud, y: &PointCloud, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(OtError::invalid(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if x.dim() != y.dim() {
        return Err(OtError::invalid(format!(
            "dimension mismatch: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    let two_sigma2 = 2.0 * bandwidth * bandwidth;
    let v = mean_kernel(x, x, two_sigma2) + mean_kernel(y, y, two_sigma2)
        - 2.0 * mean_kernel(x, y, two_sigma2);
    Ok(v.max(0.0))
}

/// Median of the pairwise Euclidean distances over the pooled sample; the
/// default MMD bandwidth. Falls back to 1 when every distance is zero.
pub fn median_bandwidth(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(OtError::invalid(format!(
            "dimension mismatch: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    let rows: Vec<Vec<f64>> = x.rows().into_iter().chain(y.rows()).collect();
    let mut dists = Vec::with_capacity(rows.len() * rows.len() / 2);
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            let d2: f64 = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return Ok(1.0);
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    let med = if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    };
    Ok(if med > 0.0 { med } else { 1.0 })
}
