//! Entropic optimal transport between uniform empirical measures.
//!
//! Both solvers return the doubly stochastic matrix `R*` (the transport plan
//! is `R*/M`), always passed through [`round_to_polytope`] so the marginals
//! are exact on exit.

use crate::error::{OtError, Result};
use crate::measures::{cost_matrix, CostMatrix, CostSpec, PointCloud};
use crate::Matrix;

/// Entries of `exp(-C/ε)` below this are treated as underflowed.
const UNDERFLOW: f64 = 1e-300;

pub const DEFAULT_TOL: f64 = 1e-9;

/// Solver controls: regularizer `ε`, iteration cap `L`, marginal tolerance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornParams {
    pub epsilon: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl SinkhornParams {
    pub fn new(epsilon: f64, max_iters: usize) -> Self {
        Self {
            epsilon,
            max_iters,
            tol: DEFAULT_TOL,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(OtError::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(OtError::invalid("iteration cap L must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(OtError::invalid(format!(
                "tolerance must be >= 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// A doubly stochastic matrix together with its achieved marginal deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    matrix: Matrix,
    row_tol: f64,
    col_tol: f64,
}

impl Coupling {
    fn from_matrix(matrix: Matrix) -> Self {
        let (row_tol, col_tol) = marginal_deviations(&matrix);
        Self {
            matrix,
            row_tol,
            col_tol,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    /// `max_i |Σ_j R_ij − 1|`
    pub fn row_tol(&self) -> f64 {
        self.row_tol
    }

    /// `max_j |Σ_i R_ij − 1|`
    pub fn col_tol(&self) -> f64 {
        self.col_tol
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }
}

#[derive(Clone, Debug)]
pub struct SinkhornReport {
    pub coupling: Coupling,
    pub iterations_used: usize,
    pub converged: bool,
    /// Marginal deviation of the unrounded iterate at exit.
    pub marginal_error: f64,
}

pub(crate) fn marginal_deviations(r: &Matrix) -> (f64, f64) {
    let row = (0..r.nrows())
        .map(|i| (r.row(i).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let col = (0..r.ncols())
        .map(|j| (r.column(j).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    (row, col)
}

/// Stabilized `log Σ exp(v)`.
pub(crate) fn logsumexp<I>(values: I) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    let sum: f64 = values.map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

fn check_square(c: &CostMatrix) -> Result<()> {
    if !c.is_square() {
        return Err(OtError::invalid(format!(
            "Sinkhorn needs a square cost matrix, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    Ok(())
}

/// Scales `C` by `-1/ε`; the log-kernel shared by both solvers.
pub(crate) fn log_kernel(c: &Matrix, epsilon: f64) -> Matrix {
    c * (-1.0 / epsilon)
}

/// Alternating scaling `v ← 1/(Kᵀu)`, `u ← 1/(Kv)` with `K = exp(−C/ε)`.
///
/// Fails with [`OtError::NumericInstability`] when `K` underflows or the
/// scalings leave the representable range; use [`sinkhorn_log`] then.
pub fn sinkhorn(c: &CostMatrix, params: SinkhornParams) -> Result<SinkhornReport> {
    params.validate()?;
    check_square(c)?;
    let m = c.nrows();
    let k = log_kernel(c.values(), params.epsilon).map(f64::exp);
    for j in 0..m {
        if k.column(j).iter().all(|&v| v < UNDERFLOW) {
            return Err(OtError::NumericInstability(format!(
                "column {j} of exp(-C/epsilon) underflowed at epsilon = {}; use the log-domain solver",
                params.epsilon
            )));
        }
        if k.row(j).iter().all(|&v| v < UNDERFLOW) {
            return Err(OtError::NumericInstability(format!(
                "row {j} of exp(-C/epsilon) underflowed at epsilon = {}; use the log-domain solver",
                params.epsilon
            )));
        }
    }

    let mut u = vec![1.0; m];
    let mut v = vec![1.0; m];
    let mut iterations_used = 0;
    let mut converged = false;
    let mut marginal_error = f64::INFINITY;
    while iterations_used < params.max_iters {
        for j in 0..m {
            let s: f64 = (0..m).map(|i| k[(i, j)] * u[i]).sum();
            v[j] = 1.0 / s;
        }
        for i in 0..m {
            let s: f64 = (0..m).map(|j| k[(i, j)] * v[j]).sum();
            u[i] = 1.0 / s;
        }
        iterations_used += 1;
        if u.iter()
            .chain(v.iter())
            .any(|x| !x.is_finite() || *x == 0.0)
        {
            return Err(OtError::NumericInstability(format!(
                "scaling vectors left the finite range after {iterations_used} iterations; use the log-domain solver"
            )));
        }
        let r = Matrix::from_fn(m, m, |i, j| u[i] * k[(i, j)] * v[j]);
        let (er, ec) = marginal_deviations(&r);
        marginal_error = er.max(ec);
        if marginal_error <= params.tol {
            converged = true;
            break;
        }
    }
    let r = Matrix::from_fn(m, m, |i, j| u[i] * k[(i, j)] * v[j]);
    Ok(SinkhornReport {
        coupling: round_to_polytope(&r)?,
        iterations_used,
        converged,
        marginal_error,
    })
}

/// Dual potentials of the log-domain solver, stored divided by `ε`.
#[derive(Clone, Debug)]
pub(crate) struct LogScalings {
    pub log_u: Vec<f64>,
    pub log_v: Vec<f64>,
}

/// One full update: `log v_j = −LSE_i(a_ij + log u_i)`, then `log u_i = −LSE_j(a_ij + log v_j)`.
pub(crate) fn log_step(a: &Matrix, s: &mut LogScalings) {
    let m = a.nrows();
    let n = a.ncols();
    for j in 0..n {
        let log_u = &s.log_u;
        s.log_v[j] = -logsumexp((0..m).map(|i| a[(i, j)] + log_u[i]));
    }
    for i in 0..m {
        let log_v = &s.log_v;
        s.log_u[i] = -logsumexp((0..n).map(|j| a[(i, j)] + log_v[j]));
    }
}

pub(crate) fn log_plan(a: &Matrix, s: &LogScalings) -> Matrix {
    Matrix::from_fn(a.nrows(), a.ncols(), |i, j| {
        (a[(i, j)] + s.log_u[i] + s.log_v[j]).exp()
    })
}

/// Same fixed point as [`sinkhorn`], iterated on dual potentials with
/// stabilized log-sum-exp reductions. Never forms `exp(−C/ε)`.
pub fn sinkhorn_log(c: &CostMatrix, params: SinkhornParams) -> Result<SinkhornReport> {
    params.validate()?;
    check_square(c)?;
    let m = c.nrows();
    let a = log_kernel(c.values(), params.epsilon);
    let mut s = LogScalings {
        log_u: vec![0.0; m],
        log_v: vec![0.0; m],
    };
    let mut iterations_used = 0;
    let mut converged = false;
    let mut marginal_error = f64::INFINITY;
    while iterations_used < params.max_iters {
        log_step(&a, &mut s);
        iterations_used += 1;
        if s.log_u.iter().chain(s.log_v.iter()).any(|x| !x.is_finite()) {
            return Err(OtError::NumericInstability(format!(
                "log-domain potentials became non-finite after {iterations_used} iterations"
            )));
        }
        let (er, ec) = marginal_deviations(&log_plan(&a, &s));
        marginal_error = er.max(ec);
        if marginal_error <= params.tol {
            converged = true;
            break;
        }
    }
    Ok(SinkhornReport {
        coupling: round_to_polytope(&log_plan(&a, &s))?,
        iterations_used,
        converged,
        marginal_error,
    })
}

/// Rounds a nonnegative matrix onto the doubly stochastic polytope: rows
/// scaled down to sum ≤ 1, then columns, then the rank-one correction
/// `err_r err_cᵀ / ‖err_r‖₁` restores exact marginals.
pub fn round_to_polytope(r: &Matrix) -> Result<Coupling> {
    let (m, n) = r.shape();
    if m == 0 || m != n {
        return Err(OtError::invalid(format!(
            "rounding needs a nonempty square matrix, got {m}x{n}"
        )));
    }
    if r.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(OtError::invalid(
            "rounding needs finite nonnegative entries",
        ));
    }
    let rows: Vec<f64> = (0..m).map(|i| r.row(i).iter().sum()).collect();
    if let Some(i) = rows.iter().position(|&s| s == 0.0) {
        return Err(OtError::invalid(format!("row {i} is identically zero")));
    }
    let x: Vec<f64> = rows.iter().map(|s| (1.0 / s).min(1.0)).collect();
    let f1 = Matrix::from_fn(m, n, |i, j| r[(i, j)] * x[i]);
    let cols: Vec<f64> = (0..n).map(|j| f1.column(j).iter().sum()).collect();
    if let Some(j) = cols.iter().position(|&s| s == 0.0) {
        return Err(OtError::invalid(format!("column {j} is identically zero")));
    }
    let y: Vec<f64> = cols.iter().map(|s| (1.0 / s).min(1.0)).collect();
    let f2 = Matrix::from_fn(m, n, |i, j| f1[(i, j)] * y[j]);
    // both deficits are nonnegative after the scalings; clamp away roundoff
    let err_r: Vec<f64> = (0..m)
        .map(|i| (-f2.row(i).iter().sum::<f64>() + 1.0).max(0.0))
        .collect();
    let err_c: Vec<f64> = (0..n)
        .map(|j| (-f2.column(j).iter().sum::<f64>() + 1.0).max(0.0))
        .collect();
    let norm: f64 = err_r.iter().sum();
    let out = if norm > 0.0 {
        let inv = 1.0 / norm;
        Matrix::from_fn(m, n, |i, j| f2[(i, j)] + (err_r[i] * err_c[j]) * inv)
    } else {
        f2
    };
    Ok(Coupling::from_matrix(out))
}

/// Sharp transport cost `(1/M) ⟨R, C⟩_F`, without the entropy term.
pub fn sharp_cost(r: &Coupling, c: &CostMatrix) -> Result<f64> {
    if r.matrix().shape() != c.values().shape() {
        return Err(OtError::invalid(format!(
            "coupling is {:?} but cost matrix is {:?}",
            r.matrix().shape(),
            c.values().shape()
        )));
    }
    Ok(r.matrix().component_mul(c.values()).sum() / r.size() as f64)
}

/// `H(R) = −Σ R_ij log R_ij` with `0 log 0 = 0`.
pub fn entropy(r: &Coupling) -> f64 {
    -r.matrix()
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}

/// The three sharp costs entering the debiased divergence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivergenceTerms {
    pub cross: f64,
    pub self_x: f64,
    pub self_y: f64,
}

impl DivergenceTerms {
    pub fn divergence(&self) -> f64 {
        self.cross - 0.5 * (self.self_x + self.self_y)
    }
}

/// Runs the log-domain solver on `(X,Y)`, `(X,X)` and `(Y,Y)`.
pub fn divergence_terms(
    x: &PointCloud,
    y: &PointCloud,
    spec: CostSpec,
    params: SinkhornParams,
) -> Result<DivergenceTerms> {
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
    let term = |a: &PointCloud, b: &PointCloud| -> Result<f64> {
        let c = cost_matrix(a, b, spec)?;
        let rep = sinkhorn_log(&c, params)?;
        sharp_cost(&rep.coupling, &c)
    };
    Ok(DivergenceTerms {
        cross: term(x, y)?,
        self_x: term(x, x)?,
        self_y: term(y, y)?,
    })
}

/// Debiased sharp Sinkhorn divergence
/// `(1/M)⟨R*_XY, C_XY⟩ − ½((1/M)⟨R*_XX, C_XX⟩ + (1/M)⟨R*_YY, C_YY⟩)`.
pub fn sinkhorn_divergence(
    x: &PointCloud,
    y: &PointCloud,
    spec: CostSpec,
    params: SinkhornParams,
) -> Result<f64> {
    Ok(divergence_terms(x, y, spec, params)?.divergence())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cm(rows: usize, vals: &[f64]) -> CostMatrix {
        CostMatrix::from_matrix(
            Matrix::from_row_slice(rows, rows, vals),
            CostSpec::default(),
        )
        .unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, m: usize, d: usize) -> PointCloud {
        PointCloud::new(Matrix::from_fn(m, d, |_, _| rng.random::<f64>())).unwrap()
    }

    #[test]
    fn single_point_is_trivial() {
        for eps in [1e-3, 1.0, 1e3] {
            let c = cm(1, &[7.0]);
            let p = SinkhornParams::new(eps, 10);
            if eps >= 1.0 {
                assert_eq!(sinkhorn(&c, p).unwrap().coupling.matrix()[(0, 0)], 1.0);
            }
            assert_eq!(sinkhorn_log(&c, p).unwrap().coupling.matrix()[(0, 0)], 1.0);
        }
    }

    #[test]
    fn huge_epsilon_gives_uniform() {
        let c = cm(2, &[0.0, 1.0, 1.0, 0.0]);
        let rep = sinkhorn(&c, SinkhornParams::new(1e6, 100)).unwrap();
        for v in rep.coupling.matrix().iter() {
            assert!((v - 0.5).abs() <= 1e-6);
        }
    }

    #[test]
    fn small_epsilon_recovers_assignment_cost() {
        // two permutations: identity costs (0+1)/2, swap costs (4+1)/2
        let c = cm(2, &[0.0, 4.0, 1.0, 1.0]);
        let rep = sinkhorn_log(&c, SinkhornParams::new(1e-3, 10_000)).unwrap();
        let cost = sharp_cost(&rep.coupling, &c).unwrap();
        assert!((cost - 0.5).abs() <= 0.005, "cost {cost}");
    }

    #[test]
    fn plain_solver_reports_underflow() {
        let c = cm(2, &[0.0, 100.0, 100.0, 0.0]);
        let err = sinkhorn(&c, SinkhornParams::new(1e-3, 100));
        // diagonal is exp(0) = 1, so only a fully underflowed column triggers the check
        assert!(err.is_ok());
        let c = cm(2, &[1e3, 1e3, 1e3, 1e3]);
        let err = sinkhorn(&c, SinkhornParams::new(1e-3, 100)).unwrap_err();
        assert!(err.is_numeric());
        assert!(sinkhorn_log(&c, SinkhornParams::new(1e-3, 100)).is_ok());
    }

    #[test]
    fn log_matches_plain_on_random_4x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = CostMatrix::from_matrix(
            Matrix::from_fn(4, 4, |_, _| rng.random::<f64>()),
            CostSpec::default(),
        )
        .unwrap();
        let p = SinkhornParams::new(1.0, 2000);
        let a = sinkhorn(&c, p).unwrap();
        let b = sinkhorn_log(&c, p).unwrap();
        assert!(a.converged && b.converged);
        let diff = (a.coupling.matrix() - b.coupling.matrix()).abs().max();
        assert!(diff <= 1e-10, "diff {diff}");
    }

    #[test]
    fn log_solver_separated_costs_give_identity() {
        let c = cm(2, &[0.0, 100.0, 100.0, 0.0]);
        let rep = sinkhorn_log(&c, SinkhornParams::new(0.01, 1000)).unwrap();
        let id = Matrix::identity(2, 2);
        assert!((rep.coupling.matrix() - id).abs().max() <= 1e-6);
    }

    #[test]
    fn log_solver_stays_finite_at_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = CostMatrix::from_matrix(
            Matrix::from_fn(5, 5, |_, _| rng.random::<f64>() * 1e4),
            CostSpec::default(),
        )
        .unwrap();
        let rep = sinkhorn_log(&c, SinkhornParams::new(1e-4, 200)).unwrap();
        assert!(rep.coupling.matrix().iter().all(|v| v.is_finite()));
        assert!(rep.coupling.row_tol() <= 1e-12 && rep.coupling.col_tol() <= 1e-12);
    }

    #[test]
    fn iterations_respect_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_cloud(&mut rng, 6, 2);
        let y = random_cloud(&mut rng, 6, 2);
        let c = cost_matrix(&x, &y, CostSpec::default()).unwrap();
        let rep = sinkhorn_log(&c, SinkhornParams::new(1e-3, 3)).unwrap();
        assert_eq!(rep.iterations_used, 3);
        assert!(!rep.converged);
        // rounding still yields exact marginals
        assert!(rep.coupling.row_tol() <= 1e-12 && rep.coupling.col_tol() <= 1e-12);
    }

    #[test]
    fn rounding_examples() {
        let half = Matrix::from_element(2, 2, 0.5);
        assert_eq!(round_to_polytope(&half).unwrap().matrix(), &half);
        let id = Matrix::identity(2, 2);
        assert_eq!(round_to_polytope(&id).unwrap().matrix(), &id);

        let r = Matrix::from_row_slice(2, 2, &[0.6, 0.5, 0.4, 0.5]);
        let out = round_to_polytope(&r).unwrap();
        assert!(out.row_tol() <= 1e-12 && out.col_tol() <= 1e-12);
        let violation = 0.1 + 0.1 + 0.0 + 0.0 + 0.0;
        assert!((out.matrix() - &r).abs().max() <= violation);
        // hand-executed: rows 1.1, 0.9 -> first row scaled by 1/1.1,
        // columns then sum to (0.945..., 0.9545...) < 1, both kept
        let f1 = [0.6 / 1.1, 0.5 / 1.1, 0.4, 0.5];
        let err_r = [1.0 - (f1[0] + f1[1]), 1.0 - (f1[2] + f1[3])];
        let err_c = [1.0 - (f1[0] + f1[2]), 1.0 - (f1[1] + f1[3])];
        let s = err_r[0] + err_r[1];
        let expect = [
            f1[0] + err_r[0] * err_c[0] / s,
            f1[1] + err_r[0] * err_c[1] / s,
            f1[2] + err_r[1] * err_c[0] / s,
            f1[3] + err_r[1] * err_c[1] / s,
        ];
        for (k, e) in expect.iter().enumerate() {
            assert!((out.matrix()[(k / 2, k % 2)] - e).abs() <= 1e-15);
        }
    }

    #[test]
    fn rounding_rejects_zero_rows() {
        let r = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.4, 0.5]);
        assert!(round_to_polytope(&r).is_err());
        let r = Matrix::from_row_slice(2, 2, &[0.3, 0.0, 0.4, 0.0]);
        assert!(round_to_polytope(&r).is_err());
    }

    #[test]
    fn sharp_cost_examples() {
        let c = cm(2, &[0.0, 4.0, 1.0, 1.0]);
        let id = round_to_polytope(&Matrix::identity(2, 2)).unwrap();
        assert_eq!(sharp_cost(&id, &c).unwrap(), 0.5);
        let uni = round_to_polytope(&Matrix::from_element(2, 2, 0.5)).unwrap();
        assert_eq!(sharp_cost(&uni, &c).unwrap(), 1.5);
        assert_eq!(sharp_cost(&uni, &cm(2, &[0.0; 4])).unwrap(), 0.0);
        assert!(sharp_cost(&uni, &cm(1, &[0.0])).is_err());
    }

    #[test]
    fn entropy_examples() {
        let id = round_to_polytope(&Matrix::identity(2, 2)).unwrap();
        assert_eq!(entropy(&id), 0.0);
        let uni = round_to_polytope(&Matrix::from_element(2, 2, 0.5)).unwrap();
        assert!((entropy(&uni) - 2.0 * 2f64.ln()).abs() < 1e-15);
        let m = 5;
        let uni = round_to_polytope(&Matrix::from_element(m, m, 1.0 / m as f64)).unwrap();
        assert!((entropy(&uni) - m as f64 * (m as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn divergence_examples() {
        let x = PointCloud::from_rows(&[vec![0.0]]).unwrap();
        let y = PointCloud::from_rows(&[vec![3.0]]).unwrap();
        for eps in [0.01, 1.0, 100.0] {
            let s = sinkhorn_divergence(&x, &y, CostSpec::default(), SinkhornParams::new(eps, 50))
                .unwrap();
            assert_eq!(s, 9.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_cloud(&mut rng, 7, 3);
        let s = sinkhorn_divergence(&x, &x, CostSpec::default(), SinkhornParams::new(0.1, 500))
            .unwrap();
        assert!(s.abs() <= 1e-9);
    }

    #[test]
    fn divergence_rejects_unequal_sizes() {
        let x = PointCloud::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let y = PointCloud::from_rows(&[vec![3.0]]).unwrap();
        assert!(
            sinkhorn_divergence(&x, &y, CostSpec::default(), SinkhornParams::new(1.0, 10)).is_err()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn divergence_symmetric_and_nonnegative(seed in 0u64..10_000, m in 2usize..7, eps in 0.05..2.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_cloud(&mut rng, m, 2);
            let y = random_cloud(&mut rng, m, 2);
            let p = SinkhornParams::new(eps, 20_000).with_tol(1e-12);
            let sxy = sinkhorn_divergence(&x, &y, CostSpec::default(), p).unwrap();
            let syx = sinkhorn_divergence(&y, &x, CostSpec::default(), p).unwrap();
            prop_assert!((sxy - syx).abs() <= 1e-9, "{} vs {}", sxy, syx);
            prop_assert!(sxy >= -1e-9);
        }

        #[test]
        fn rounding_is_idempotent(seed in 0u64..10_000, m in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = Matrix::from_fn(m, m, |_, _| rng.random::<f64>() + 1e-3);
            let once = round_to_polytope(&r).unwrap();
            let twice = round_to_polytope(once.matrix()).unwrap();
            prop_assert!(once.row_tol() <= 1e-12 && once.col_tol() <= 1e-12);
            prop_assert!((once.matrix() - twice.matrix()).abs().max() <= 1e-12);
        }

        #[test]
        fn log_and_plain_agree(seed in 0u64..10_000, m in 2usize..6, eps in 0.2..5.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = CostMatrix::from_matrix(Matrix::from_fn(m, m, |_, _| rng.random::<f64>()), CostSpec::default()).unwrap();
            let p = SinkhornParams::new(eps, 5000);
            let a = sinkhorn(&c, p).unwrap();
            let b = sinkhorn_log(&c, p).unwrap();
            prop_assert!((a.coupling.matrix() - b.coupling.matrix()).abs().max() <= 1e-10);
        }
    }
}
