//! Differentiable versions of the crate's losses, recorded on a [`Tape`].
//!
//! The Sinkhorn iterations are unrolled: every executed update becomes part
//! of the graph, including the final rounding step, so the gradient is exact
//! for the loss actually computed. The arithmetic mirrors
//! [`crate::sinkhorn::sinkhorn_log`] and [`crate::sinkhorn::round_to_polytope`]
//! operation for operation.

use crate::error::{OtError, Result};
use crate::gaussian::{sqrtm_psd, GaussianParams};
use crate::measures::CostSpec;
use crate::sinkhorn::{log_plan, marginal_deviations, LogScalings, SinkhornParams};
use crate::Matrix;

use super::{pairwise_cost, Tape, Var};

/// Exit information of an unrolled solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnrolledStats {
    pub iterations_used: usize,
    pub converged: bool,
    pub marginal_error: f64,
}

pub fn cost_matrix_var<'t>(x: Var<'t>, y: Var<'t>, spec: CostSpec) -> Var<'t> {
    pairwise_cost(x, y, spec.p())
}

fn column_values(v: &Var<'_>) -> Vec<f64> {
    v.value().iter().copied().collect()
}

/// Log-domain Sinkhorn on a recorded cost matrix, followed by rounding.
pub fn sinkhorn_log_var<'t>(
    c: Var<'t>,
    params: SinkhornParams,
) -> Result<(Var<'t>, UnrolledStats)> {
    params.validate()?;
    let (m, n) = c.shape();
    if m != n {
        return Err(OtError::invalid(format!(
            "Sinkhorn needs a square cost matrix, got {m}x{n}"
        )));
    }
    let tape = c.tape();
    let a = c.scale(-1.0 / params.epsilon);
    let a_val = a.value();
    let mut log_u = tape.leaf(Matrix::zeros(m, 1));
    let mut log_v;
    let mut stats = UnrolledStats {
        iterations_used: 0,
        converged: false,
        marginal_error: f64::INFINITY,
    };
    loop {
        log_v = -a.add_col(log_u).col_logsumexp();
        log_u = -a.add_row(log_v).row_logsumexp();
        stats.iterations_used += 1;
        let s = LogScalings {
            log_u: column_values(&log_u),
            log_v: column_values(&log_v),
        };
        if s.log_u.iter().chain(&s.log_v).any(|x| !x.is_finite()) {
            return Err(OtError::NumericInstability(format!(
                "log-domain potentials became non-finite after {} iterations",
                stats.iterations_used
            )));
        }
        let (er, ec) = marginal_deviations(&log_plan(&a_val, &s));
        stats.marginal_error = er.max(ec);
        if stats.marginal_error <= params.tol {
            stats.converged = true;
            break;
        }
        if stats.iterations_used >= params.max_iters {
            break;
        }
    }
    let plan = a.add_col(log_u).add_row(log_v).exp();
    Ok((round_var(plan), stats))
}

/// Rounding onto the doubly stochastic polytope, recorded on the tape.
pub fn round_var(r: Var<'_>) -> Var<'_> {
    let x = r.row_sums().recip().clamp_max(1.0);
    let f1 = r.mul_col(x);
    let y = f1.col_sums().recip().clamp_max(1.0);
    let f2 = f1.mul_row(y);
    let err_r = f2.row_sums().neg().offset(1.0);
    let err_c = f2.col_sums().neg().offset(1.0);
    let norm = err_r.pow_abs(1.0).sum();
    if norm.item() > 0.0 {
        f2 + err_r.matmul(err_c).mul_scalar(norm.recip())
    } else {
        f2
    }
}

/// `(1/M) ⟨R, C⟩_F`
pub fn sharp_cost_var<'t>(r: Var<'t>, c: Var<'t>) -> Var<'t> {
    let m = r.shape().0;
    (r * c).sum().scale(1.0 / m as f64)
}

/// Sharp cost of the entropic coupling between two recorded point sets.
pub fn transport_term_var<'t>(
    x: Var<'t>,
    y: Var<'t>,
    spec: CostSpec,
    params: SinkhornParams,
) -> Result<Var<'t>> {
    let c = cost_matrix_var(x, y, spec);
    let (r, _) = sinkhorn_log_var(c, params)?;
    Ok(sharp_cost_var(r, c))
}

fn check_clouds(x: &Var<'_>, y: &Var<'_>) -> Result<()> {
    let (xs, ys) = (x.shape(), y.shape());
    if xs.1 != ys.1 {
        return Err(OtError::invalid(format!(
            "dimension mismatch: {} vs {}",
            xs.1, ys.1
        )));
    }
    if xs.0 != ys.0 {
        return Err(OtError::invalid(format!(
            "clouds must have equal size, got {} and {}",
            xs.0, ys.0
        )));
    }
    Ok(())
}

/// Debiased sharp Sinkhorn divergence, differentiable in both clouds
/// through all three unrolled solves.
pub fn sinkhorn_divergence_var<'t>(
    x: Var<'t>,
    y: Var<'t>,
    spec: CostSpec,
    params: SinkhornParams,
) -> Result<Var<'t>> {
    check_clouds(&x, &y)?;
    let cross = transport_term_var(x, y, spec, params)?;
    let self_x = transport_term_var(x, x, spec, params)?;
    let self_y = transport_term_var(y, y, spec, params)?;
    Ok(cross - (self_x + self_y).scale(0.5))
}

/// Sample mean (`1×d`) and unbiased covariance (`d×d`).
pub fn moments_var(x: Var<'_>) -> Result<(Var<'_>, Var<'_>)> {
    let (m, _) = x.shape();
    if m < 2 {
        return Err(OtError::invalid("covariance needs at least two points"));
    }
    let ones = x.tape().leaf(Matrix::from_element(1, m, 1.0));
    let mean = ones.matmul(x).scale(1.0 / m as f64);
    let centered = x.add_row(-mean);
    let cov = centered.t().matmul(centered).scale(1.0 / (m - 1) as f64);
    Ok((mean, cov))
}

/// Closed-form `W₂²` between `N(mean, cov)` and a fixed Gaussian target.
pub fn w2_gaussian_squared_var<'t>(
    mean: Var<'t>,
    cov: Var<'t>,
    target: &GaussianParams,
) -> Result<Var<'t>> {
    let d = target.dim();
    if mean.shape() != (1, d) || cov.shape() != (d, d) {
        return Err(OtError::invalid(format!(
            "moments have shapes {:?}/{:?}, target dimension is {d}",
            mean.shape(),
            cov.shape()
        )));
    }
    let tape: &Tape = mean.tape();
    let mu2 = tape.leaf(Matrix::from_row_slice(
        1,
        target.mean.len(),
        target.mean.as_slice(),
    ));
    let root2 = tape.leaf(sqrtm_psd(&target.covariance)?);
    let mean_term = (mean - mu2).pow_abs(2.0).sum();
    let inner = root2.matmul(cov).matmul(root2);
    let inner = (inner + inner.t()).scale(0.5);
    let cross = inner.sqrtm().trace();
    let trace = (cov.trace().offset(target.covariance.trace()) - cross.scale(2.0)).clamp_min(0.0);
    Ok(mean_term + trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{finite_difference_check, grad};
    use crate::gaussian::{estimate_moments, w2_gaussian_squared};
    use crate::measures::{cost_matrix, PointCloud};
    use crate::sinkhorn::{round_to_polytope, sinkhorn_divergence, sinkhorn_log};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random::<f64>())
    }

    #[test]
    fn unrolled_solver_matches_plain_log_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for eps in [0.05, 0.5, 3.0] {
            let x = rand_mat(&mut rng, 6, 2);
            let y = rand_mat(&mut rng, 6, 2);
            let params = SinkhornParams::new(eps, 500);
            let c = cost_matrix(
                &PointCloud::new(x.clone()).unwrap(),
                &PointCloud::new(y.clone()).unwrap(),
                CostSpec::default(),
            )
            .unwrap();
            let plain = sinkhorn_log(&c, params).unwrap();
            let tape = Tape::new();
            let cv = cost_matrix_var(tape.leaf(x), tape.leaf(y), CostSpec::default());
            let (r, stats) = sinkhorn_log_var(cv, params).unwrap();
            assert_eq!(stats.iterations_used, plain.iterations_used);
            assert_eq!(stats.converged, plain.converged);
            assert!((r.value() - plain.coupling.matrix()).amax() <= 1e-14);
        }
    }

    #[test]
    fn recorded_rounding_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let r = rand_mat(&mut rng, 5, 5).map(|v| v + 0.01);
            let tape = Tape::new();
            let out = round_var(tape.leaf(r.clone())).value();
            assert!((out - round_to_polytope(&r).unwrap().matrix()).amax() <= 1e-15);
        }
    }

    #[test]
    fn divergence_value_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_mat(&mut rng, 5, 2);
        let y = rand_mat(&mut rng, 5, 2);
        let params = SinkhornParams::new(0.5, 200);
        let plain = sinkhorn_divergence(
            &PointCloud::new(x.clone()).unwrap(),
            &PointCloud::new(y.clone()).unwrap(),
            CostSpec::default(),
            params,
        )
        .unwrap();
        let (v, _) = grad(&[x, y], |_, p| {
            sinkhorn_divergence_var(p[0], p[1], CostSpec::default(), params)
        })
        .unwrap();
        assert!((v - plain).abs() <= 1e-13);
    }

    #[test]
    fn divergence_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_mat(&mut rng, 5, 2);
        let y = rand_mat(&mut rng, 5, 2);
        // tol 0 fixes the unrolled length at L so perturbations cannot change it
        let params = SinkhornParams::new(0.5, 200).with_tol(0.0);
        let rep = finite_difference_check(
            &[x],
            |t, p| sinkhorn_divergence_var(p[0], t.leaf(y.clone()), CostSpec::default(), params),
            1e-4,
        )
        .unwrap();
        assert!(rep.max_rel_error <= 1e-4, "{}", rep.max_rel_error);
    }

    #[test]
    fn divergence_is_stationary_at_equal_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_mat(&mut rng, 5, 2);
        let params = SinkhornParams::new(0.5, 200).with_tol(0.0);
        let (_, g) = grad(std::slice::from_ref(&x), |t, p| {
            sinkhorn_divergence_var(p[0], t.leaf(x.clone()), CostSpec::default(), params)
        })
        .unwrap();
        assert!(g[0].norm() <= 1e-6, "{}", g[0].norm());
    }

    #[test]
    fn unrolled_gradient_converges_with_more_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = rand_mat(&mut rng, 5, 2);
        let y = rand_mat(&mut rng, 5, 2);
        let g_at = |l: usize| {
            let params = SinkhornParams::new(0.5, l).with_tol(0.0);
            grad(std::slice::from_ref(&x), |t, p| {
                sinkhorn_divergence_var(p[0], t.leaf(y.clone()), CostSpec::default(), params)
            })
            .unwrap()
            .1
            .remove(0)
        };
        let (a, b) = (g_at(200), g_at(250));
        assert!((&a - &b).norm() <= 1e-6 * a.norm());
    }

    #[test]
    fn w2_var_matches_closed_form_and_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = rand_mat(&mut rng, 12, 3);
        let target = GaussianParams::standard(3);
        let plain = w2_gaussian_squared(
            &estimate_moments(&PointCloud::new(z.clone()).unwrap()).unwrap(),
            &target,
        )
        .unwrap();
        fn f<'t>(_: &'t Tape, p: &[Var<'t>]) -> Result<Var<'t>> {
            let (m, c) = moments_var(p[0])?;
            w2_gaussian_squared_var(m, c, &GaussianParams::standard(3))
        }
        let (v, _) = grad(std::slice::from_ref(&z), f).unwrap();
        assert!((v - plain).abs() <= 1e-12);
        let rep = finite_difference_check(&[z], f, 1e-5).unwrap();
        assert!(rep.max_rel_error <= 1e-5, "{}", rep.max_rel_error);
    }

    #[test]
    fn moments_var_rejects_single_point() {
        let tape = Tape::new();
        assert!(moments_var(tape.leaf(Matrix::zeros(1, 2))).is_err());
    }
}
