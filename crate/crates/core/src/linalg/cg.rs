use super::{dot, norm2, SolveError, SparseSym};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// ‖Ax − b‖₂ / ‖b‖₂, recomputed from the returned iterate.
    pub final_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target for CG.
    pub tol: f64,
    pub maxiter: usize,
    /// Allowed |Σ b| / ‖b‖₁ for semidefinite solves.
    pub compat_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            maxiter: 20_000,
            compat_tol: 1e-8,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

fn jacobi(a: &SparseSym) -> Result<Vec<f64>, SolveError> {
    a.diagonal()
        .into_iter()
        .enumerate()
        .map(|(index, value)| {
            if value > 0.0 && value.is_finite() {
                Ok(1.0 / value)
            } else {
                Err(SolveError::PreconditionerError { index, value })
            }
        })
        .collect()
}

/// Preconditioned CG core. `project` is applied to every iterate; it must not
/// change `A x` (used to pin down the kernel component).
fn pcg(
    a: &SparseSym,
    b: &[f64],
    opts: &SolverOptions,
    project: impl Fn(&mut [f64]),
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    let n = a.dim();
    if b.len() != n {
        return Err(SolveError::DimensionMismatch { expected: n, got: b.len() });
    }
    let inv_diag = jacobi(a)?;
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                final_residual: 0.0,
                converged: true,
            },
        ));
    }
    let target = opts.tol * bnorm;
    let mut r = b.to_vec();
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let mut prev_res = f64::INFINITY;
    // Outer loop restarts from the true residual when the recursive one has drifted.
    loop {
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while norm2(&r) > target && iterations < opts.maxiter {
            a.matvec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 || !pap.is_finite() {
                break;
            }
            let step = rz / pap;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            project(&mut x);
            iterations += 1;
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        let ax = a.matvec(&x);
        let true_r: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
        let res = norm2(&true_r);
        let report = SolveReport {
            iterations,
            final_residual: res / bnorm,
            converged: res <= target,
        };
        if report.converged {
            return Ok((x, report));
        }
        // A restart that does not halve the true residual means rounding has
        // taken over.
        if iterations >= opts.maxiter || !res.is_finite() || norm2(&r) > target || res > 0.5 * prev_res {
            return Err(SolveError::SolverDiverged(report));
        }
        prev_res = res;
        r = true_r;
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn cg_solve(
    a: &SparseSym,
    b: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    pcg(a, b, opts, |_| {})
}

/// Solves `A x = b` for symmetric `A` whose kernel is the constants, returning
/// the solution with `Σ wᵢ xᵢ = 0`.
///
/// `b` must integrate to zero up to `opts.compat_tol`; the remaining
/// incompatible part is removed along `weights` before iterating.
pub fn cg_solve_zero_mean(
    a: &SparseSym,
    b: &[f64],
    weights: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    let n = a.dim();
    if b.len() != n || weights.len() != n {
        return Err(SolveError::DimensionMismatch {
            expected: n,
            got: b.len().min(weights.len()),
        });
    }
    let l1: f64 = b.iter().map(|v| v.abs()).sum();
    let sum: f64 = b.iter().sum();
    if l1 > 0.0 && sum.abs() / l1 > opts.compat_tol {
        return Err(SolveError::IncompatibleSource { ratio: sum.abs() / l1 });
    }
    let wsum: f64 = weights.iter().sum();
    let b: Vec<f64> = b.iter().zip(weights).map(|(bi, wi)| bi - sum * wi / wsum).collect();
    let project = |x: &mut [f64]| {
        let mean = dot(x, weights) / wsum;
        x.iter_mut().for_each(|xi| *xi -= mean);
    };
    let (mut x, report) = pcg(a, &b, opts, project)?;
    project(&mut x);
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::TripletBuilder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opts(tol: f64) -> SolverOptions {
        SolverOptions::default().with_tol(tol)
    }

    #[test]
    fn identity_in_one_iteration() {
        let a = SparseSym::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        let (x, rep) = cg_solve(&a, &b, &opts(1e-12)).unwrap();
        assert_eq!(x, b.to_vec());
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
    }

    #[test]
    fn two_by_two() {
        // inverse of [[4,1],[1,3]] is [[3,-1],[-1,4]]/11
        let a = SparseSym::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let (x, _) = cg_solve(&a, &[1.0, 2.0], &opts(1e-14)).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn zero_rhs() {
        let a = SparseSym::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let (x, rep) = cg_solve(&a, &[0.0, 0.0], &opts(1e-12)).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn zero_diagonal_rejected() {
        let a = SparseSym::from_dense(&[vec![0.0, 1.0], vec![1.0, 3.0]]);
        assert!(matches!(
            cg_solve(&a, &[1.0, 1.0], &opts(1e-12)),
            Err(SolveError::PreconditionerError { index: 0, .. })
        ));
    }

    #[test]
    fn maxiter_exhaustion_reports() {
        let a = SparseSym::from_dense(&[
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ]);
        let o = SolverOptions { maxiter: 1, ..opts(1e-14) };
        match cg_solve(&a, &[1.0, 2.0, 3.0], &o) {
            Err(SolveError::SolverDiverged(rep)) => assert!(!rep.converged),
            other => panic!("{other:?}"),
        }
    }

    fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> SparseSym {
        let m: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut b = TripletBuilder::new(d);
        for i in 0..d {
            for j in 0..d {
                let v: f64 = (0..d).map(|k| m[k][i] * m[k][j]).sum();
                b.add(i, j, v + if i == j { 0.5 } else { 0.0 });
            }
        }
        b.build()
    }

    #[test]
    fn random_spd_converges_within_dimension_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [3, 8, 20] {
            let a = random_spd(d, &mut rng);
            let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, rep) = cg_solve(&a, &b, &opts(1e-12)).unwrap();
            assert!(rep.iterations <= 2 * d, "d={d}: {rep:?}");
            assert!(rep.final_residual <= 1e-12);
        }
    }

    fn periodic_laplacian(lens: &[f64]) -> SparseSym {
        let n = lens.len();
        let mut b = TripletBuilder::new(n);
        for (j, &len) in lens.iter().enumerate() {
            let k = (j + 1) % n;
            b.add(j, j, 1.0 / len);
            b.add(k, k, 1.0 / len);
            b.add_sym(j, k, -1.0 / len);
        }
        b.build()
    }

    #[test]
    fn zero_mean_periodic_against_pseudoinverse() {
        let a = periodic_laplacian(&[1.0; 4]);
        let mass = [1.0; 4];
        let b = [1.0, -1.0, 1.0, -1.0];
        let (x, _) = cg_solve_zero_mean(&a, &b, &mass, &opts(1e-14)).unwrap();
        // The alternating vector is an eigenvector of the 4-cycle Laplacian
        // with eigenvalue 4, so the pseudoinverse maps b to b/4.
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi / 4.0).abs() < 1e-14);
        }
        let ax = a.matvec(&x);
        assert!(ax.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-13));
    }

    #[test]
    fn zero_mean_rejects_constant_source() {
        let a = periodic_laplacian(&[1.0; 4]);
        let r = cg_solve_zero_mean(&a, &[2.0; 4], &[1.0; 4], &opts(1e-12));
        assert!(matches!(r, Err(SolveError::IncompatibleSource { .. })));
        let (x, _) = cg_solve_zero_mean(&a, &[0.0; 4], &[1.0; 4], &opts(1e-12)).unwrap();
        assert_eq!(x, vec![0.0; 4]);
    }

    proptest::proptest! {
        #[test]
        fn zero_mean_output_has_zero_weighted_mean(
            lens in proptest::collection::vec(0.1f64..2.0, 3..12),
            seed in 0u64..1000,
        ) {
            let n = lens.len();
            let a = periodic_laplacian(&lens);
            let w: Vec<f64> = (0..n).map(|j| 0.5 * (lens[j] + lens[(j + n - 1) % n])).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s: f64 = b.iter().sum::<f64>() / n as f64;
            b.iter_mut().for_each(|v| *v -= s);
            let (x, _) = cg_solve_zero_mean(&a, &b, &w, &opts(1e-12)).unwrap();
            let mean: f64 = x.iter().zip(&w).map(|(p, q)| p * q).sum();
            proptest::prop_assert!(mean.abs() <= 1e-12 * norm2(&x).max(1e-300));
        }
    }
}
