use crate::metric::{column_dots, LinearOperator};
use crate::{Error, Real, Result, Tensor};

/// Curvature at or below this value along a search direction stops that column.
const BREAKDOWN_CURVATURE: Real = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub max_iters: usize,
    /// Stop once `‖r‖₂ ≤ tol · max(1, ‖b‖₂)`.
    pub tol: Real,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            max_iters: 2,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    /// Iterate with the smallest residual norm seen.
    pub x: Tensor,
    pub residual_norm: Real,
    pub iters: usize,
    /// Set when some column hit a direction of (numerically) zero curvature.
    pub breakdown: bool,
}

/// Preconditioned conjugate gradient for `A x = b`, starting at `x0`.
///
/// Tensors are treated as `rows × cols`; each column is an independent system
/// sharing `A` and `P`, with its own step and conjugation coefficients. All
/// columns advance together so each iteration costs one application of `A`
/// and one of `P`.
pub fn pcg_solve(
    a: &dyn LinearOperator,
    b: &Tensor,
    p: &dyn LinearOperator,
    x0: &Tensor,
    opts: CgOptions,
) -> Result<CgOutcome> {
    if b.shape() != x0.shape() {
        return Err(Error::dimension(format!(
            "cg right-hand side {:?} with start {:?}",
            b.shape(),
            x0.shape()
        )));
    }
    let cols = b.cols();
    let threshold = opts.tol * b.norm().max(1.0);

    let mut x = x0.clone();
    let mut r = if x0.data().iter().all(|&v| v == 0.0) {
        b.clone()
    } else {
        b.sub(&a.apply(&x)?)?
    };
    let mut r_norm = r.norm();
    let mut best = (x.clone(), r_norm);
    let mut iters = 0;
    let mut breakdown = false;
    if r_norm <= threshold || opts.max_iters == 0 {
        return Ok(CgOutcome {
            x,
            residual_norm: r_norm,
            iters,
            breakdown,
        });
    }

    let mut z = p.apply(&r)?;
    let mut dir = z.clone();
    let mut rz = column_dots(&r, &z);
    let mut active = vec![true; cols];

    while iters < opts.max_iters && r_norm > threshold {
        let q = a.apply(&dir)?;
        let curvature = column_dots(&dir, &q);
        let mut alpha = vec![0.0; cols];
        for j in 0..cols {
            if !active[j] {
                continue;
            }
            if rz[j] == 0.0 {
                active[j] = false;
            } else if curvature[j] <= BREAKDOWN_CURVATURE {
                breakdown = true;
                active[j] = false;
            } else {
                alpha[j] = rz[j] / curvature[j];
            }
        }
        if !active.iter().any(|&a| a) {
            break;
        }
        for (k, (xv, dv)) in x.data_mut().iter_mut().zip(dir.data()).enumerate() {
            *xv += alpha[k % cols] * dv;
        }
        for (k, (rv, qv)) in r.data_mut().iter_mut().zip(q.data()).enumerate() {
            *rv -= alpha[k % cols] * qv;
        }
        iters += 1;
        if !x.is_finite() || !r.is_finite() {
            return Err(Error::numeric(format!(
                "conjugate gradient produced a non-finite iterate at iteration {iters}"
            )));
        }
        r_norm = r.norm();
        if r_norm < best.1 {
            best = (x.clone(), r_norm);
        }
        if iters == opts.max_iters || r_norm <= threshold {
            break;
        }
        z = p.apply(&r)?;
        let rz_next = column_dots(&r, &z);
        for (k, (dv, zv)) in dir.data_mut().iter_mut().zip(z.data()).enumerate() {
            let j = k % cols;
            let beta = if active[j] && rz[j] != 0.0 {
                rz_next[j] / rz[j]
            } else {
                0.0
            };
            *dv = zv + beta * *dv;
        }
        rz = rz_next;
    }

    Ok(CgOutcome {
        x: best.0,
        residual_norm: best.1,
        iters,
        breakdown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{DenseOperator, Preconditioner};
    use crate::rng;
    use crate::tensor::matmul_tn;

    fn spd_2x2() -> DenseOperator {
        DenseOperator::new(Tensor::from_rows(&[[4.0, 1.0], [1.0, 3.0]]).unwrap())
    }

    #[test]
    fn two_by_two_is_exact_in_two_steps() {
        let b = Tensor::vector(vec![1.0, 2.0]);
        let out = pcg_solve(
            &spd_2x2(),
            &b,
            &Preconditioner::Identity,
            &Tensor::zeros(&[2]),
            CgOptions { max_iters: 2, tol: 0.0 },
        )
        .unwrap();
        let expected = [1.0 / 11.0, 7.0 / 11.0];
        for (x, e) in out.x.data().iter().zip(expected) {
            assert!((x - e).abs() < 1e-15, "{x} vs {e}");
        }
    }

    #[test]
    fn zero_rhs_returns_immediately() {
        let out = pcg_solve(
            &spd_2x2(),
            &Tensor::zeros(&[2]),
            &Preconditioner::Identity,
            &Tensor::zeros(&[2]),
            CgOptions::default(),
        )
        .unwrap();
        assert_eq!(out.x, Tensor::zeros(&[2]));
        assert_eq!(out.iters, 0);
        assert_eq!(out.residual_norm, 0.0);
    }

    #[test]
    fn identity_system_solves_in_one_step() {
        let b = Tensor::new(vec![3, 2], vec![1.0, -2.0, 0.5, 4.0, 3.0, 0.0]).unwrap();
        let out = pcg_solve(
            &DenseOperator::new(Tensor::identity(3)),
            &b,
            &Preconditioner::Identity,
            &Tensor::zeros(&[3, 2]),
            CgOptions { max_iters: 5, tol: 1e-12 },
        )
        .unwrap();
        assert_eq!(out.iters, 1);
        assert_eq!(out.x, b);
    }

    #[test]
    fn dense_spd_solves_in_dim_iterations() {
        for seed in 0..20 {
            let mut g = rng::stream(seed, 3);
            let d = 2 + seed as usize % 8;
            let f = rng::normal(&mut g, &[d + 6, d], 1.0);
            let a = matmul_tn(&f, &f).unwrap().add(&Tensor::identity(d).scale(0.1)).unwrap();
            let b = rng::normal(&mut g, &[d, 3], 1.0);
            let out = pcg_solve(
                &DenseOperator::new(a.clone()),
                &b,
                &Preconditioner::Identity,
                &Tensor::zeros(&[d, 3]),
                CgOptions { max_iters: d, tol: 0.0 },
            )
            .unwrap();
            let resid = DenseOperator::new(a).apply(&out.x).unwrap().sub(&b).unwrap().norm();
            assert!(resid <= 1e-8 * b.norm(), "seed {seed}: {resid}");
        }
    }

    #[test]
    fn singular_direction_flags_breakdown() {
        let a = DenseOperator::new(Tensor::zeros(&[2, 2]));
        let out = pcg_solve(
            &a,
            &Tensor::vector(vec![1.0, 1.0]),
            &Preconditioner::Identity,
            &Tensor::zeros(&[2]),
            CgOptions::default(),
        )
        .unwrap();
        assert!(out.breakdown);
        assert_eq!(out.x, Tensor::zeros(&[2]));
    }

    #[test]
    fn non_finite_iterate_reports_iteration() {
        // The first step is b / tiny, which overflows.
        let tiny = Real::MIN_POSITIVE;
        let big = 0.5 * Real::MAX.sqrt();
        let a = DenseOperator::new(Tensor::from_rows(&[[tiny, 0.0], [0.0, 1.0]]).unwrap());
        let err = pcg_solve(
            &a,
            &Tensor::vector(vec![big, 0.0]),
            &Preconditioner::Identity,
            &Tensor::zeros(&[2]),
            CgOptions::default(),
        );
        match err {
            Err(Error::Numeric(msg)) => assert!(msg.contains("iteration 1"), "{msg}"),
            other => panic!("expected a numeric error, got {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch() {
        assert!(pcg_solve(
            &spd_2x2(),
            &Tensor::zeros(&[2]),
            &Preconditioner::Identity,
            &Tensor::zeros(&[3]),
            CgOptions::default()
        )
        .is_err());
    }
}
