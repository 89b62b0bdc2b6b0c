use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Real, Result, Tensor};

/// Exact block factor `W` with `M⁻¹ = W Wᵀ` for the with-bias metric
/// `M = [[Σ + μμᵀ, μ], [μᵀ, 1]]`:
///
/// ```text
/// W = [[ Σ^{-1/2},       0 ],
///      [ -μᵀ Σ^{-1/2},   1 ]]
/// ```
///
/// `Σ^{-1/2}` comes from a dense symmetric eigendecomposition. Intended for
/// tests and diagnostics; training never materializes it.
pub fn analytic_whitener(mean: &Tensor, cov: &Tensor) -> Result<Tensor> {
    let d = mean.len();
    if cov.shape() != [d, d] {
        return Err(Error::dimension(format!(
            "covariance {:?} for a mean of length {d}",
            cov.shape()
        )));
    }
    let sigma = DMatrix::from_row_slice(d, d, cov.data());
    let asym = (&sigma - sigma.transpose()).amax();
    if asym > 1e-10 * sigma.amax().max(1.0) {
        return Err(Error::numeric(format!(
            "covariance is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let eig = SymmetricEigen::new(sigma);
    let min = eig.eigenvalues.min();
    if min <= 1e-10 {
        return Err(Error::numeric(format!(
            "covariance is not positive definite (smallest eigenvalue {min:e})"
        )));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let s = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();

    let mut w = Tensor::zeros(&[d + 1, d + 1]);
    for i in 0..d {
        for j in 0..d {
            w.set(i, j, s[(i, j)]);
        }
    }
    for j in 0..d {
        let v: Real = (0..d).map(|k| -mean.data()[k] * s[(k, j)]).sum();
        w.set(d, j, v);
    }
    w.set(d, d, 1.0);
    Ok(w)
}

/// Dense `[[Σ + μμᵀ, μ], [μᵀ, 1]]`.
pub fn block_metric(mean: &Tensor, cov: &Tensor) -> Tensor {
    let d = mean.len();
    let mu = mean.data();
    let mut m = Tensor::zeros(&[d + 1, d + 1]);
    for i in 0..d {
        for j in 0..d {
            m.set(i, j, cov.get(i, j) + mu[i] * mu[j]);
        }
        m.set(i, d, mu[i]);
        m.set(d, i, mu[i]);
    }
    m.set(d, d, 1.0);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tensor::{matmul, matmul_nt, matmul_tn};

    #[test]
    fn standard_features_give_identity() {
        let w = analytic_whitener(&Tensor::zeros(&[3]), &Tensor::identity(3)).unwrap();
        assert!(w.sub(&Tensor::identity(4)).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn scalar_block_formula() {
        let w = analytic_whitener(&Tensor::vector(vec![1.0]), &Tensor::from_rows(&[[4.0]]).unwrap()).unwrap();
        let expected = Tensor::from_rows(&[[0.5, 0.0], [-0.5, 1.0]]).unwrap();
        assert!(w.sub(&expected).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn rejects_singular_covariance() {
        let cov = Tensor::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            analytic_whitener(&Tensor::zeros(&[2]), &cov),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn whitener_inverts_block_metric() {
        let mut g = rng::stream(11, 0);
        let (n, d) = (40, 5);
        let x = rng::normal(&mut g, &[n, d], 1.5).add(&Tensor::filled(&[n, d], 0.7)).unwrap();
        let mean = crate::tensor::reduce_mean(&x).unwrap();
        let centered = Tensor::from_rows(
            &(0..n)
                .map(|i| x.row(i).iter().zip(mean.data()).map(|(a, b)| a - b).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let cov = matmul_tn(&centered, &centered).unwrap().scale(1.0 / n as Real);
        let w = analytic_whitener(&mean, &cov).unwrap();
        let m = block_metric(&mean, &cov);
        let prod = matmul(&matmul_nt(&w, &w).unwrap(), &m).unwrap();
        assert!(prod.sub(&Tensor::identity(d + 1)).unwrap().max_abs() < 1e-8);
    }
}
