use nalgebra::DMatrix;

use crate::tensor::{matmul, matmul_nt};
use crate::{rng, Error, Real, Result, Tensor};

/// An ill-conditioned linear regression problem `y = A x`.
#[derive(Debug, Clone)]
pub struct MatfacProblem {
    /// `n × d_in` inputs with correlated columns.
    pub x: Tensor,
    /// `n × d_out` targets `X Aᵀ`.
    pub y: Tensor,
    /// `d_out × d_in` ground-truth map.
    pub a: Tensor,
    /// `d_in × d_in` column-mixing matrix with entries `corr^|j−k|`.
    pub mixing: Tensor,
}

/// Random `rows × cols` matrix with orthonormal columns (thin QR of a Gaussian).
fn orthonormal_columns(g: &mut rng::Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let gauss = rng::normal(g, &[rows, cols], 1.0);
    let m = DMatrix::from_row_iterator(rows, cols, gauss.data().iter().map(|&v| v as f64));
    let qr = m.qr();
    let (q, r) = (qr.q(), qr.r());
    // Fix column signs so the factor is a deterministic function of the draw.
    let mut q = q;
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Toeplitz mixing matrix `C[j][k] = corr^|j−k|`.
pub fn correlation_mixing(d: usize, corr: Real) -> Tensor {
    let mut c = Tensor::zeros(&[d, d]);
    for j in 0..d {
        for k in 0..d {
            c.set(j, k, corr.powi(j.abs_diff(k) as i32));
        }
    }
    c
}

/// `n` Gaussian rows mixed by `mixing`, drawn from `g`.
pub fn correlated_inputs(g: &mut rng::Rng, n: usize, mixing: &Tensor) -> Result<Tensor> {
    matmul(&rng::normal(g, &[n, mixing.rows()], 1.0), mixing)
}

/// Synthetic problem for the two-layer linear network.
///
/// `A = U diag(s) Vᵀ` has rank `r = min(d_in, d_hidden, d_out)` (so the network
/// can represent it exactly) with singular values log-uniformly spaced from 1
/// down to `1/kappa`. `U`, `V` come from the QR of Gaussian matrices.
pub fn gen_matfac(
    n: usize,
    d_in: usize,
    d_hidden: usize,
    d_out: usize,
    kappa: Real,
    corr: Real,
    seed: u64,
) -> Result<MatfacProblem> {
    if !(kappa >= 1.0) {
        return Err(Error::config(format!("condition number must be at least 1, got {kappa}")));
    }
    if n == 0 || d_in == 0 || d_hidden == 0 || d_out == 0 {
        return Err(Error::config("matrix factorization sizes must be positive"));
    }
    if !(corr.abs() < 1.0) {
        return Err(Error::config(format!("column correlation must lie in (-1, 1), got {corr}")));
    }
    let r = d_in.min(d_hidden).min(d_out);
    let mut g = rng::stream(seed, 10);
    let u = orthonormal_columns(&mut g, d_out, r);
    let v = orthonormal_columns(&mut g, d_in, r);
    let s = singular_values(r, kappa);
    let a = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s)) * v.transpose();
    let a = Tensor::new(
        vec![d_out, d_in],
        (0..d_out)
            .flat_map(|i| (0..d_in).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] as Real)
            .collect(),
    )?;

    let mixing = correlation_mixing(d_in, corr);
    let x = correlated_inputs(&mut rng::stream(seed, 11), n, &mixing)?;
    let y = matmul_nt(&x, &a)?;
    Ok(MatfacProblem { x, y, a, mixing })
}

/// `r` values from 1 down to `1/kappa`, evenly spaced in log scale.
pub fn singular_values(r: usize, kappa: Real) -> Vec<f64> {
    if r == 1 {
        return vec![1.0];
    }
    let log_k = (kappa as f64).ln();
    (0..r)
        .map(|i| (-log_k * i as f64 / (r - 1) as f64).exp())
        .collect()
}

impl MatfacProblem {
    /// Fresh samples from the same distribution, e.g. a held-out split.
    pub fn resample(&self, n: usize, seed: u64, stream: u64) -> Result<(Tensor, Tensor)> {
        let x = correlated_inputs(&mut rng::stream(seed, stream), n, &self.mixing)?;
        let y = matmul_nt(&x, &self.a)?;
        Ok((x, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn svd(t: &Tensor) -> Vec<f64> {
        let m = DMatrix::from_iterator(t.cols(), t.rows(), t.data().iter().map(|&v| v as f64)).transpose();
        let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    #[test]
    fn unit_condition_gives_orthogonal_map() {
        let p = gen_matfac(10, 4, 4, 6, 1.0, 0.5, 0).unwrap();
        for s in svd(&p.a) {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn requested_condition_number_is_met() {
        for seed in 0..5 {
            let p = gen_matfac(20, 6, 6, 10, 1e5, 0.5, seed).unwrap();
            let s = svd(&p.a);
            let ratio = s[0] / s[5];
            assert!((ratio / 1e5 - 1.0).abs() < 0.01, "{ratio}");
        }
    }

    #[test]
    fn targets_follow_from_inputs() {
        let p = gen_matfac(50, 6, 6, 10, 1e3, 0.5, 3).unwrap();
        let y = matmul(&p.x, &p.a.transpose().unwrap()).unwrap();
        assert!(y.sub(&p.y).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn columns_are_correlated() {
        let p = gen_matfac(20000, 3, 3, 3, 10.0, 0.5, 1).unwrap();
        let n = p.x.rows() as Real;
        let cov = |j: usize, k: usize| (0..p.x.rows()).map(|i| p.x.get(i, j) * p.x.get(i, k)).sum::<Real>() / n;
        // (C Cᵀ)[0][1] = 0.5 + 0.5 + 0.125 for the 3×3 Toeplitz mixer.
        assert!((cov(0, 1) - 1.125).abs() < 0.05, "{}", cov(0, 1));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = gen_matfac(5, 2, 2, 3, 100.0, 0.5, 9).unwrap();
        let b = gen_matfac(5, 2, 2, 3, 100.0, 0.5, 9).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.a, b.a);
    }

    #[test]
    fn rejects_bad_condition() {
        assert!(gen_matfac(5, 2, 2, 3, 0.5, 0.5, 0).is_err());
        assert!(gen_matfac(5, 2, 2, 3, Real::NAN, 0.5, 0).is_err());
    }
}
