use crate::autodiff::NeuronKind;
use crate::metric::{LinearOperator, MomentState};
use crate::tensor::matmul;
use crate::{Error, Real, Result, Tensor};

/// Floor applied to second moments and variances before taking reciprocals.
pub const DEFAULT_VAR_FLOOR: Real = 1e-8;

/// Approximate inverse metric used to precondition CG.
#[derive(Debug, Clone, PartialEq)]
pub enum Preconditioner {
    Identity,
    /// `diag(χ)⁻¹` applied to every output column of a bias-free neuron.
    Diagonal { inv_diag: Tensor },
    /// `W̃W̃ᵀ` with `W̃ = [[S, 0], [−μᵀS, 1]]`, `S = diag(inv_sqrt_var)`,
    /// applied to every `(weights, bias)` column of a with-bias neuron.
    Whitener { inv_sqrt_var: Tensor, mean: Tensor },
    /// An explicit SPD matrix, used with exact whiteners in tests.
    Dense(Tensor),
}

/// Builds the preconditioner for a neuron of `kind` from its moment estimates.
pub fn build_preconditioner(state: &MomentState, kind: NeuronKind, floor: Real) -> Result<Preconditioner> {
    if !state.initialized {
        return Err(Error::State(
            "preconditioner requested before any moment update".into(),
        ));
    }
    match kind {
        NeuronKind::DenseNoBias => Ok(Preconditioner::Diagonal {
            inv_diag: state.second.map(|c| 1.0 / c.max(floor)),
        }),
        NeuronKind::DenseWithBias => Ok(Preconditioner::Whitener {
            inv_sqrt_var: state.variance().map(|v| 1.0 / v.max(floor).sqrt()),
            mean: state.mean.clone(),
        }),
        NeuronKind::IdentityMetric => Ok(Preconditioner::Identity),
    }
}

impl Preconditioner {
    pub fn apply(&self, r: &Tensor) -> Result<Tensor> {
        match self {
            Preconditioner::Identity => Ok(r.clone()),
            Preconditioner::Diagonal { inv_diag } => {
                let d = inv_diag.len();
                if r.rows() != d || r.ndim() > 2 {
                    return Err(Error::dimension(format!(
                        "diagonal preconditioner of size {d} applied to {:?}",
                        r.shape()
                    )));
                }
                let mut out = r.clone();
                for (i, s) in inv_diag.data().iter().enumerate() {
                    out.row_mut(i).iter_mut().for_each(|v| *v *= s);
                }
                Ok(out)
            }
            Preconditioner::Whitener { inv_sqrt_var, mean } => {
                let d = inv_sqrt_var.len();
                if r.ndim() != 2 || r.rows() != d + 1 {
                    return Err(Error::dimension(format!(
                        "whitener for {d} features applied to {:?}",
                        r.shape()
                    )));
                }
                let c = r.cols();
                let bias = r.row(d).to_vec();
                let mut out = r.clone();
                let mut coupling = vec![0.0; c];
                for i in 0..d {
                    let (s, m) = (inv_sqrt_var.data()[i], mean.data()[i]);
                    for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                        // W̃ᵀ then W̃ on the weight coordinate.
                        let half = s * (*v - m * bias[j]);
                        coupling[j] += m * s * half;
                        *v = s * half;
                    }
                }
                for (v, acc) in out.row_mut(d).iter_mut().zip(&coupling) {
                    *v -= acc;
                }
                Ok(out)
            }
            Preconditioner::Dense(m) => {
                let cols = r.cols();
                let as_matrix = r.clone().reshape(&[r.len() / cols, cols])?;
                if as_matrix.rows() != m.rows() {
                    return Err(Error::dimension(format!(
                        "{:?} preconditioner applied to {:?}",
                        m.shape(),
                        r.shape()
                    )));
                }
                matmul(m, &as_matrix)?.reshape(r.shape())
            }
        }
    }
}

impl LinearOperator for Preconditioner {
    fn apply(&self, v: &Tensor) -> Result<Tensor> {
        Preconditioner::apply(self, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn state(mean: Vec<Real>, second: Vec<Real>) -> MomentState {
        MomentState {
            mean: Tensor::vector(mean),
            second: Tensor::vector(second),
            decay: 0.0,
            initialized: true,
        }
    }

    #[test]
    fn diagonal_reciprocal() {
        let p = build_preconditioner(&state(vec![0.0], vec![4.0]), NeuronKind::DenseNoBias, DEFAULT_VAR_FLOOR).unwrap();
        assert_eq!(
            p,
            Preconditioner::Diagonal {
                inv_diag: Tensor::vector(vec![0.25])
            }
        );
        let r = Tensor::new(vec![1, 1], vec![8.0]).unwrap();
        assert_eq!(p.apply(&r).unwrap().data(), &[2.0]);
    }

    #[test]
    fn white_features_give_identity() {
        let p = build_preconditioner(&state(vec![0.0, 0.0], vec![1.0, 1.0]), NeuronKind::DenseWithBias, DEFAULT_VAR_FLOOR).unwrap();
        let r = rng::normal(&mut rng::stream(0, 0), &[3, 2], 1.0);
        assert_eq!(p.apply(&r).unwrap(), r);
    }

    #[test]
    fn constant_feature_is_floored() {
        let p = build_preconditioner(&state(vec![2.0], vec![4.0]), NeuronKind::DenseWithBias, DEFAULT_VAR_FLOOR).unwrap();
        let Preconditioner::Whitener { inv_sqrt_var, .. } = &p else { panic!() };
        assert_eq!(inv_sqrt_var.data(), &[1.0 / DEFAULT_VAR_FLOOR.sqrt()]);
        let out = p.apply(&Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap()).unwrap();
        assert!(out.is_finite());
    }

    #[test]
    fn one_feature_whitener_matches_hand_product() {
        // m = 1, s = 2: W = [[0.5, 0], [-0.5, 1]], W Wᵀ = [[0.25, -0.25], [-0.25, 1.25]].
        let p = Preconditioner::Whitener {
            inv_sqrt_var: Tensor::vector(vec![0.5]),
            mean: Tensor::vector(vec![1.0]),
        };
        let e_w = p.apply(&Tensor::new(vec![2, 1], vec![1.0, 0.0]).unwrap()).unwrap();
        let e_b = p.apply(&Tensor::new(vec![2, 1], vec![0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(e_w.data(), &[0.25, -0.25]);
        assert_eq!(e_b.data(), &[-0.25, 1.25]);
    }

    #[test]
    fn uninitialized_state_is_rejected() {
        assert!(matches!(
            build_preconditioner(&MomentState::new(2, 0.9), NeuronKind::DenseNoBias, DEFAULT_VAR_FLOOR),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = Preconditioner::Diagonal {
            inv_diag: Tensor::vector(vec![1.0, 1.0]),
        };
        assert!(p.apply(&Tensor::zeros(&[3, 1])).is_err());
    }

    #[test]
    fn whitener_is_symmetric_positive_definite() {
        for seed in 0..25 {
            let mut g = rng::stream(seed, 1);
            let d = 1 + seed as usize % 6;
            let mean = rng::normal(&mut g, &[d], 2.0);
            let var = rng::uniform(&mut g, &[d], 0.05, 3.0);
            let second = mean.hadamard(&mean).unwrap().add(&var).unwrap();
            let st = MomentState {
                mean,
                second,
                decay: 0.0,
                initialized: true,
            };
            for kind in [NeuronKind::DenseWithBias, NeuronKind::DenseNoBias] {
                let p = build_preconditioner(&st, kind, DEFAULT_VAR_FLOOR).unwrap();
                let rows = d + usize::from(kind.has_bias());
                let u = rng::normal(&mut g, &[rows, 2], 1.0);
                let v = rng::normal(&mut g, &[rows, 2], 1.0);
                let a = u.dot(&p.apply(&v).unwrap()).unwrap();
                let b = v.dot(&p.apply(&u).unwrap()).unwrap();
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
                assert!(v.dot(&p.apply(&v).unwrap()).unwrap() > 0.0);
            }
        }
    }
}
