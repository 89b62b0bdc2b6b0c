use crate::autodiff::{NeuronId, NeuronKind};
use crate::tensor::{matmul, matmul_tn};
use crate::{Error, Result, Tensor};

/// What the tape keeps about one trainable neuron after a forward pass.
#[derive(Clone, Debug)]
pub struct NeuronRecord {
    pub id: NeuronId,
    pub kind: NeuronKind,
    /// `X_i`: the `n × d_in` matrix the neuron consumed (without the bias column).
    pub inputs: Tensor,
    /// Number of samples contributing to the gradient.
    pub n: usize,
    pub out_dim: usize,
    /// `g_i`, populated by backward.
    pub grad: Option<Tensor>,
}

impl NeuronRecord {
    pub fn in_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn param_shape(&self) -> Vec<usize> {
        match self.kind {
            NeuronKind::DenseWithBias => vec![self.in_dim() + 1, self.out_dim],
            NeuronKind::DenseNoBias => vec![self.in_dim(), self.out_dim],
            NeuronKind::IdentityMetric => vec![self.out_dim],
        }
    }

    pub fn jvp(&self, v: &Tensor) -> Result<Tensor> {
        neuron_jvp(self, v)
    }

    pub fn vjp(&self, u: &Tensor) -> Result<Tensor> {
        neuron_vjp(self, u)
    }
}

/// `X̃·θ` where `X̃ = [X, 1]` when `bias` is set. Shared by the forward pass and
/// the JVP so both multiply exactly the same way.
pub(crate) fn dense_apply(x: &Tensor, theta: &Tensor, bias: bool) -> Result<Tensor> {
    let d_in = x.cols();
    let expected_rows = d_in + usize::from(bias);
    if theta.ndim() != 2 || theta.shape()[0] != expected_rows {
        return Err(Error::dimension(format!(
            "dense map on inputs {:?} with parameters {:?}",
            x.shape(),
            theta.shape()
        )));
    }
    if !bias {
        return matmul(x, theta);
    }
    let weights = theta.slice_rows(0, d_in);
    let mut out = matmul(x, &weights)?;
    let b = theta.row(d_in).to_vec();
    for i in 0..out.rows() {
        for (o, bj) in out.row_mut(i).iter_mut().zip(&b) {
            *o += bj;
        }
    }
    Ok(out)
}

/// `X̃ᵀ·u`: the parameter-space pullback of output cotangents `u`.
pub(crate) fn dense_pullback(x: &Tensor, u: &Tensor, bias: bool) -> Result<Tensor> {
    if u.ndim() != 2 || u.rows() != x.rows() {
        return Err(Error::dimension(format!(
            "dense pullback of cotangents {:?} through inputs {:?}",
            u.shape(),
            x.shape()
        )));
    }
    let g = matmul_tn(x, u)?;
    if !bias {
        return Ok(g);
    }
    let (d_in, d_out) = (x.cols(), u.cols());
    let mut data = g.into_data();
    data.extend_from_slice(u.sum_rows().data());
    Tensor::new(vec![d_in + 1, d_out], data)
}

fn unsupported(record: &NeuronRecord, what: &str) -> Error {
    Error::Unsupported(format!(
        "{what} of identity-metric neuron {}; its solve is skipped",
        record.id.0
    ))
}

/// Output perturbation `(∂f_X/∂θ)·v`, an `n × d_out` matrix.
pub fn neuron_jvp(record: &NeuronRecord, v: &Tensor) -> Result<Tensor> {
    if record.kind == NeuronKind::IdentityMetric {
        return Err(unsupported(record, "jvp"));
    }
    if v.shape() != record.param_shape().as_slice() {
        return Err(Error::dimension(format!(
            "jvp direction {:?} for parameters {:?}",
            v.shape(),
            record.param_shape()
        )));
    }
    dense_apply(&record.inputs, v, record.kind.has_bias())
}

/// Parameter-space cotangent `(∂f_X/∂θ)ᵀ·u`.
pub fn neuron_vjp(record: &NeuronRecord, u: &Tensor) -> Result<Tensor> {
    if record.kind == NeuronKind::IdentityMetric {
        return Err(unsupported(record, "vjp"));
    }
    if u.shape() != [record.n, record.out_dim] {
        return Err(Error::dimension(format!(
            "vjp cotangent {:?} for outputs [{}, {}]",
            u.shape(),
            record.n,
            record.out_dim
        )));
    }
    dense_pullback(&record.inputs, u, record.kind.has_bias())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::Real;

    fn record(kind: NeuronKind, inputs: Tensor, out_dim: usize) -> NeuronRecord {
        NeuronRecord {
            id: NeuronId(0),
            kind,
            n: inputs.rows(),
            inputs,
            out_dim,
            grad: None,
        }
    }

    #[test]
    fn jvp_examples() {
        let r = record(NeuronKind::DenseNoBias, Tensor::identity(2), 1);
        let v = Tensor::new(vec![2, 1], vec![2.0, 4.0]).unwrap();
        assert_eq!(neuron_jvp(&r, &v).unwrap().data(), &[2.0, 4.0]);
        assert_eq!(
            neuron_jvp(&r, &Tensor::zeros(&[2, 1])).unwrap(),
            Tensor::zeros(&[2, 1])
        );

        let rb = record(
            NeuronKind::DenseWithBias,
            Tensor::new(vec![1, 1], vec![1.0]).unwrap(),
            1,
        );
        let v = Tensor::new(vec![2, 1], vec![3.0, 5.0]).unwrap();
        assert_eq!(neuron_jvp(&rb, &v).unwrap().data(), &[8.0]);
    }

    #[test]
    fn vjp_examples() {
        let r = record(
            NeuronKind::DenseNoBias,
            Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap(),
            1,
        );
        let u = Tensor::new(vec![1, 1], vec![3.0]).unwrap();
        assert_eq!(neuron_vjp(&r, &u).unwrap().data(), &[3.0, 6.0]);
        assert_eq!(
            neuron_vjp(&r, &Tensor::zeros(&[1, 1])).unwrap(),
            Tensor::zeros(&[2, 1])
        );
    }

    #[test]
    fn identity_metric_is_unsupported() {
        let r = record(NeuronKind::IdentityMetric, Tensor::zeros(&[3, 2]), 2);
        assert!(matches!(
            neuron_jvp(&r, &Tensor::zeros(&[2])),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            neuron_vjp(&r, &Tensor::zeros(&[3, 2])),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn jvp_and_vjp_are_adjoint() {
        for seed in 0..20 {
            let mut g = rng::stream(seed, 0);
            let bias = seed % 2 == 0;
            let kind = if bias {
                NeuronKind::DenseWithBias
            } else {
                NeuronKind::DenseNoBias
            };
            let (n, d, k) = (3 + seed as usize % 5, 2 + seed as usize % 4, 1 + seed as usize % 3);
            let r = record(kind, rng::normal(&mut g, &[n, d], 1.0), k);
            let v = rng::normal(&mut g, &r.param_shape(), 1.0);
            let u = rng::normal(&mut g, &[n, k], 1.0);
            let lhs = neuron_jvp(&r, &v).unwrap().dot(&u).unwrap();
            let rhs = v.dot(&neuron_vjp(&r, &u).unwrap()).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0 as Real), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn shape_errors() {
        let r = record(NeuronKind::DenseNoBias, Tensor::zeros(&[2, 3]), 1);
        assert!(neuron_jvp(&r, &Tensor::zeros(&[2, 1])).is_err());
        assert!(neuron_vjp(&r, &Tensor::zeros(&[3, 1])).is_err());
    }
}
