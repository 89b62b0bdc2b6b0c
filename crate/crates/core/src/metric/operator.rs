use crate::autodiff::{neuron_jvp, neuron_vjp, NeuronKind, NeuronRecord};
use crate::tensor::matmul;
use crate::{Error, Real, Result, Tensor};

/// A linear map on parameter-shaped tensors.
pub trait LinearOperator {
    fn apply(&self, v: &Tensor) -> Result<Tensor>;
}

/// `v ↦ (1/n)·J_Xᵀ J_X v + γ·mask(v)`, the neuron's metric plus ridge.
///
/// The ridge only touches weight rows; the bias row of a with-bias neuron is
/// left unregularized.
#[derive(Debug, Clone, Copy)]
pub struct MetricOperator<'a> {
    pub record: &'a NeuronRecord,
    pub ridge: Real,
}

impl<'a> MetricOperator<'a> {
    pub fn new(record: &'a NeuronRecord, ridge: Real) -> Self {
        MetricOperator { record, ridge }
    }
}

pub fn metric_apply(m: &MetricOperator<'_>, v: &Tensor) -> Result<Tensor> {
    let record = m.record;
    if record.kind == NeuronKind::IdentityMetric {
        return Err(Error::Unsupported(format!(
            "metric of identity-metric neuron {} is never applied",
            record.id.0
        )));
    }
    let mut out = neuron_vjp(record, &neuron_jvp(record, v)?)?;
    out.scale_in_place(1.0 / record.n as Real);
    if m.ridge != 0.0 {
        let weight_values = record.in_dim() * record.out_dim;
        for (o, x) in out.data_mut()[..weight_values]
            .iter_mut()
            .zip(&v.data()[..weight_values])
        {
            *o += m.ridge * x;
        }
    }
    Ok(out)
}

impl LinearOperator for MetricOperator<'_> {
    fn apply(&self, v: &Tensor) -> Result<Tensor> {
        metric_apply(self, v)
    }
}

/// An explicit `d × d` matrix acting on `d` or `d × c` tensors.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub matrix: Tensor,
}

impl DenseOperator {
    pub fn new(matrix: Tensor) -> Self {
        DenseOperator { matrix }
    }
}

impl LinearOperator for DenseOperator {
    fn apply(&self, v: &Tensor) -> Result<Tensor> {
        let d = self.matrix.cols();
        let cols = if v.ndim() >= 2 { v.cols() } else { 1 };
        let as_matrix = v.clone().reshape(&[v.len() / cols.max(1), cols])?;
        if as_matrix.rows() != d {
            return Err(Error::dimension(format!(
                "{:?} operator applied to {:?}",
                self.matrix.shape(),
                v.shape()
            )));
        }
        matmul(&self.matrix, &as_matrix)?.reshape(v.shape())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::NeuronId;

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
    fn metric_examples() {
        let r = record(NeuronKind::DenseNoBias, Tensor::identity(2), 1);
        let m = MetricOperator::new(&r, 0.0);
        let v = Tensor::new(vec![2, 1], vec![2.0, 4.0]).unwrap();
        assert_eq!(metric_apply(&m, &v).unwrap().data(), &[1.0, 2.0]);
        assert_eq!(
            metric_apply(&m, &Tensor::zeros(&[2, 1])).unwrap(),
            Tensor::zeros(&[2, 1])
        );

        let r = record(NeuronKind::DenseNoBias, Tensor::zeros(&[3, 2]), 2);
        let ridge = MetricOperator::new(&r, 1.0);
        let v = Tensor::new(vec![2, 2], vec![0.5, -1.0, 3.0, 7.0]).unwrap();
        assert_eq!(metric_apply(&ridge, &v).unwrap(), v);
    }

    #[test]
    fn ridge_skips_bias_row() {
        let r = record(NeuronKind::DenseWithBias, Tensor::zeros(&[2, 1]), 1);
        let m = MetricOperator::new(&r, 1.0);
        let v = Tensor::new(vec![2, 1], vec![1.0, 0.0]).unwrap();
        assert_eq!(metric_apply(&m, &v).unwrap().data(), &[1.0, 0.0]);
        let bias_only = Tensor::new(vec![2, 1], vec![0.0, 1.0]).unwrap();
        // Zero features: the bias column of X̃ is all ones, so M e_b = e_b.
        assert_eq!(metric_apply(&m, &bias_only).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn identity_metric_is_rejected() {
        let r = record(NeuronKind::IdentityMetric, Tensor::zeros(&[2, 2]), 2);
        assert!(matches!(
            metric_apply(&MetricOperator::new(&r, 0.0), &Tensor::zeros(&[2])),
            Err(Error::Unsupported(_))
        ));
    }
}
