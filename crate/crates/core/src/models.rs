//! Graph builders for the experiments, initializers, and evaluation metrics.

use crate::autodiff::{Graph, GraphBuilder, NeuronId, NeuronKind, ParamSet};
use crate::{rng, Error, Real, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Squared,
    SoftmaxCrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: NeuronKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    pub loss: LossKind,
    pub seed: u64,
}

impl ModelSpec {
    /// Dense-with-bias layers through `dims`, `activation` after every hidden
    /// layer, none after the last.
    pub fn mlp(dims: &[usize], activation: Activation, loss: LossKind, seed: u64) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| LayerSpec {
                kind: NeuronKind::DenseWithBias,
                in_dim: w[0],
                out_dim: w[1],
                activation: if i + 2 == dims.len() {
                    Activation::None
                } else {
                    activation
                },
            })
            .collect();
        ModelSpec { layers, loss, seed }
    }
}

/// Builds `dense → activation` chains ending in the loss.
pub fn build_mlp(spec: &ModelSpec) -> Result<Graph> {
    let first = spec
        .layers
        .first()
        .ok_or_else(|| Error::config("model needs at least one layer"))?;
    let mut b = GraphBuilder::new();
    let mut node = b.input(first.in_dim);
    let mut width = first.in_dim;
    for (i, layer) in spec.layers.iter().enumerate() {
        if layer.in_dim != width || layer.in_dim == 0 || layer.out_dim == 0 {
            return Err(Error::config(format!(
                "layer {i} expects {} inputs but receives {width}",
                layer.in_dim
            )));
        }
        node = match layer.kind {
            NeuronKind::DenseWithBias => b.dense(node, layer.out_dim, true),
            NeuronKind::DenseNoBias => b.dense(node, layer.out_dim, false),
            NeuronKind::IdentityMetric => {
                if layer.out_dim != layer.in_dim {
                    return Err(Error::config(format!(
                        "identity-metric layer {i} must preserve width"
                    )));
                }
                b.add_parameter(node)
            }
        };
        node = match layer.activation {
            Activation::None => node,
            Activation::Tanh => b.tanh(node),
            Activation::Relu => b.relu(node),
        };
        width = layer.out_dim;
    }
    match spec.loss {
        LossKind::Squared => b.squared_loss(node),
        LossKind::SoftmaxCrossEntropy => b.softmax_cross_entropy(node),
    };
    b.build()
}

/// Two bias-free linear layers `x ↦ x·W_in·W_out` under the ½-scaled mean squared loss.
pub fn build_matfac(d_in: usize, d_hidden: usize, d_out: usize) -> Result<Graph> {
    if d_in == 0 || d_hidden == 0 || d_out == 0 {
        return Err(Error::config("matrix factorization dimensions must be positive"));
    }
    let mut b = GraphBuilder::new();
    let x = b.input(d_in);
    let h = b.dense(x, d_hidden, false);
    let y = b.dense(h, d_out, false);
    b.squared_loss(y);
    b.build()
}

/// `in_dim × out_dim` weights drawn from `Normal(0, 2/(in_dim + out_dim))`.
pub fn glorot_normal_init(in_dim: usize, out_dim: usize, seed: u64) -> Tensor {
    let std = (2.0 / (in_dim + out_dim) as Real).sqrt();
    rng::normal(&mut rng::stream(seed, 0), &[in_dim, out_dim], std)
}

/// Glorot-normal weights for every dense neuron (neuron `i` uses stream `i`
/// of `seed`), zero biases, zero identity-metric parameters.
pub fn init_params(graph: &Graph, seed: u64) -> ParamSet {
    let tensors = graph
        .neurons()
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut g = rng::stream(seed, 1000 + i as u64);
            let std = (2.0 / (spec.in_dim + spec.out_dim) as Real).sqrt();
            match spec.kind {
                NeuronKind::DenseNoBias => rng::normal(&mut g, &[spec.in_dim, spec.out_dim], std),
                NeuronKind::DenseWithBias => {
                    let w = rng::normal(&mut g, &[spec.in_dim, spec.out_dim], std);
                    let mut data = w.into_data();
                    data.extend(std::iter::repeat_n(0.0, spec.out_dim));
                    Tensor::new(vec![spec.in_dim + 1, spec.out_dim], data).expect("shape")
                }
                NeuronKind::IdentityMetric => Tensor::zeros(&[spec.out_dim]),
            }
        })
        .collect();
    ParamSet::new(tensors)
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy(logits: &Tensor, labels: &Tensor) -> Result<Real> {
    if logits.ndim() != 2 || labels.len() != logits.rows() {
        return Err(Error::dimension(format!(
            "accuracy of logits {:?} against labels {:?}",
            logits.shape(),
            labels.shape()
        )));
    }
    if logits.rows() == 0 {
        return Err(Error::Degenerate("accuracy of an empty batch".into()));
    }
    let correct = (0..logits.rows())
        .filter(|&i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best as Real == labels.data()[i]
        })
        .count();
    Ok(correct as Real / logits.rows() as Real)
}

/// Sets neuron `id` of `params` to `value` after checking its shape.
pub fn set_param(params: &mut ParamSet, id: NeuronId, value: Tensor) -> Result<()> {
    if params.get(id).shape() != value.shape() {
        return Err(Error::dimension(format!(
            "neuron {} has shape {:?}, got {:?}",
            id.0,
            params.get(id).shape(),
            value.shape()
        )));
    }
    params.set(id, value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{forward, predict};
    use crate::tensor::matmul;

    #[test]
    fn glorot_is_deterministic_with_expected_variance() {
        assert_eq!(glorot_normal_init(5, 7, 3), glorot_normal_init(5, 7, 3));
        let w = glorot_normal_init(1000, 1000, 9);
        let n = w.len() as Real;
        let mean = w.sum() / n;
        let var = w.data().iter().map(|x| (x - mean) * (x - mean)).sum::<Real>() / n;
        assert!((var / (2.0 / 2000.0) - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn biases_start_at_zero() {
        let g = build_mlp(&ModelSpec::mlp(&[4, 3, 2], Activation::Tanh, LossKind::Squared, 0)).unwrap();
        let p = init_params(&g, 1);
        for t in p.tensors() {
            assert!(t.row(t.rows() - 1).iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn mnist_architecture_has_three_biased_neurons() {
        let g = build_mlp(&ModelSpec::mlp(&[784, 800, 800, 10], Activation::Tanh, LossKind::SoftmaxCrossEntropy, 0)).unwrap();
        assert_eq!(g.neurons().len(), 3);
        assert!(g.neurons().iter().all(|n| n.kind == NeuronKind::DenseWithBias));
        assert_eq!(g.param_shapes(), vec![vec![785, 800], vec![801, 800], vec![801, 10]]);
    }

    #[test]
    fn single_layer_spec_is_linear_model() {
        let g = build_mlp(&ModelSpec::mlp(&[3, 2], Activation::Tanh, LossKind::Squared, 0)).unwrap();
        assert_eq!(g.neurons().len(), 1);
        assert_eq!(g.nodes().len(), 3);
    }

    #[test]
    fn zero_network_has_uniform_cross_entropy() {
        let g = build_mlp(&ModelSpec::mlp(&[6, 5, 4], Activation::Tanh, LossKind::SoftmaxCrossEntropy, 0)).unwrap();
        let p = ParamSet::zeros_for(&g);
        let labels = Tensor::vector(vec![0.0, 3.0, 1.0]);
        let (loss, _) = forward(&g, &p, &Tensor::zeros(&[3, 6]), &labels).unwrap();
        assert!((loss - (4.0 as Real).ln()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_layers_are_rejected() {
        let mut spec = ModelSpec::mlp(&[3, 4, 2], Activation::Tanh, LossKind::Squared, 0);
        spec.layers[1].in_dim = 5;
        assert!(matches!(build_mlp(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn matfac_interpolates_its_own_targets() {
        let g = build_matfac(3, 3, 4).unwrap();
        let a_t = Tensor::new(vec![3, 4], (0..12).map(|v| v as Real * 0.1).collect()).unwrap();
        let params = ParamSet::new(vec![Tensor::identity(3), a_t.clone()]);
        let x = crate::rng::normal(&mut crate::rng::stream(0, 0), &[5, 3], 1.0);
        let y = matmul(&x, &a_t).unwrap();
        let (loss, _) = forward(&g, &params, &x, &y).unwrap();
        assert!(loss < 1e-28);
        assert_eq!(predict(&g, &params, &x).unwrap().shape(), &[5, 4]);
    }

    #[test]
    fn scalar_matfac_matches_scalar_regression() {
        let g = build_matfac(1, 1, 1).unwrap();
        let params = ParamSet::new(vec![Tensor::identity(1), Tensor::zeros(&[1, 1])]);
        let x = Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap();
        let y = Tensor::new(vec![2, 1], vec![2.0, 4.0]).unwrap();
        let (loss, mut tape) = forward(&g, &params, &x, &y).unwrap();
        assert_eq!(loss, 5.0);
        assert_eq!(tape.backward().unwrap().tensors()[1].item(), -5.0);
    }

    #[test]
    fn accuracy_examples() {
        let one_hot = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(accuracy(&one_hot, &Tensor::vector(vec![0.0, 1.0])).unwrap(), 1.0);
        let uniform = Tensor::zeros(&[3, 4]);
        assert_eq!(accuracy(&uniform, &Tensor::vector(vec![0.0; 3])).unwrap(), 1.0);
        assert_eq!(accuracy(&one_hot, &Tensor::vector(vec![0.0, 0.0])).unwrap(), 0.5);
    }
}
