use crate::{Error, Real, Result};

/// Index of a node in its graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

/// Index of a trainable neuron; also the index into a [`crate::autodiff::ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NeuronId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeuronKind {
    /// `x ↦ [x, 1]·θ`, θ of shape `(d_in + 1) × d_out`; the last row is the bias.
    DenseWithBias,
    /// `x ↦ x·θ`, θ of shape `d_in × d_out`.
    DenseNoBias,
    /// `x ↦ x + θ` with θ of shape `[d]`. Its metric is the identity.
    IdentityMetric,
}

impl NeuronKind {
    pub fn has_bias(self) -> bool {
        matches!(self, NeuronKind::DenseWithBias)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuronSpec {
    pub kind: NeuronKind,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl NeuronSpec {
    pub fn param_shape(&self) -> Vec<usize> {
        match self.kind {
            NeuronKind::DenseWithBias => vec![self.in_dim + 1, self.out_dim],
            NeuronKind::DenseNoBias => vec![self.in_dim, self.out_dim],
            NeuronKind::IdentityMetric => vec![self.out_dim],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// The batch, `n × width`.
    Input,
    Dense { input: NodeId, neuron: NeuronId },
    AddParameter { input: NodeId, neuron: NeuronId },
    Tanh { input: NodeId },
    Relu { input: NodeId },
    /// Fixed per-feature `x ↦ scale ⊙ x + shift`.
    Affine {
        input: NodeId,
        scale: Vec<Real>,
        shift: Vec<Real>,
    },
    /// Concatenates a constant column on the right.
    AppendConstant { input: NodeId, value: Real },
    /// `(1/n) Σ ½‖x − y‖²` against `n × width` targets.
    SquaredLoss { input: NodeId },
    /// Mean negative log-softmax of the labelled class; labels are class indices.
    SoftmaxCrossEntropy { input: NodeId },
}

impl Op {
    pub fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Input => vec![],
            Op::Dense { input, .. }
            | Op::AddParameter { input, .. }
            | Op::Tanh { input }
            | Op::Relu { input }
            | Op::Affine { input, .. }
            | Op::AppendConstant { input, .. }
            | Op::SquaredLoss { input }
            | Op::SoftmaxCrossEntropy { input } => vec![*input],
        }
    }

    pub fn neuron(&self) -> Option<NeuronId> {
        match self {
            Op::Dense { neuron, .. } | Op::AddParameter { neuron, .. } => Some(*neuron),
            _ => None,
        }
    }

    pub fn is_loss(&self) -> bool {
        matches!(self, Op::SquaredLoss { .. } | Op::SoftmaxCrossEntropy { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Dense { .. } => "dense",
            Op::AddParameter { .. } => "add-parameter",
            Op::Tanh { .. } => "tanh",
            Op::Relu { .. } => "relu",
            Op::Affine { .. } => "affine",
            Op::AppendConstant { .. } => "append-constant",
            Op::SquaredLoss { .. } => "squared-loss",
            Op::SoftmaxCrossEntropy { .. } => "softmax-cross-entropy",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub op: Op,
    /// Per-sample feature width of the node's value (1 for the loss).
    pub width: usize,
}

/// A validated computation graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    nodes: Vec<Node>,
    neurons: Vec<NeuronSpec>,
}

impl Graph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn neurons(&self) -> &[NeuronSpec] {
        &self.neurons
    }

    pub fn neuron(&self, id: NeuronId) -> &NeuronSpec {
        &self.neurons[id.0]
    }

    pub fn input_width(&self) -> usize {
        self.nodes[0].width
    }

    pub fn loss_node(&self) -> NodeId {
        NodeId(self.nodes.len() - 1)
    }

    /// The node whose value the loss consumes (logits or regression output).
    pub fn prediction_node(&self) -> NodeId {
        self.nodes[self.nodes.len() - 1].op.inputs()[0]
    }

    pub fn output_width(&self) -> usize {
        self.nodes[self.prediction_node().0].width
    }

    pub fn loss_op(&self) -> &Op {
        &self.nodes[self.nodes.len() - 1].op
    }

    /// Parameter shapes indexed by neuron id.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.neurons.iter().map(NeuronSpec::param_shape).collect()
    }
}

/// Incremental graph construction; every node may only reference earlier nodes.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    neurons: Vec<NeuronSpec>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, width: usize) -> NodeId {
        self.nodes.push(Node { op, width });
        NodeId(self.nodes.len() - 1)
    }

    fn width(&self, id: NodeId) -> usize {
        self.nodes[id.0].width
    }

    pub fn input(&mut self, width: usize) -> NodeId {
        self.push(Op::Input, width)
    }

    pub fn dense(&mut self, input: NodeId, out_dim: usize, bias: bool) -> NodeId {
        let kind = if bias {
            NeuronKind::DenseWithBias
        } else {
            NeuronKind::DenseNoBias
        };
        self.neurons.push(NeuronSpec {
            kind,
            in_dim: self.width(input),
            out_dim,
        });
        let neuron = NeuronId(self.neurons.len() - 1);
        self.push(Op::Dense { input, neuron }, out_dim)
    }

    pub fn add_parameter(&mut self, input: NodeId) -> NodeId {
        let d = self.width(input);
        self.neurons.push(NeuronSpec {
            kind: NeuronKind::IdentityMetric,
            in_dim: d,
            out_dim: d,
        });
        let neuron = NeuronId(self.neurons.len() - 1);
        self.push(Op::AddParameter { input, neuron }, d)
    }

    pub fn tanh(&mut self, input: NodeId) -> NodeId {
        let w = self.width(input);
        self.push(Op::Tanh { input }, w)
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let w = self.width(input);
        self.push(Op::Relu { input }, w)
    }

    pub fn affine(&mut self, input: NodeId, scale: Vec<Real>, shift: Vec<Real>) -> Result<NodeId> {
        let w = self.width(input);
        if scale.len() != w || shift.len() != w {
            return Err(Error::dimension(format!(
                "affine transform on width {w} got scale of {} and shift of {}",
                scale.len(),
                shift.len()
            )));
        }
        Ok(self.push(Op::Affine { input, scale, shift }, w))
    }

    pub fn append_constant(&mut self, input: NodeId, value: Real) -> NodeId {
        let w = self.width(input);
        self.push(Op::AppendConstant { input, value }, w + 1)
    }

    pub fn squared_loss(&mut self, input: NodeId) -> NodeId {
        self.push(Op::SquaredLoss { input }, 1)
    }

    pub fn softmax_cross_entropy(&mut self, input: NodeId) -> NodeId {
        self.push(Op::SoftmaxCrossEntropy { input }, 1)
    }

    pub fn build(self) -> Result<Graph> {
        let nodes = self.nodes;
        if nodes.first().map(|n| &n.op) != Some(&Op::Input) {
            return Err(Error::config("graph must start with its input node"));
        }
        if nodes.iter().filter(|n| n.op == Op::Input).count() != 1 {
            return Err(Error::config("graph must have exactly one input node"));
        }
        let losses = nodes.iter().filter(|n| n.op.is_loss()).count();
        if losses != 1 || !nodes.last().is_some_and(|n| n.op.is_loss()) {
            return Err(Error::config(
                "graph must end in exactly one scalar loss node",
            ));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.op.inputs().iter().any(|p| p.0 >= i) {
                return Err(Error::config(format!("node {i} is not topologically ordered")));
            }
        }
        Ok(Graph {
            nodes,
            neurons: self.neurons,
        })
    }
}
