use crate::autodiff::{Graph, NeuronId};
use crate::{Error, Real, Result, Tensor};

/// One tensor per neuron, indexed by [`NeuronId`]. Used for parameters,
/// gradients, and solver outputs alike; block-vector operations treat the
/// whole set as one flattened vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new(tensors: Vec<Tensor>) -> Self {
        ParamSet { tensors }
    }

    pub fn zeros_for(graph: &Graph) -> Self {
        ParamSet {
            tensors: graph.param_shapes().iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn zeros_like(other: &ParamSet) -> Self {
        ParamSet {
            tensors: other.tensors.iter().map(Tensor::zeros_like).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, id: NeuronId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: NeuronId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn set(&mut self, id: NeuronId, value: Tensor) {
        self.tensors[id.0] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (NeuronId, &Tensor)> {
        self.tensors.iter().enumerate().map(|(i, t)| (NeuronId(i), t))
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn check_shapes(&self, graph: &Graph) -> Result<()> {
        let shapes = graph.param_shapes();
        if shapes.len() != self.tensors.len() {
            return Err(Error::dimension(format!(
                "graph has {} neurons, parameter set has {}",
                shapes.len(),
                self.tensors.len()
            )));
        }
        for (i, (s, t)) in shapes.iter().zip(&self.tensors).enumerate() {
            if s.as_slice() != t.shape() {
                return Err(Error::dimension(format!(
                    "neuron {i}: expected parameter shape {s:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    fn check_compatible(&self, other: &ParamSet) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::dimension(format!(
                "parameter sets of {} and {} tensors",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        Ok(())
    }

    /// Inner product of the flattened block vectors, summed in neuron order.
    pub fn dot(&self, other: &ParamSet) -> Result<Real> {
        self.check_compatible(other)?;
        let mut s = 0.0;
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            s += a.dot(b)?;
        }
        Ok(s)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: Real, other: &ParamSet) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, factor: Real) {
        for t in &mut self.tensors {
            t.scale_in_place(factor);
        }
    }

    pub fn norm(&self) -> Real {
        self.tensors
            .iter()
            .map(|t| t.data().iter().map(|x| x * x).sum::<Real>())
            .sum::<Real>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Concatenation of all tensors in neuron order.
    pub fn flatten(&self) -> Vec<Real> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Inverse of [`ParamSet::flatten`] using `template` for shapes.
    pub fn unflatten(template: &ParamSet, flat: &[Real]) -> Result<ParamSet> {
        if flat.len() != template.numel() {
            return Err(Error::dimension(format!(
                "flat vector of {} values for {} parameters",
                flat.len(),
                template.numel()
            )));
        }
        let mut offset = 0;
        let mut tensors = Vec::with_capacity(template.len());
        for t in &template.tensors {
            let n = t.len();
            tensors.push(Tensor::new(t.shape().to_vec(), flat[offset..offset + n].to_vec())?);
            offset += n;
        }
        Ok(ParamSet { tensors })
    }
}
