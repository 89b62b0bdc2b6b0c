use crate::autodiff::neuron::{dense_apply, dense_pullback};
use crate::autodiff::{Graph, NeuronId, NeuronRecord, Op, ParamSet};
use crate::tensor::matmul_nt;
use crate::{Error, Real, Result, Tensor};

/// Saved forward values plus one [`NeuronRecord`] per neuron.
#[derive(Debug)]
pub struct Tape<'g> {
    graph: &'g Graph,
    params: &'g ParamSet,
    labels: Tensor,
    values: Option<Vec<Tensor>>,
    records: Vec<NeuronRecord>,
    loss: Real,
}

/// Evaluates `graph` on `batch` and returns the mean loss and the tape.
pub fn forward<'g>(
    graph: &'g Graph,
    params: &'g ParamSet,
    batch: &Tensor,
    labels: &Tensor,
) -> Result<(Real, Tape<'g>)> {
    params.check_shapes(graph)?;
    if labels.rows() != batch.rows() || labels.ndim() == 0 {
        return Err(Error::dimension(format!(
            "batch {:?} and labels {:?} disagree on the sample axis",
            batch.shape(),
            labels.shape()
        )));
    }
    let (values, records) = run_forward(graph, params, batch, Some(labels))?;
    let loss = values.last().expect("graph has a loss node").item();
    let tape = Tape {
        graph,
        params,
        labels: labels.clone(),
        values: Some(values),
        records,
        loss,
    };
    Ok((loss, tape))
}

/// Value of the graph's prediction node (the loss input) on `batch`.
pub fn predict(graph: &Graph, params: &ParamSet, batch: &Tensor) -> Result<Tensor> {
    params.check_shapes(graph)?;
    let (mut values, _) = run_forward(graph, params, batch, None)?;
    values.truncate(graph.prediction_node().0 + 1);
    Ok(values.pop().expect("prediction node evaluated"))
}

fn numeric_at(graph: &Graph, i: usize) -> Error {
    Error::numeric(format!(
        "non-finite value produced by node {i} ({})",
        graph.nodes()[i].op.name()
    ))
}

fn run_forward(
    graph: &Graph,
    params: &ParamSet,
    batch: &Tensor,
    labels: Option<&Tensor>,
) -> Result<(Vec<Tensor>, Vec<NeuronRecord>)> {
    if batch.ndim() != 2 || batch.cols() != graph.input_width() {
        return Err(Error::dimension(format!(
            "batch {:?} for an input of width {}",
            batch.shape(),
            graph.input_width()
        )));
    }
    if batch.rows() == 0 {
        return Err(Error::Degenerate("empty batch".into()));
    }
    let n = batch.rows();
    let mut values: Vec<Tensor> = Vec::with_capacity(graph.nodes().len());
    let mut records: Vec<Option<NeuronRecord>> = vec![None; graph.neurons().len()];

    for (i, node) in graph.nodes().iter().enumerate() {
        let value = match &node.op {
            Op::Input => batch.clone(),
            Op::Dense { input, neuron } => {
                let x = &values[input.0];
                let spec = graph.neuron(*neuron);
                let out = dense_apply(x, params.get(*neuron), spec.kind.has_bias())?;
                records[neuron.0] = Some(NeuronRecord {
                    id: *neuron,
                    kind: spec.kind,
                    inputs: x.clone(),
                    n,
                    out_dim: spec.out_dim,
                    grad: None,
                });
                out
            }
            Op::AddParameter { input, neuron } => {
                let x = &values[input.0];
                let theta = params.get(*neuron);
                let mut out = x.clone();
                for r in 0..n {
                    for (o, t) in out.row_mut(r).iter_mut().zip(theta.data()) {
                        *o += t;
                    }
                }
                records[neuron.0] = Some(NeuronRecord {
                    id: *neuron,
                    kind: graph.neuron(*neuron).kind,
                    inputs: x.clone(),
                    n,
                    out_dim: node.width,
                    grad: None,
                });
                out
            }
            Op::Tanh { input } => values[input.0].map(Real::tanh),
            Op::Relu { input } => values[input.0].map(|x| x.max(0.0)),
            Op::Affine {
                input,
                scale,
                shift,
            } => {
                let mut out = values[input.0].clone();
                for r in 0..n {
                    for ((o, a), c) in out.row_mut(r).iter_mut().zip(scale).zip(shift) {
                        *o = a * *o + c;
                    }
                }
                out
            }
            Op::AppendConstant { input, value } => values[input.0].append_column(*value)?,
            Op::SquaredLoss { input } => {
                let Some(labels) = labels else { break };
                let out = &values[input.0];
                if labels.shape() != out.shape() {
                    return Err(Error::dimension(format!(
                        "squared loss on outputs {:?} with targets {:?}",
                        out.shape(),
                        labels.shape()
                    )));
                }
                let s: Real = out
                    .data()
                    .iter()
                    .zip(labels.data())
                    .map(|(o, y)| 0.5 * (o - y) * (o - y))
                    .sum();
                Tensor::scalar(s / n as Real)
            }
            Op::SoftmaxCrossEntropy { input } => {
                let Some(labels) = labels else { break };
                let logits = &values[input.0];
                let classes = class_indices(labels, logits.cols())?;
                let mut s = 0.0;
                for (r, &c) in classes.iter().enumerate() {
                    let row = logits.row(r);
                    s += log_sum_exp(row) - row[c];
                }
                Tensor::scalar(s / n as Real)
            }
        };
        if !value.is_finite() {
            return Err(numeric_at(graph, i));
        }
        values.push(value);
    }
    let records = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.ok_or_else(|| Error::config(format!("neuron {i} is not used by the graph")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((values, records))
}

fn class_indices(labels: &Tensor, classes: usize) -> Result<Vec<usize>> {
    if labels.ndim() != 1 {
        return Err(Error::dimension(format!(
            "class labels must be a vector, got {:?}",
            labels.shape()
        )));
    }
    labels
        .data()
        .iter()
        .map(|&y| {
            let c = y as usize;
            if y < 0.0 || y.fract() != 0.0 || c >= classes {
                Err(Error::dimension(format!(
                    "label {y} is not a class index below {classes}"
                )))
            } else {
                Ok(c)
            }
        })
        .collect()
}

fn log_sum_exp(row: &[Real]) -> Real {
    let m = row.iter().fold(Real::NEG_INFINITY, |a, &b| a.max(b));
    m + row.iter().map(|x| (x - m).exp()).sum::<Real>().ln()
}

fn softmax_row(row: &[Real], out: &mut [Real]) {
    let m = row.iter().fold(Real::NEG_INFINITY, |a, &b| a.max(b));
    let mut s = 0.0;
    for (o, x) in out.iter_mut().zip(row) {
        *o = (x - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

fn accumulate(slot: &mut Option<Tensor>, value: Tensor) -> Result<()> {
    match slot {
        Some(existing) => existing.add_assign(&value),
        None => {
            *slot = Some(value);
            Ok(())
        }
    }
}

impl<'g> Tape<'g> {
    pub fn loss(&self) -> Real {
        self.loss
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn records(&self) -> &[NeuronRecord] {
        &self.records
    }

    pub fn record(&self, id: NeuronId) -> &NeuronRecord {
        &self.records[id.0]
    }

    pub fn into_records(self) -> Vec<NeuronRecord> {
        self.records
    }

    /// Gradient of the mean loss for every neuron. Also stored in the records.
    pub fn backward(&mut self) -> Result<ParamSet> {
        self.backward_impl(false).map(|(g, _)| g)
    }

    /// Like [`Tape::backward`], additionally returning each neuron's per-sample
    /// output gradients `Λ_i` (`n × d_out`), i.e. the gradients of the pointwise
    /// losses with respect to the neuron's outputs.
    pub fn backward_with_output_grads(&mut self) -> Result<(ParamSet, Vec<Tensor>)> {
        self.backward_impl(true)
            .map(|(g, lambdas)| (g, lambdas.expect("requested")))
    }

    fn backward_impl(&mut self, keep_lambdas: bool) -> Result<(ParamSet, Option<Vec<Tensor>>)> {
        let values = self
            .values
            .take()
            .ok_or_else(|| Error::State("tape has no forward values; backward already ran".into()))?;
        let graph = self.graph;
        let nodes = graph.nodes();
        let n = values[0].rows();
        let inv_n = 1.0 / n as Real;

        // Only propagate into nodes that lead back to a parameter.
        let mut needs_grad = vec![false; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            needs_grad[i] =
                node.op.neuron().is_some() || node.op.inputs().iter().any(|p| needs_grad[p.0]);
        }

        let mut adj: Vec<Option<Tensor>> = vec![None; nodes.len()];
        let mut grads: Vec<Option<Tensor>> = vec![None; graph.neurons().len()];
        let mut lambdas: Vec<Option<Tensor>> = vec![None; graph.neurons().len()];

        for i in (0..nodes.len()).rev() {
            let op = &nodes[i].op;
            if op.is_loss() {
                let input = op.inputs()[0];
                let out = &values[input.0];
                let mut seed = out.clone();
                match op {
                    Op::SquaredLoss { .. } => {
                        for (s, y) in seed.data_mut().iter_mut().zip(self.labels.data()) {
                            *s = (*s - y) * inv_n;
                        }
                    }
                    _ => {
                        let classes = class_indices(&self.labels, out.cols())?;
                        for (r, &c) in classes.iter().enumerate() {
                            softmax_row(out.row(r), seed.row_mut(r));
                            let row = seed.row_mut(r);
                            row[c] -= 1.0;
                            row.iter_mut().for_each(|v| *v *= inv_n);
                        }
                    }
                }
                accumulate(&mut adj[input.0], seed)?;
                continue;
            }
            let Some(upstream) = adj[i].take() else {
                continue;
            };
            match op {
                Op::Input => {}
                Op::Dense { input, neuron } => {
                    let bias = graph.neuron(*neuron).kind.has_bias();
                    let x = &values[input.0];
                    grads[neuron.0] = Some(dense_pullback(x, &upstream, bias)?);
                    if needs_grad[input.0] {
                        let theta = self.params.get(*neuron);
                        let weights = theta.slice_rows(0, x.cols());
                        accumulate(&mut adj[input.0], matmul_nt(&upstream, &weights)?)?;
                    }
                    if keep_lambdas {
                        lambdas[neuron.0] = Some(upstream.scale(n as Real));
                    }
                }
                Op::AddParameter { input, neuron } => {
                    grads[neuron.0] = Some(upstream.sum_rows());
                    if keep_lambdas {
                        lambdas[neuron.0] = Some(upstream.scale(n as Real));
                    }
                    if needs_grad[input.0] {
                        accumulate(&mut adj[input.0], upstream)?;
                    }
                }
                Op::Tanh { input } => {
                    if needs_grad[input.0] {
                        let y = &values[i];
                        let mut g = upstream;
                        for (gv, yv) in g.data_mut().iter_mut().zip(y.data()) {
                            *gv *= 1.0 - yv * yv;
                        }
                        accumulate(&mut adj[input.0], g)?;
                    }
                }
                Op::Relu { input } => {
                    if needs_grad[input.0] {
                        let x = &values[input.0];
                        let mut g = upstream;
                        for (gv, xv) in g.data_mut().iter_mut().zip(x.data()) {
                            if *xv <= 0.0 {
                                *gv = 0.0;
                            }
                        }
                        accumulate(&mut adj[input.0], g)?;
                    }
                }
                Op::Affine { input, scale, .. } => {
                    if needs_grad[input.0] {
                        let mut g = upstream;
                        for r in 0..n {
                            for (gv, a) in g.row_mut(r).iter_mut().zip(scale) {
                                *gv *= a;
                            }
                        }
                        accumulate(&mut adj[input.0], g)?;
                    }
                }
                Op::AppendConstant { input, .. } => {
                    if needs_grad[input.0] {
                        let w = nodes[input.0].width;
                        let mut data = Vec::with_capacity(n * w);
                        for r in 0..n {
                            data.extend_from_slice(&upstream.row(r)[..w]);
                        }
                        accumulate(&mut adj[input.0], Tensor::new(vec![n, w], data)?)?;
                    }
                }
                Op::SquaredLoss { .. } | Op::SoftmaxCrossEntropy { .. } => unreachable!(),
            }
        }

        let mut out = Vec::with_capacity(grads.len());
        for (id, g) in grads.into_iter().enumerate() {
            let g = g.unwrap_or_else(|| Tensor::zeros(&graph.neurons()[id].param_shape()));
            if !g.is_finite() {
                return Err(Error::numeric(format!("non-finite gradient for neuron {id}")));
            }
            self.records[id].grad = Some(g.clone());
            out.push(g);
        }
        let lambdas = keep_lambdas.then(|| {
            lambdas
                .into_iter()
                .zip(&self.records)
                .map(|(l, r)| l.unwrap_or_else(|| Tensor::zeros(&[r.n, r.out_dim])))
                .collect()
        });
        Ok((ParamSet::new(out), lambdas))
    }
}
