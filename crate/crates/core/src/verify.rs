//! Self-checks against independent oracles: central finite differences,
//! explicitly assembled dense matrices, and an SVD least-squares solver.
//!
//! Each check returns a [`CheckResult`] with the worst error it saw, so the
//! `verify` subcommand and the test suite report the same numbers.

use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::autodiff::{
    forward, Graph, GraphBuilder, NeuronId, NeuronKind, NeuronRecord, ParamSet,
};
use crate::metric::{
    analytic_whitener, metric_apply, pcg_solve, CgOptions, MetricOperator, Preconditioner,
};
use crate::optim::{lnb_step_fullbatch, lnb_step_online, LnbConfig, LnbMode, LnbState};
use crate::rng::{self, Rng};
use crate::tensor::matmul_nt;
use crate::{Real, Result, Tensor};

pub const GRADIENT_TOL: Real = 1e-6;
pub const FD_STEP: Real = 1e-5;
pub const METRIC_TOL: Real = 1e-10;
pub const WHITENER_TOL: Real = 1e-8;
pub const EXACT_CG_TOL: Real = 1e-8;
pub const STEP_NORM_TOL: Real = 1e-6;
pub const NEWTON_TOL: Real = 1e-6;
pub const AFFINE_TOL: Real = 1e-8;
pub const CONSISTENCY_TOL: Real = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst error observed across all trials.
    pub worst: Real,
    pub tolerance: Real,
    pub trials: usize,
    pub elapsed_s: f64,
    /// Set when a trial could not be evaluated at all.
    pub failure: Option<String>,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{status}  {:<28} worst {:.3e} (tol {:.0e}) over {} trials in {:.3} s",
            self.name, self.worst, self.tolerance, self.trials, self.elapsed_s
        )?;
        if let Some(msg) = &self.failure {
            write!(f, ": {msg}")?;
        }
        Ok(())
    }
}

fn check(
    name: &'static str,
    tolerance: Real,
    trials: usize,
    mut trial: impl FnMut(usize) -> Result<Real>,
) -> CheckResult {
    let start = Instant::now();
    let mut worst: Real = 0.0;
    let mut failure = None;
    for k in 0..trials {
        match trial(k) {
            Ok(err) if err.is_nan() => {
                failure = Some(format!("trial {k} produced NaN"));
                break;
            }
            Ok(err) => worst = worst.max(err),
            Err(e) => {
                failure = Some(format!("trial {k}: {e}"));
                break;
            }
        }
    }
    CheckResult {
        name,
        passed: failure.is_none() && worst <= tolerance,
        worst,
        tolerance,
        trials,
        elapsed_s: start.elapsed().as_secs_f64(),
        failure,
    }
}

/// Every check in order.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        gradient_oracle(),
        metric_oracle(),
        whitener_identity(),
        exact_preconditioner_cg(),
        step_norm(),
        newton_on_squared_loss(),
        affine_invariance(),
        online_batch_consistency(),
    ]
}

fn pick(g: &mut Rng, lo: usize, hi: usize) -> usize {
    use rand::Rng as _;
    g.random_range(lo..=hi)
}

fn rel(err: Real, scale: Real) -> Real {
    err / scale.max(Real::MIN_POSITIVE)
}

fn diff_norm(a: &[Real], b: &[Real]) -> Real {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<Real>().sqrt()
}

fn l2(a: &[Real]) -> Real {
    a.iter().map(|x| x * x).sum::<Real>().sqrt()
}

#[derive(Debug, Clone, Copy)]
enum Layer {
    DenseBias,
    DenseNoBias,
    AddParameter,
    Tanh,
    Relu,
    Affine,
    AppendConstant,
}

const LAYERS: [Layer; 7] = [
    Layer::DenseBias,
    Layer::DenseNoBias,
    Layer::AddParameter,
    Layer::Tanh,
    Layer::Relu,
    Layer::Affine,
    Layer::AppendConstant,
];

/// A random chain graph (widths ≤ 8) containing `forced` and at least one
/// trainable neuron, ending in squared loss or softmax cross-entropy.
fn random_graph(g: &mut Rng, forced: Layer, cross_entropy: bool) -> Result<Graph> {
    let mut b = GraphBuilder::new();
    let mut width = pick(g, 1, 6);
    let mut node = b.input(width);
    let len = pick(g, 1, 3);
    let at = pick(g, 0, len);
    let mut trainable = false;
    for k in 0..=len {
        let layer = if k == at { forced } else { LAYERS[pick(g, 0, LAYERS.len() - 1)] };
        let layer = match layer {
            Layer::AppendConstant if width >= 8 => Layer::Tanh,
            l => l,
        };
        node = match layer {
            Layer::DenseBias | Layer::DenseNoBias => {
                width = pick(g, 1, 6);
                trainable = true;
                b.dense(node, width, matches!(layer, Layer::DenseBias))
            }
            Layer::AddParameter => {
                trainable = true;
                b.add_parameter(node)
            }
            Layer::Tanh => b.tanh(node),
            Layer::Relu => b.relu(node),
            Layer::Affine => {
                let scale = rng::uniform(g, &[width], -2.0, 2.0).into_data();
                let shift = rng::uniform(g, &[width], -1.0, 1.0).into_data();
                b.affine(node, scale, shift)?
            }
            Layer::AppendConstant => {
                width += 1;
                b.append_constant(node, 0.5)
            }
        };
    }
    if !trainable || (cross_entropy && width < 2) {
        width = pick(g, 2, 5);
        node = b.dense(node, width, true);
    }
    if cross_entropy {
        b.softmax_cross_entropy(node);
    } else {
        b.squared_loss(node);
    }
    b.build()
}

fn random_params(g: &mut Rng, graph: &Graph) -> ParamSet {
    ParamSet::new(
        graph
            .param_shapes()
            .iter()
            .map(|s| rng::normal(g, s, 0.7))
            .collect(),
    )
}

fn random_labels(g: &mut Rng, graph: &Graph, n: usize) -> Tensor {
    let k = graph.output_width();
    if matches!(graph.loss_op(), crate::autodiff::Op::SoftmaxCrossEntropy { .. }) {
        Tensor::vector((0..n).map(|_| pick(g, 0, k - 1) as Real).collect())
    } else {
        rng::normal(g, &[n, k], 1.0)
    }
}

/// Backward against central differences on random chain graphs covering
/// every op and both losses.
pub fn gradient_oracle() -> CheckResult {
    let cases = LAYERS.len() * 2 * 20;
    check("gradient vs finite diff", GRADIENT_TOL, cases, |k| {
        let mut g = rng::stream(0x6ad, k as u64);
        let graph = random_graph(&mut g, LAYERS[k % LAYERS.len()], (k / LAYERS.len()) % 2 == 1)?;
        let n = pick(&mut g, 1, 8);
        let x = rng::normal(&mut g, &[n, graph.input_width()], 1.0);
        let y = random_labels(&mut g, &graph, n);
        let params = random_params(&mut g, &graph);
        let grads = {
            let (_, mut tape) = forward(&graph, &params, &x, &y)?;
            tape.backward()?.flatten()
        };
        let flat = params.flatten();
        let mut fd = vec![0.0; flat.len()];
        for i in 0..flat.len() {
            let at = |delta: Real| -> Result<Real> {
                let mut p = flat.clone();
                p[i] += delta;
                Ok(forward(&graph, &ParamSet::unflatten(&params, &p)?, &x, &y)?.0)
            };
            fd[i] = (at(FD_STEP)? - at(-FD_STEP)?) / (2.0 * FD_STEP);
        }
        Ok(rel(diff_norm(&grads, &fd), l2(&fd).max(1e-3)))
    })
}

/// `X̃` with the constant column when `bias` is set, as a row-major nalgebra matrix.
fn augmented(x: &Tensor, bias: bool) -> DMatrix<f64> {
    let d = x.cols() + usize::from(bias);
    DMatrix::from_fn(x.rows(), d, |i, j| {
        if j < x.cols() {
            x.get(i, j) as f64
        } else {
            1.0
        }
    })
}

fn to_matrix(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_fn(t.rows(), t.cols(), |i, j| t.get(i, j) as f64)
}

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

/// Matrix-free metric products against `((1/n)X̃ᵀX̃ + γ·mask)·v` assembled densely.
pub fn metric_oracle() -> CheckResult {
    check("metric vs dense product", METRIC_TOL, 50, |k| {
        let mut g = rng::stream(0x3e7, k as u64);
        let bias = k % 2 == 0;
        let kind = if bias { NeuronKind::DenseWithBias } else { NeuronKind::DenseNoBias };
        let (n, d, out) = (pick(&mut g, 1, 12), pick(&mut g, 1, 8), pick(&mut g, 1, 4));
        let ridge = if k % 4 < 2 { 0.0 } else { 0.3 };
        let mut x = rng::normal(&mut g, &[n, d], 1.0);
        x.data_mut().iter_mut().for_each(|v| *v += 0.5);
        let r = record(kind, x.clone(), out);
        let v = rng::normal(&mut g, &r.param_shape(), 1.0);
        let got = metric_apply(&MetricOperator::new(&r, ridge), &v)?;

        let xt = augmented(&x, bias);
        let mut m = xt.transpose() * &xt / n as f64;
        for i in 0..d {
            m[(i, i)] += ridge as f64;
        }
        let want = m * to_matrix(&v);
        let want: Vec<Real> = (0..want.nrows())
            .flat_map(|i| (0..want.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| want[(i, j)] as Real)
            .collect();
        Ok(rel(diff_norm(got.data(), &want), l2(&want)))
    })
}

/// Population mean and covariance of the rows of `x`.
fn batch_stats(x: &Tensor) -> (Tensor, Tensor) {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v / n as Real;
        }
    }
    let mut cov = Tensor::zeros(&[d, d]);
    for i in 0..n {
        let row = x.row(i);
        for a in 0..d {
            for b in 0..d {
                let c = cov.get(a, b) + (row[a] - mean[a]) * (row[b] - mean[b]) / n as Real;
                cov.set(a, b, c);
            }
        }
    }
    (Tensor::vector(mean), cov)
}

fn random_inputs(g: &mut Rng, n: usize, d: usize) -> Tensor {
    let mix = rng::normal(g, &[d, d], 1.0);
    let mut x = crate::tensor::matmul(&rng::normal(g, &[n, d], 1.0), &mix).expect("shapes agree");
    let offset = rng::normal(g, &[d], 2.0);
    for i in 0..n {
        for (v, o) in x.row_mut(i).iter_mut().zip(offset.data()) {
            *v += o;
        }
    }
    x
}

/// `W Wᵀ M = I` for the analytic whitener and the data's with-bias metric.
pub fn whitener_identity() -> CheckResult {
    check("whitener inverts metric", WHITENER_TOL, 20, |k| {
        let mut g = rng::stream(0x317, k as u64);
        let d = pick(&mut g, 1, 10);
        let x = random_inputs(&mut g, 40 * d, d);
        let (mean, cov) = batch_stats(&x);
        let w = to_matrix(&analytic_whitener(&mean, &cov)?);
        let xt = augmented(&x, true);
        let m = xt.transpose() * &xt / x.rows() as f64;
        let err = (&w * w.transpose() * m - DMatrix::identity(d + 1, d + 1)).amax();
        Ok(err as Real)
    })
}

/// PCG with the exact whitener as preconditioner solves in one iteration.
pub fn exact_preconditioner_cg() -> CheckResult {
    check("exact whitener, 1-step CG", EXACT_CG_TOL, 20, |k| {
        let mut g = rng::stream(0xc9, k as u64);
        let (d, out) = (pick(&mut g, 1, 8), pick(&mut g, 1, 4));
        let x = random_inputs(&mut g, 30 * d, d);
        let (mean, cov) = batch_stats(&x);
        let w = analytic_whitener(&mean, &cov)?;
        let p = Preconditioner::Dense(matmul_nt(&w, &w)?);
        let r = record(NeuronKind::DenseWithBias, x, out);
        let b = rng::normal(&mut g, &r.param_shape(), 1.0);
        let opts = CgOptions { max_iters: 1, tol: 0.0 };
        let sol = pcg_solve(&MetricOperator::new(&r, 0.0), &b, &p, &Tensor::zeros_like(&b), opts)?;
        Ok(rel(sol.residual_norm, b.norm()))
    })
}

fn exact_config(epsilon: Real, params: &ParamSet) -> LnbConfig {
    LnbConfig {
        schedule: vec![epsilon],
        weight_decay: 0.0,
        ridge: 0.0,
        cg_iters: 4 * params.tensors().iter().map(|t| t.rows()).max().unwrap_or(1),
        cg_tol: 1e-14,
        ..Default::default()
    }
}

fn small_mlp(g: &mut Rng, cross_entropy: bool) -> Result<Graph> {
    let mut b = GraphBuilder::new();
    let x = b.input(pick(g, 2, 5));
    let h = b.dense(x, pick(g, 2, 5), true);
    let h = b.tanh(h);
    let y = b.dense(h, pick(g, 2, 4), true);
    if cross_entropy {
        b.softmax_cross_entropy(y);
    } else {
        b.squared_loss(y);
    }
    b.build()
}

/// `⟨δθ, M δθ⟩ = ε` for the realized step, with `M` assembled densely from
/// the inputs each neuron saw.
pub fn step_norm() -> CheckResult {
    let epsilons = [1e-3, 1e-2, 1e-1];
    check("step has metric norm eps", STEP_NORM_TOL, 20 * epsilons.len(), |k| {
        let epsilon = epsilons[k % epsilons.len()];
        let mut g = rng::stream(0x5e9, (k / epsilons.len()) as u64);
        let graph = small_mlp(&mut g, k % 2 == 0)?;
        let n = 40;
        let x = rng::normal(&mut g, &[n, graph.input_width()], 1.0);
        let y = random_labels(&mut g, &graph, n);
        let mut params = random_params(&mut g, &graph);
        let records = forward(&graph, &params, &x, &y)?.1.into_records();
        let before = params.clone();
        let cfg = LnbConfig {
            mode: LnbMode::FullBatch,
            ..exact_config(epsilon, &params)
        };
        lnb_step_fullbatch(&mut params, &graph, &x, &y, &cfg, &mut LnbState::default())?;
        let mut norm = 0.0;
        for r in &records {
            let xt = augmented(&r.inputs, r.kind.has_bias());
            let m = xt.transpose() * &xt / r.n as f64;
            let step = to_matrix(&params.get(r.id).sub(before.get(r.id))?);
            norm += (step.transpose() * m * &step).trace();
        }
        Ok((norm as Real - epsilon).abs() / epsilon)
    })
}

/// One raw full-batch step on linear least squares hits the OLS solution.
pub fn newton_on_squared_loss() -> CheckResult {
    check("raw step = least squares", NEWTON_TOL, 20, |k| {
        let mut g = rng::stream(0x4e7, k as u64);
        let (d, out) = (pick(&mut g, 1, 8), pick(&mut g, 1, 4));
        let n = pick(&mut g, 2 * d + 2, 60);
        let mut b = GraphBuilder::new();
        let input = b.input(d);
        let y_node = b.dense(input, out, true);
        b.squared_loss(y_node);
        let graph = b.build()?;
        let x = random_inputs(&mut g, n, d);
        let y = rng::normal(&mut g, &[n, out], 1.0);
        let mut params = random_params(&mut g, &graph);
        let cfg = LnbConfig {
            mode: LnbMode::FullBatch,
            raw_step: true,
            ..exact_config(1.0, &params)
        };
        lnb_step_fullbatch(&mut params, &graph, &x, &y, &cfg, &mut LnbState::default())?;

        let ols = least_squares(&x, &y, true)?;
        Ok(rel(diff_norm(params.tensors()[0].data(), ols.data()), ols.norm()))
    })
}

/// The per-sample change in a with-bias neuron's output does not depend on
/// an affine reparameterization `x → a⊙x + c` of its inputs.
pub fn affine_invariance() -> CheckResult {
    check("affine input invariance", AFFINE_TOL, 20, |k| {
        let mut g = rng::stream(0xaf, k as u64);
        let (d, out) = (pick(&mut g, 1, 6), pick(&mut g, 2, 4));
        let n = pick(&mut g, 2 * d + 2, 40);
        let mut b = GraphBuilder::new();
        let input = b.input(d);
        let logits = b.dense(input, out, true);
        if k % 2 == 0 {
            b.softmax_cross_entropy(logits);
        } else {
            b.squared_loss(logits);
        }
        let graph = b.build()?;
        let x = random_inputs(&mut g, n, d);
        let y = random_labels(&mut g, &graph, n);
        let theta = random_params(&mut g, &graph);

        let a = rng::uniform(&mut g, &[d], 0.1, 10.0);
        let c = rng::uniform(&mut g, &[d], -5.0, 5.0);
        let mut x2 = x.clone();
        for i in 0..n {
            for (j, v) in x2.row_mut(i).iter_mut().enumerate() {
                *v = a.data()[j] * *v + c.data()[j];
            }
        }
        // Same function on the transformed inputs: w' = w / a, b' = b − Σ c⊙w/a.
        let t = &theta.tensors()[0];
        let mut t2 = t.clone();
        for col in 0..out {
            let mut shift = 0.0;
            for j in 0..d {
                let w = t.get(j, col) / a.data()[j];
                t2.set(j, col, w);
                shift += c.data()[j] * w;
            }
            t2.set(d, col, t.get(d, col) - shift);
        }
        let theta2 = ParamSet::new(vec![t2]);

        let update = |x: &Tensor, theta: &ParamSet| -> Result<Tensor> {
            let mut p = theta.clone();
            let cfg = LnbConfig {
                mode: LnbMode::FullBatch,
                ..exact_config(1e-2, theta)
            };
            lnb_step_fullbatch(&mut p, &graph, x, &y, &cfg, &mut LnbState::default())?;
            let after = crate::autodiff::predict(&graph, &p, x)?;
            after.sub(&crate::autodiff::predict(&graph, theta, x)?)
        };
        let u1 = update(&x, &theta)?;
        let u2 = update(&x2, &theta2)?;
        Ok(rel(diff_norm(u1.data(), u2.data()), u1.norm()))
    })
}

/// The online step with both EMAs off and exact CG tracks the full-batch step.
pub fn online_batch_consistency() -> CheckResult {
    check("online = full batch", CONSISTENCY_TOL, 10, |k| {
        let mut g = rng::stream(0x0b, k as u64);
        let graph = small_mlp(&mut g, k % 2 == 0)?;
        let n = 30;
        let x = rng::normal(&mut g, &[n, graph.input_width()], 1.0);
        let y = random_labels(&mut g, &graph, n);
        let start = random_params(&mut g, &graph);
        let base = LnbConfig {
            grad_decay: 0.0,
            moment_decay: 0.0,
            weight_decay: 0.1,
            ridge: 1e-4,
            ..exact_config(1e-2, &start)
        };
        let (mut pb, mut po) = (start.clone(), start.clone());
        let (mut sb, mut so) = (LnbState::default(), LnbState::default());
        let batch_cfg = LnbConfig {
            mode: LnbMode::FullBatch,
            ..base.clone()
        };
        let online_cfg = LnbConfig {
            mode: LnbMode::Online,
            ..base
        };
        for _ in 0..3 {
            lnb_step_fullbatch(&mut pb, &graph, &x, &y, &batch_cfg, &mut sb)?;
            lnb_step_online(&mut po, &graph, &x, &y, &online_cfg, &mut so)?;
        }
        let moved = diff_norm(&pb.flatten(), &start.flatten());
        Ok(rel(diff_norm(&pb.flatten(), &po.flatten()), moved))
    })
}

/// `(X̃ᵀX̃)⁻¹X̃ᵀY` by SVD, exposed for examples that compare against least squares.
pub fn least_squares(x: &Tensor, y: &Tensor, bias: bool) -> Result<Tensor> {
    let sol = augmented(x, bias)
        .svd(true, true)
        .solve(&to_matrix(y), 1e-14)
        .map_err(|e| crate::Error::numeric(e.to_string()))?;
    Tensor::new(
        vec![sol.nrows(), sol.ncols()],
        (0..sol.nrows())
            .flat_map(|i| (0..sol.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| sol[(i, j)] as Real)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        for r in run_all() {
            assert!(r.passed, "{r}");
        }
    }
}
