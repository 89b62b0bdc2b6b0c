//! Linear neuron boosting.
//!
//! One step: backpropagate and capture each neuron's inputs `X_i`; solve
//! `M_i θ̂_i = g_i` per neuron with a few PCG iterations (identity-metric
//! neurons take `θ̂_i = g_i`); shrink all parameters by `1 − √ε·ρ`; compute
//! `z = max(z₀, θ̂·g)`; move by `−√(ε/z)·θ̂`, a step of squared metric norm `ε`.
//!
//! The full-batch variant treats the batch as the whole dataset and solves
//! from zero with a preconditioner built from that batch alone. The online
//! variant smooths the gradient and the feature moments with EMAs and warm
//! starts CG from the previous solution.

use crate::autodiff::{forward, Graph, NeuronId, NeuronKind, NeuronRecord, ParamSet};
use crate::metric::{
    build_preconditioner, pcg_solve, CgOptions, MetricOperator, MomentState, DEFAULT_VAR_FLOOR,
};
use crate::optim::{Optimizer, StepReport};
use crate::{Error, Real, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LnbMode {
    FullBatch,
    Online,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LnbConfig {
    /// Step sizes `ε^(t)`; the last entry is held once the schedule runs out.
    pub schedule: Vec<Real>,
    /// Functional weight decay `ρ`.
    pub weight_decay: Real,
    /// Ridge `γ` added to the weight block of every metric.
    pub ridge: Real,
    /// Floor `z₀` on the metric norm.
    pub min_norm: Real,
    /// Gradient EMA decay (online mode).
    pub grad_decay: Real,
    /// Feature-moment EMA decay (online mode).
    pub moment_decay: Real,
    pub cg_iters: usize,
    pub cg_tol: Real,
    /// Floor on second moments and variances inside the preconditioners.
    pub var_floor: Real,
    pub mode: LnbMode,
    /// Take `θ ← θ − θ̂` instead of the metric-normalized step. Test use only.
    pub raw_step: bool,
}

impl Default for LnbConfig {
    fn default() -> Self {
        LnbConfig {
            schedule: vec![1e-2],
            weight_decay: 0.0,
            ridge: 1e-4,
            min_norm: 1e-8,
            grad_decay: 0.9,
            moment_decay: 0.99,
            cg_iters: 2,
            cg_tol: 1e-10,
            var_floor: DEFAULT_VAR_FLOOR,
            mode: LnbMode::Online,
            raw_step: false,
        }
    }
}

impl LnbConfig {
    pub fn constant(epsilon: Real) -> Self {
        LnbConfig {
            schedule: vec![epsilon],
            ..Default::default()
        }
    }

    pub fn epsilon(&self, t: usize) -> Real {
        self.schedule[t.min(self.schedule.len() - 1)]
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::config("step-size schedule is empty"));
        }
        if self.schedule.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::config("step sizes must be positive and finite"));
        }
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(what.to_string()))
            }
        };
        check(self.weight_decay >= 0.0, "weight decay must be nonnegative")?;
        check(self.ridge >= 0.0, "ridge must be nonnegative")?;
        check(self.min_norm > 0.0, "minimum norm must be positive")?;
        check((0.0..1.0).contains(&self.grad_decay), "gradient decay must lie in [0, 1)")?;
        check((0.0..1.0).contains(&self.moment_decay), "moment decay must lie in [0, 1)")?;
        check(self.cg_iters >= 1, "at least one CG iteration is required")?;
        check(self.cg_tol >= 0.0, "CG tolerance must be nonnegative")?;
        check(self.var_floor > 0.0, "variance floor must be positive")?;
        Ok(())
    }
}

/// Optimizer memory carried between steps.
#[derive(Debug, Clone, Default)]
pub struct LnbState {
    pub t: usize,
    /// Previous per-neuron solutions, used as CG starting points.
    pub warm: Option<ParamSet>,
    pub moments: Vec<Option<MomentState>>,
    pub grad_ema: Option<ParamSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronSolve {
    pub neuron: NeuronId,
    pub residual: Real,
    pub iters: usize,
    pub breakdown: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub t: usize,
    pub loss: Real,
    pub z: Real,
    pub alpha: Real,
    pub epsilon: Real,
    pub neurons: Vec<NeuronSolve>,
    /// The solved direction `θ̂_B`.
    pub direction: ParamSet,
}

/// `z = max(z₀, θ̂·g)`, `α = √(ε/z)`.
pub fn adaptive_scale(direction: &ParamSet, grad: &ParamSet, epsilon: Real, min_norm: Real) -> Result<(Real, Real)> {
    let z = direction.dot(grad)?.max(min_norm);
    Ok(((epsilon / z).sqrt(), z))
}

/// Scales every parameter, biases included, by `1 − √ε·ρ`.
pub fn weight_decay(params: &mut ParamSet, epsilon: Real, rho: Real) -> Result<()> {
    let shrink = epsilon.sqrt() * rho;
    if shrink > 1.0 {
        return Err(Error::config(format!(
            "weight decay factor 1 - sqrt({epsilon})·{rho} is negative"
        )));
    }
    if rho != 0.0 {
        params.scale_in_place(1.0 - shrink);
    }
    Ok(())
}

fn solve_neuron(
    record: &NeuronRecord,
    rhs: &Tensor,
    moments: &MomentState,
    start: &Tensor,
    cfg: &LnbConfig,
) -> Result<(Tensor, NeuronSolve)> {
    if record.kind == NeuronKind::IdentityMetric {
        return Ok((
            rhs.clone(),
            NeuronSolve {
                neuron: record.id,
                residual: 0.0,
                iters: 0,
                breakdown: false,
            },
        ));
    }
    let p = build_preconditioner(moments, record.kind, cfg.var_floor)?;
    let m = MetricOperator::new(record, cfg.ridge);
    let out = pcg_solve(
        &m,
        rhs,
        &p,
        start,
        CgOptions {
            max_iters: cfg.cg_iters,
            tol: cfg.cg_tol,
        },
    )?;
    Ok((
        out.x,
        NeuronSolve {
            neuron: record.id,
            residual: out.residual_norm,
            iters: out.iters,
            breakdown: out.breakdown,
        },
    ))
}

/// Decay, normalize and step. `grad` is the vector `z` is measured against.
fn apply_update(
    params: &mut ParamSet,
    direction: &ParamSet,
    grad: &ParamSet,
    cfg: &LnbConfig,
    epsilon: Real,
    fail_on_negative_norm: bool,
) -> Result<(Real, Real)> {
    weight_decay(params, epsilon, cfg.weight_decay)?;
    let raw = direction.dot(grad)?;
    if fail_on_negative_norm && cfg.ridge > 0.0 && raw < -1e-12 {
        return Err(Error::numeric(format!(
            "metric norm θ̂·g = {raw:e} is negative although the ridge keeps every metric positive definite"
        )));
    }
    let (alpha, z) = if cfg.raw_step {
        (1.0, raw.max(cfg.min_norm))
    } else {
        adaptive_scale(direction, grad, epsilon, cfg.min_norm)?
    };
    params.axpy(-alpha, direction)?;
    if !params.is_finite() {
        return Err(Error::numeric(format!(
            "non-finite parameters after step (z = {z:e}, alpha = {alpha:e})"
        )));
    }
    Ok((alpha, z))
}

/// One step of full-batch LNB on `(batch, labels)` taken as the whole dataset.
pub fn lnb_step_fullbatch(
    params: &mut ParamSet,
    graph: &Graph,
    batch: &Tensor,
    labels: &Tensor,
    cfg: &LnbConfig,
    state: &mut LnbState,
) -> Result<StepDiagnostics> {
    cfg.validate()?;
    let epsilon = cfg.epsilon(state.t);
    let (loss, grads, records) = {
        let (loss, mut tape) = forward(graph, params, batch, labels)?;
        let grads = tape.backward()?;
        (loss, grads, tape.into_records())
    };

    let mut direction = Vec::with_capacity(records.len());
    let mut solves = Vec::with_capacity(records.len());
    for record in &records {
        let rhs = grads.get(record.id);
        let moments = if record.kind == NeuronKind::IdentityMetric {
            MomentState::new(0, 0.0)
        } else {
            MomentState::from_batch(&record.inputs)?
        };
        let (x, info) = solve_neuron(record, rhs, &moments, &Tensor::zeros_like(rhs), cfg)?;
        direction.push(x);
        solves.push(info);
    }
    let direction = ParamSet::new(direction);
    let (alpha, z) = apply_update(params, &direction, &grads, cfg, epsilon, true)?;
    let t = state.t;
    state.t += 1;
    Ok(StepDiagnostics {
        t,
        loss,
        z,
        alpha,
        epsilon,
        neurons: solves,
        direction,
    })
}

/// One step of online LNB on a mini-batch.
pub fn lnb_step_online(
    params: &mut ParamSet,
    graph: &Graph,
    batch: &Tensor,
    labels: &Tensor,
    cfg: &LnbConfig,
    state: &mut LnbState,
) -> Result<StepDiagnostics> {
    cfg.validate()?;
    let epsilon = cfg.epsilon(state.t);
    let (loss, grads, records) = {
        let (loss, mut tape) = forward(graph, params, batch, labels)?;
        let grads = tape.backward()?;
        (loss, grads, tape.into_records())
    };

    let grad_ema = match state.grad_ema.take() {
        None => grads,
        Some(mut ema) => {
            ema.scale_in_place(cfg.grad_decay);
            ema.axpy(1.0 - cfg.grad_decay, &grads)?;
            ema
        }
    };
    if state.moments.len() != records.len() {
        state.moments = vec![None; records.len()];
    }
    let warm = state
        .warm
        .take()
        .unwrap_or_else(|| ParamSet::zeros_like(&grad_ema));

    let mut direction = Vec::with_capacity(records.len());
    let mut solves = Vec::with_capacity(records.len());
    for record in &records {
        let slot = &mut state.moments[record.id.0];
        let moments = slot.get_or_insert_with(|| MomentState::new(record.in_dim(), cfg.moment_decay));
        if record.kind != NeuronKind::IdentityMetric {
            moments.decay = cfg.moment_decay;
            moments.update(&record.inputs)?;
        }
        let (x, info) = solve_neuron(record, grad_ema.get(record.id), moments, warm.get(record.id), cfg)?;
        direction.push(x);
        solves.push(info);
    }
    let direction = ParamSet::new(direction);
    let (alpha, z) = apply_update(params, &direction, &grad_ema, cfg, epsilon, false)?;
    state.warm = Some(direction.clone());
    state.grad_ema = Some(grad_ema);
    let t = state.t;
    state.t += 1;
    Ok(StepDiagnostics {
        t,
        loss,
        z,
        alpha,
        epsilon,
        neurons: solves,
        direction,
    })
}

/// LNB bundled with its state, dispatching on [`LnbConfig::mode`].
#[derive(Debug, Clone, Default)]
pub struct Lnb {
    pub config: LnbConfig,
    pub state: LnbState,
    pub last: Option<StepDiagnostics>,
}

impl Lnb {
    pub fn new(config: LnbConfig) -> Self {
        Lnb {
            config,
            state: LnbState::default(),
            last: None,
        }
    }

    pub fn step_with_diagnostics(
        &mut self,
        graph: &Graph,
        params: &mut ParamSet,
        batch: &Tensor,
        labels: &Tensor,
    ) -> Result<&StepDiagnostics> {
        let diag = match self.config.mode {
            LnbMode::FullBatch => lnb_step_fullbatch(params, graph, batch, labels, &self.config, &mut self.state)?,
            LnbMode::Online => lnb_step_online(params, graph, batch, labels, &self.config, &mut self.state)?,
        };
        Ok(self.last.insert(diag))
    }
}

impl Optimizer for Lnb {
    fn name(&self) -> &'static str {
        match self.config.mode {
            LnbMode::FullBatch => "lnb-fullbatch",
            LnbMode::Online => "lnb-online",
        }
    }

    fn step(&mut self, graph: &Graph, params: &mut ParamSet, batch: &Tensor, labels: &Tensor) -> Result<StepReport> {
        let d = self.step_with_diagnostics(graph, params, batch, labels)?;
        Ok(StepReport {
            loss: d.loss,
            alpha: d.alpha,
            z: d.z,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::GraphBuilder;

    fn scalar_problem() -> (Graph, Tensor, Tensor) {
        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let y = b.dense(x, 1, false);
        b.squared_loss(y);
        let col = |v: &[Real]| Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap();
        (b.build().unwrap(), col(&[1.0, 2.0]), col(&[2.0, 4.0]))
    }

    fn exact(epsilon: Real) -> LnbConfig {
        LnbConfig {
            schedule: vec![epsilon],
            ridge: 0.0,
            cg_iters: 4,
            cg_tol: 0.0,
            mode: LnbMode::FullBatch,
            ..Default::default()
        }
    }

    #[test]
    fn raw_step_is_the_ols_solution() {
        let (g, x, y) = scalar_problem();
        let mut params = ParamSet::zeros_for(&g);
        let cfg = LnbConfig {
            raw_step: true,
            ..exact(0.1)
        };
        let d = lnb_step_fullbatch(&mut params, &g, &x, &y, &cfg, &mut LnbState::default()).unwrap();
        assert!((d.direction.tensors()[0].item() + 2.0).abs() < 1e-15);
        assert!((params.tensors()[0].item() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_step_on_scalar_regression() {
        let (g, x, y) = scalar_problem();
        let mut params = ParamSet::zeros_for(&g);
        let d = lnb_step_fullbatch(&mut params, &g, &x, &y, &exact(0.1), &mut LnbState::default()).unwrap();
        assert!((d.z - 10.0).abs() < 1e-12);
        assert!((d.alpha - 0.1).abs() < 1e-12);
        assert!((params.tensors()[0].item() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_floors_norm_and_keeps_parameters() {
        let (g, x, y) = scalar_problem();
        let mut params = ParamSet::new(vec![Tensor::new(vec![1, 1], vec![2.0]).unwrap()]);
        let d = lnb_step_fullbatch(&mut params, &g, &x, &y, &exact(0.1), &mut LnbState::default()).unwrap();
        assert_eq!(d.z, 1e-8);
        assert_eq!(params.tensors()[0].item(), 2.0);
    }

    #[test]
    fn adaptive_scale_examples() {
        let one = ParamSet::new(vec![Tensor::vector(vec![1.0])]);
        let (a, z) = adaptive_scale(&one, &one, 0.01, 1e-8).unwrap();
        assert!((a - 0.1).abs() < 1e-15);
        assert_eq!(z, 1.0);
        let eps = ParamSet::new(vec![Tensor::vector(vec![0.01])]);
        let (a, _) = adaptive_scale(&one, &eps, 0.01, 1e-8).unwrap();
        assert!((a - 1.0).abs() < 1e-15);
        let neg = ParamSet::new(vec![Tensor::vector(vec![-0.5])]);
        let (a, z) = adaptive_scale(&one, &neg, 0.01, 1e-8).unwrap();
        assert_eq!(z, 1e-8);
        assert!((a - (0.01 * 1e8 as Real).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn weight_decay_examples() {
        let base = ParamSet::new(vec![Tensor::vector(vec![1.0, -2.0]), Tensor::vector(vec![4.0])]);
        let mut p = base.clone();
        weight_decay(&mut p, 0.04, 0.0).unwrap();
        assert_eq!(p, base);
        weight_decay(&mut p, 0.04, 0.5).unwrap();
        assert!((p.tensors()[1].item() - 3.6).abs() < 1e-15);
        let mut q = base.clone();
        for _ in 0..200 {
            weight_decay(&mut q, 0.04, 0.5).unwrap();
        }
        assert!(q.norm() < 1e-8 * base.norm());
        assert!(matches!(weight_decay(&mut q, 4.0, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn floored_norm_caps_the_step() {
        let (g, x, y) = scalar_problem();
        let mut params = ParamSet::zeros_for(&g);
        let cfg = LnbConfig {
            min_norm: 1e3,
            mode: LnbMode::Online,
            ..exact(0.1)
        };
        let d = lnb_step_online(&mut params, &g, &x, &y, &cfg, &mut LnbState::default()).unwrap();
        assert_eq!(d.z, 1e3);
        let step = params.norm();
        assert!((step - (0.1 / 1e3 as Real).sqrt() * d.direction.norm()).abs() < 1e-15);
    }

    #[test]
    fn warm_start_does_not_increase_residual() {
        let mut b = GraphBuilder::new();
        let x = b.input(3);
        let y = b.dense(x, 2, true);
        b.squared_loss(y);
        let g = b.build().unwrap();
        let mut r = crate::rng::stream(5, 0);
        let batch = crate::rng::normal(&mut r, &[30, 3], 1.0).add(&Tensor::filled(&[30, 3], 2.0)).unwrap();
        let labels = crate::rng::normal(&mut r, &[30, 2], 1.0);
        let cfg = LnbConfig {
            grad_decay: 0.0,
            moment_decay: 0.0,
            cg_iters: 1,
            ..LnbConfig::constant(1e-6)
        };
        let mut params = ParamSet::zeros_for(&g);
        let mut state = LnbState::default();
        let first = lnb_step_online(&mut params, &g, &batch, &labels, &cfg, &mut state).unwrap();
        let second = lnb_step_online(&mut params, &g, &batch, &labels, &cfg, &mut state).unwrap();
        assert!(second.neurons[0].residual <= first.neurons[0].residual);
    }

    #[test]
    fn identity_metric_neuron_skips_the_solver() {
        let mut b = GraphBuilder::new();
        let x = b.input(2);
        let s = b.add_parameter(x);
        b.squared_loss(s);
        let g = b.build().unwrap();
        let batch = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let labels = Tensor::zeros(&[2, 2]);
        let mut params = ParamSet::zeros_for(&g);
        let d = lnb_step_fullbatch(&mut params, &g, &batch, &labels, &exact(0.1), &mut LnbState::default()).unwrap();
        // θ̂ = g = mean(x) = (2, 3).
        assert_eq!(d.direction.tensors()[0].data(), &[2.0, 3.0]);
        assert_eq!(d.neurons[0].iters, 0);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (g, x, y) = scalar_problem();
        let mut params = ParamSet::zeros_for(&g);
        let cfg = LnbConfig {
            grad_decay: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            lnb_step_online(&mut params, &g, &x, &y, &cfg, &mut LnbState::default()),
            Err(Error::Config(_))
        ));
    }
}
