//! Optimizers: linear neuron boosting and the Adam baseline.

mod adam;
mod lnb;

pub use adam::{adam_step, Adam, AdamState};
pub use lnb::{
    adaptive_scale, lnb_step_fullbatch, lnb_step_online, weight_decay, Lnb, LnbConfig, LnbMode,
    LnbState, NeuronSolve, StepDiagnostics,
};

use crate::autodiff::{Graph, ParamSet};
use crate::{Real, Result, Tensor};

/// What every optimizer reports after one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Mini-batch loss before the update.
    pub loss: Real,
    /// Step scale (LNB `α`; NaN for optimizers without one).
    pub alpha: Real,
    /// Metric norm (LNB `z`; NaN for optimizers without one).
    pub z: Real,
}

/// A stateful training step over one batch.
pub trait Optimizer {
    fn name(&self) -> &'static str;

    fn step(
        &mut self,
        graph: &Graph,
        params: &mut ParamSet,
        batch: &Tensor,
        labels: &Tensor,
    ) -> Result<StepReport>;
}
