//! Per-neuron metric and the machinery to solve `M_i θ̂ = g_i` without forming `M_i`.
//!
//! For a dense neuron with captured inputs `X` (n × d) the metric is
//! `M = (1/n) X̃ᵀX̃`, the uncentered second moment of the (bias-augmented)
//! features. [`MetricOperator`] applies it as a JVP followed by a VJP. The
//! solver is preconditioned CG; its preconditioners come from EMA feature
//! moments: a diagonal second-moment inverse for bias-free neurons, and for
//! neurons with bias an incomplete-Cholesky whitener `W̃W̃ᵀ` whose covariance
//! block is replaced by its diagonal while the mean coupling is kept.

mod cg;
mod moments;
mod operator;
mod precond;
mod whitener;

pub use cg::{pcg_solve, CgOptions, CgOutcome};
pub use moments::{update_moments, MomentState};
pub use operator::{metric_apply, DenseOperator, LinearOperator, MetricOperator};
pub use precond::{build_preconditioner, Preconditioner, DEFAULT_VAR_FLOOR};
pub use whitener::{analytic_whitener, block_metric};

use crate::Real;

/// Per-column inner products of two tensors viewed as `rows × cols` (vectors are one column).
pub(crate) fn column_dots(a: &crate::Tensor, b: &crate::Tensor) -> Vec<Real> {
    let c = a.cols();
    let mut out = vec![0.0; c];
    for (k, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        out[k % c] += x * y;
    }
    out
}
