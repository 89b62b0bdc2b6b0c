//! Solves one neuron's metric system `M θ̂ = g` matrix-free with conjugate
//! gradient, with and without the whitening preconditioner, on inputs whose
//! features have very different means and scales.
//!
//! ```text
//! cargo run --release --example metric_solver
//! ```

use lnb::autodiff::{forward, GraphBuilder};
use lnb::metric::{build_preconditioner, pcg_solve, CgOptions, MetricOperator, MomentState, Preconditioner};
use lnb::models::init_params;
use lnb::{rng, Real};

fn main() -> lnb::Result<()> {
    let (n, d, k) = (500, 20, 3);
    let mut g = rng::stream(3, 0);
    let mut x = rng::normal(&mut g, &[n, d], 1.0);
    for i in 0..n {
        for (j, v) in x.row_mut(i).iter_mut().enumerate() {
            *v = *v * (1.0 + j as Real) + 3.0 * j as Real;
        }
    }
    let y = rng::normal(&mut g, &[n, k], 1.0);

    let mut b = GraphBuilder::new();
    let input = b.input(d);
    let out = b.dense(input, k, true);
    b.squared_loss(out);
    let graph = b.build()?;
    let params = init_params(&graph, 3);

    let (_, mut tape) = forward(&graph, &params, &x, &y)?;
    let grads = tape.backward()?;
    let record = &tape.records()[0];
    let rhs = grads.tensors()[0].clone();
    let metric = MetricOperator::new(record, 0.0);
    let whitener = build_preconditioner(&MomentState::from_batch(&record.inputs)?, record.kind, 1e-8)?;

    println!("iters  plain CG residual  whitened CG residual");
    for iters in [1, 2, 4, 8, 16, 21] {
        let opts = CgOptions { max_iters: iters, tol: 0.0 };
        let zero = rhs.map(|_| 0.0);
        let plain = pcg_solve(&metric, &rhs, &Preconditioner::Identity, &zero, opts)?;
        let white = pcg_solve(&metric, &rhs, &whitener, &zero, opts)?;
        println!("{iters:>5}  {:>17.3e}  {:>20.3e}", plain.residual_norm, white.residual_norm);
    }
    Ok(())
}
