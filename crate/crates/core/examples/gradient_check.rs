//! Builds a small tanh network, runs reverse mode, and compares every
//! parameter gradient with a central finite difference.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use lnb::autodiff::{forward, GraphBuilder, ParamSet};
use lnb::models::init_params;
use lnb::{rng, Real, Tensor};

fn main() -> lnb::Result<()> {
    let mut b = GraphBuilder::new();
    let x = b.input(5);
    let h = b.dense(x, 4, true);
    let h = b.tanh(h);
    let h = b.append_constant(h, 1.0);
    let logits = b.dense(h, 3, false);
    b.softmax_cross_entropy(logits);
    let graph = b.build()?;

    let mut g = rng::stream(7, 0);
    let batch = rng::normal(&mut g, &[6, 5], 1.0);
    let labels = Tensor::vector(vec![0.0, 2.0, 1.0, 1.0, 0.0, 2.0]);
    let params = init_params(&graph, 7);

    let (loss, mut tape) = forward(&graph, &params, &batch, &labels)?;
    let grads = tape.backward()?.flatten();
    println!("loss {loss:.6}, {} parameters", grads.len());

    let flat = params.flatten();
    let h = 1e-5;
    let mut worst: Real = 0.0;
    for i in 0..flat.len() {
        let eval = |delta: Real| -> lnb::Result<Real> {
            let mut p = flat.clone();
            p[i] += delta;
            Ok(forward(&graph, &ParamSet::unflatten(&params, &p)?, &batch, &labels)?.0)
        };
        let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
        worst = worst.max((fd - grads[i]).abs());
    }
    println!("largest |backward - finite difference| = {worst:.3e}");
    Ok(())
}
