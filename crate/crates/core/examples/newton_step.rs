//! On linear least squares, one full-batch LNB step with the step size forced
//! to 1 is a Newton step: it lands on the ordinary least-squares solution.
//!
//! ```text
//! cargo run --release --example newton_step
//! ```

use lnb::autodiff::{forward, GraphBuilder, ParamSet};
use lnb::optim::{lnb_step_fullbatch, LnbConfig, LnbMode, LnbState};
use lnb::{rng, verify, Tensor};

fn main() -> lnb::Result<()> {
    let (n, d, k) = (200, 6, 2);
    let mut g = rng::stream(11, 0);
    let x = rng::normal(&mut g, &[n, d], 1.0);
    let y = rng::normal(&mut g, &[n, k], 1.0);

    let mut b = GraphBuilder::new();
    let input = b.input(d);
    let out = b.dense(input, k, true);
    b.squared_loss(out);
    let graph = b.build()?;

    let mut params = ParamSet::new(vec![Tensor::zeros(&[d + 1, k])]);
    let cfg = LnbConfig {
        mode: LnbMode::FullBatch,
        raw_step: true,
        ridge: 0.0,
        cg_iters: 50,
        cg_tol: 1e-14,
        ..LnbConfig::default()
    };
    let before = forward(&graph, &params, &x, &y)?.0;
    lnb_step_fullbatch(&mut params, &graph, &x, &y, &cfg, &mut LnbState::default())?;
    let after = forward(&graph, &params, &x, &y)?.0;

    let ols = verify::least_squares(&x, &y, true)?;
    let gap = params.tensors()[0].sub(&ols)?.norm() / ols.norm();
    println!("loss {before:.6} -> {after:.6}");
    println!("relative distance to the least-squares solution: {gap:.3e}");
    Ok(())
}
