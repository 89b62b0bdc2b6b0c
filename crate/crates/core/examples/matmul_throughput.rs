//! Times the dense product at the shapes an MNIST step uses.
//!
//! ```text
//! cargo run --release --example matmul_throughput
//! ```

use std::time::Instant;

use lnb::rng;
use lnb::tensor::{matmul, matmul_tn};

fn main() -> lnb::Result<()> {
    let mut g = rng::stream(0, 0);
    for &(m, k, n) in &[(1000, 784, 400), (1000, 400, 400), (1000, 800, 800), (1000, 400, 10)] {
        let a = rng::normal(&mut g, &[m, k], 1.0);
        let b = rng::normal(&mut g, &[k, n], 1.0);
        let reps = 5;
        let start = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(matmul(&a, &b)?);
        }
        let nn = start.elapsed().as_secs_f64() / reps as f64;
        let start = Instant::now();
        let u = rng::normal(&mut g, &[m, n], 1.0);
        for _ in 0..reps {
            std::hint::black_box(matmul_tn(&a, &u)?);
        }
        let tn = start.elapsed().as_secs_f64() / reps as f64;
        let flops = 2.0 * (m * k * n) as f64;
        println!(
            "{m}x{k} * {k}x{n}: {:.1} GFLOP/s (a·b), {:.1} GFLOP/s (aᵀ·u)",
            flops / nn / 1e9,
            flops / tn / 1e9
        );
    }
    Ok(())
}
