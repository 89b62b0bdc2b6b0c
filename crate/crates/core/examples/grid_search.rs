//! Sweeps Adam's learning rate on the desk-scale matrix factorization and
//! picks the value with the lowest held-out loss. Cells that blow up are
//! reported and skipped.
//!
//! ```text
//! cargo run --release --example grid_search
//! ```

use lnb::harness::{grid_search, ExperimentConfig};

fn main() -> lnb::Result<()> {
    let mut base = ExperimentConfig::default();
    for (k, v) in [
        ("experiment", "matfac"),
        ("scale", "0.1"),
        ("epochs", "300"),
        ("optimizer", "adam"),
    ] {
        base.set(k, v)?;
    }
    let values: Vec<String> = ["1e-4", "1e-3", "1e-2", "1e-1", "1", "1e300"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let (report, best) = grid_search(&base, "lr", &values)?;
    println!("{report}");
    if let Some(cfg) = best {
        println!("winning config: {cfg}");
    }
    Ok(())
}
