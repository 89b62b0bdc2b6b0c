//! Online LNB on the 784 → 400 → 400 → 10 tanh network, reporting test
//! accuracy, the step scale α and the metric norm z after every epoch.
//!
//! ```text
//! cargo run --release --example mnist_mlp [data_dir] [epochs]
//! ```
//!
//! `data_dir` holds the four standard IDX files, optionally gzipped. It
//! defaults to the bundled 8k/2k digits split.

use lnb::harness::runner::{load_dataset, train_on};
use lnb::harness::ExperimentConfig;

fn main() -> lnb::Result<()> {
    let mut args = std::env::args().skip(1);
    let bundled = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/digits");
    let data_dir = args.next().unwrap_or_else(|| bundled.to_string());
    let epochs = args.next().unwrap_or_else(|| "5".into());

    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("experiment", "mnist-mlp"),
        ("data_dir", data_dir.as_str()),
        ("hidden", "400"),
        ("layers", "2"),
        ("activation", "tanh"),
        ("epochs", epochs.as_str()),
        ("batch_size", "1000"),
        ("optimizer", "lnb-online"),
        ("epsilon", "1e-1"),
        ("epsilon_decay", "0.95"),
        ("ridge", "3e-1"),
        ("var_floor", "3e-1"),
    ] {
        cfg.set(k, v)?;
    }
    cfg.validate()?;

    let data = load_dataset(&cfg)?;
    println!("{} training and {} test images", data.train_x.rows(), data.eval_x.rows());
    let summary = train_on(&cfg, &data)?;
    println!("{:>5} {:>10} {:>10} {:>10} {:>10} {:>9}", "epoch", "loss", "accuracy", "alpha", "z", "time s");
    for r in &summary.rows {
        println!(
            "{:>5} {:>10.4} {:>10.4} {:>10.3e} {:>10.3e} {:>9.1}",
            r.epoch, r.train_loss, r.eval_metric, r.alpha, r.z, r.wall_time_s
        );
    }
    println!("{summary}");
    Ok(())
}
