//! Trains on the digits and on their inverted pixels `1 − x` with LNB and
//! Adam. Whitening makes LNB insensitive to the flip; Adam is not.
//!
//! ```text
//! cargo run --release --example inverted_pixels [epochs]
//! ```

use lnb::harness::runner::{invert_pixels, load_dataset, train_on};
use lnb::harness::{Experiment, ExperimentConfig};

fn config(epochs: &str, pairs: &[(&str, &str)]) -> lnb::Result<ExperimentConfig> {
    let data_dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/digits");
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("experiment", "mnist-mlp"),
        ("data_dir", data_dir),
        ("hidden", "400"),
        ("epochs", epochs),
    ]
    .iter()
    .chain(pairs)
    {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> lnb::Result<()> {
    let epochs = std::env::args().nth(1).unwrap_or_else(|| "4".into());
    let lnb_cfg = config(
        &epochs,
        &[("optimizer", "lnb-online"), ("epsilon", "1e-1"), ("epsilon_decay", "0.95"), ("ridge", "3e-1"), ("var_floor", "3e-1")],
    )?;
    let adam_cfg = config(&epochs, &[("optimizer", "adam"), ("lr", "1e-2")])?;

    let data = load_dataset(&lnb_cfg)?;
    let mut flipped = data.clone();
    invert_pixels(&mut flipped);

    for (name, cfg) in [("lnb", &lnb_cfg), ("adam", &adam_cfg)] {
        let plain = train_on(cfg, &data)?;
        let mut inv_cfg = cfg.clone();
        inv_cfg.experiment = Experiment::MnistMlpInverted;
        let inverted = train_on(&inv_cfg, &flipped)?;
        println!("{name}");
        println!("{:>7} {:>9} {:>9} {:>8}", "epoch", "x", "1 - x", "gap pp");
        for (a, b) in plain.rows.iter().zip(&inverted.rows) {
            let gap = 100.0 * (a.eval_metric - b.eval_metric).abs();
            println!("{:>7} {:>9.4} {:>9.4} {:>8.2}", a.epoch, a.eval_metric, b.eval_metric, gap);
        }
    }
    Ok(())
}
