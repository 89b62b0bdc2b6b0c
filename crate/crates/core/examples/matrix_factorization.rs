//! Two-layer linear network fit to an ill-conditioned map (κ = 1e5) at desk
//! scale: full-batch LNB against Adam under the same 500-step budget.
//!
//! ```text
//! cargo run --release --example matrix_factorization [seed]
//! ```

use lnb::harness::runner::{load_dataset, train_on};
use lnb::harness::ExperimentConfig;

fn config(seed: &str, pairs: &[(&str, &str)]) -> lnb::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [("experiment", "matfac"), ("scale", "0.1"), ("epochs", "500"), ("seed", seed)]
        .iter()
        .chain(pairs)
    {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> lnb::Result<()> {
    let seed = std::env::args().nth(1).unwrap_or_else(|| "0".into());
    let runs = [
        (
            "lnb eps=1e-2",
            config(&seed, &[("optimizer", "lnb-fullbatch"), ("epsilon", "1e-2"), ("epsilon_decay", "0.95"), ("ridge", "0"), ("cg_iters", "6")])?,
        ),
        ("adam lr=1e-2", config(&seed, &[("optimizer", "adam"), ("lr", "1e-2")])?),
        ("adam lr=1e-1", config(&seed, &[("optimizer", "adam"), ("lr", "1e-1")])?),
        ("adam lr=3e-1", config(&seed, &[("optimizer", "adam"), ("lr", "3e-1")])?),
    ];
    let data = load_dataset(&runs[0].1)?;
    println!("n = {}, inputs {}, targets {}", data.train_x.rows(), data.train_x.cols(), data.train_y.cols());

    let mut curves = Vec::new();
    for (name, cfg) in &runs {
        let summary = train_on(cfg, &data)?;
        curves.push((name, summary));
    }
    print!("{:>6}", "step");
    for (name, _) in &curves {
        print!("{name:>16}");
    }
    println!();
    for step in [1, 10, 50, 100, 200, 300, 400, 500] {
        print!("{step:>6}");
        for (_, s) in &curves {
            print!("{:>16.3e}", s.rows[step - 1].train_loss);
        }
        println!();
    }
    for (name, s) in &curves {
        println!("{name}: final train loss {:.3e}, held-out loss {:.3e}", s.final_train_loss, s.final_eval);
    }
    Ok(())
}
