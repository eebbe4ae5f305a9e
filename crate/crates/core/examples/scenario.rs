//! Entry game with and without a leader-controlled duty on position
//! changes, at one market capacity.
//!
//!     cargo run --release --example scenario -- 8 40

use bilevel_abm::harness::{execute, ExperimentConfig};

fn main() -> bilevel_abm::Result<()> {
    let mut args = std::env::args().skip(1);
    let capacity: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(8.0);
    let iterations: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let mut taxed = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/scenario.toml").as_ref())?;
    taxed.training_iterations = iterations;
    taxed.env.insert("capacity".into(), capacity.into());
    let mut untaxed = taxed.clone();
    untaxed.env.insert("tax_enabled".into(), false.into());

    println!("capacity {capacity}, {iterations} iterations");
    for (label, cfg) in [("duty", &taxed), ("no duty", &untaxed)] {
        let run = execute(cfg, None)?;
        println!(
            "{label:>8}: demand σ {:.3}  mean |Δ%| {:.3}  mean duty {:.4}",
            run.mean("eval.demand_std").unwrap_or(f64::NAN),
            run.mean("eval.mapc").unwrap_or(f64::NAN),
            run.mean("step.eval.tax").unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
