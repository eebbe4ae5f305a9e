//! Train a government tax schedule against learning households and compare
//! it with the untaxed economy.
//!
//!     cargo run --release --example policy_design -- 30

use bilevel_abm::harness::{execute, ExperimentConfig};

fn main() -> bilevel_abm::Result<()> {
    let iterations: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mut taxed = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/policy-design.toml").as_ref())?;
    taxed.training_iterations = iterations;
    let mut free = taxed.clone();
    free.env.insert("free_market".into(), true.into());

    for (label, cfg) in [("trained government", &taxed), ("free market", &free)] {
        let run = execute(cfg, None)?;
        println!(
            "{label:>18}: welfare {:9.2}  asset gini {:.4}  income gini {:.4}",
            run.mean("eval.leader_return").unwrap_or(f64::NAN),
            run.mean("eval.gini_assets").unwrap_or(f64::NAN),
            run.mean("eval.gini_income").unwrap_or(f64::NAN),
        );
        if label == "trained government" {
            let theta: Vec<String> = (0..4)
                .filter_map(|i| run.mean(&format!("eval.theta_{i}")))
                .map(|v| format!("{v:.3}"))
                .collect();
            println!("{:>18}  tax parameters [{}]", "", theta.join(", "));
        }
    }
    Ok(())
}
