//! Write two runs to disk and compare one metric between them, the same
//! way `bilevel compare` does.
//!
//!     cargo run --release --example compare_runs

use bilevel_abm::harness::{compare_runs, run_to_dir, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join(format!("bilevel-compare-{}", std::process::id()));
    let base = r#"
        task = "scenario"
        training_iterations = 5
        rollouts = 4
        [env]
        capacity = 8
        [learner]
        hidden = [16]
        learning_rate = 3e-3
        [leader]
        hidden = [16]
        learning_rate = 3e-3
    "#;
    let taxed = ExperimentConfig::from_toml(base)?;
    let mut untaxed = taxed.clone();
    untaxed.env.insert("tax_enabled".into(), false.into());

    let a = root.join("duty");
    let b = root.join("no-duty");
    run_to_dir(&taxed, &a, 1)?;
    run_to_dir(&untaxed, &b, 1)?;
    match compare_runs(&a, &b, "eval.demand_std")? {
        Ok(cmp) => print!("{}", cmp.to_text()),
        Err(missing) => println!("{} missing; shared metrics: {}", missing.metric, missing.available.join(", ")),
    }
    std::fs::remove_dir_all(&root)?;
    Ok(())
}
