//! A single market maker policy trained across preferences drawn from a
//! maximum-entropy sampler, then quoted at each preference on the grid.
//!
//!     cargo run --release --example meta_market_maker -- 40

use bilevel_abm::harness::run::omega_label;
use bilevel_abm::harness::{execute, ExperimentConfig};
use bilevel_abm::learners::PreferenceGrid;

fn main() -> bilevel_abm::Result<()> {
    let iterations: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let mut cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/meta-mm.toml").as_ref())?;
    cfg.training_iterations = iterations;
    let run = execute(&cfg, None)?;

    println!(
        "preference entropy {:.4} (ln 5 = {:.4})",
        run.mean("outer.preference_entropy").unwrap_or(f64::NAN),
        5f64.ln()
    );
    println!("{:>6} {:>8} {:>8} {:>10}", "ω", "spread", "trades", "return");
    for &w in PreferenceGrid::default().values() {
        let label = omega_label(w);
        let get = |m: &str| run.mean(m).unwrap_or(f64::NAN);
        println!(
            "{w:>6} {:>8.3} {:>8.3} {:>10.2}",
            get(&format!("step.eval.{label}.spread")),
            get(&format!("step.eval.{label}.trades")),
            get(&format!("eval.{label}.follower_return")),
        );
    }
    Ok(())
}
