//! Recover the distribution of producers' information-processing penalties
//! from a cobweb price series. Runs the RL
//! calibrator, the Bayesian-optimisation calibrator and the uncalibrated
//! default side by side on one synthetic target.
//!
//!     cargo run --release --example calibration -- 30

use bilevel_abm::envs::CobwebConfig;
use bilevel_abm::harness::{execute, synthetic_target, EnvConfig, ExperimentConfig, Outer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let iterations: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mut cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/calibrate.toml").as_ref())?;
    cfg.training_iterations = iterations;
    let env_cfg: CobwebConfig = match cfg.env_config()? {
        EnvConfig::Cobweb(c) => c,
        _ => unreachable!("calibrate runs the cobweb market"),
    };

    // Simulate the target once and share it between the three calibrators.
    let target = synthetic_target(&cfg, &env_cfg, None)?;
    let dir = std::env::temp_dir().join(format!("bilevel-calibration-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("target.txt");
    std::fs::write(&path, target.iter().map(|p| format!("{p}\n")).collect::<String>())?;
    println!("target: {} prices at (μ, σ) = {:?}", target.len(), cfg.calibration_config().target_theta);

    for outer in [Outer::Rl, Outer::Bayes, Outer::Fixed] {
        let mut c = cfg.clone();
        let mut cal = c.calibration_config();
        cal.outer = outer;
        cal.target_file = Some(path.clone());
        c.calibration = Some(cal);
        let run = execute(&c, None)?;
        println!(
            "{outer:?}: bootstrap MAE {:.4}  RMSE {:.4}  (μ, σ) = ({:.2}, {:.2})",
            run.mean("eval.bootstrap_mae").unwrap_or(f64::NAN),
            run.mean("eval.bootstrap_rmse").unwrap_or(f64::NAN),
            run.mean("eval.theta_0").unwrap_or(f64::NAN),
            run.mean("eval.theta_1").unwrap_or(f64::NAN),
        );
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
