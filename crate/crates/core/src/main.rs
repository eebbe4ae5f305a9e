use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bilevel_abm::harness::{self, compare_runs, exit_code, ExperimentConfig, Task};
use bilevel_abm::Error;

#[derive(Parser)]
#[command(name = "bilevel", version, about = "Train and compare leader-follower agent-based models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one experiment.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Run directory; overrides the config and the output root.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise one metric from two run directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Parse a config strictly and print it with defaults filled in.
    ValidateConfig { config: PathBuf },
    /// Print the available tasks.
    ListTasks,
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(&err) as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, seed, jobs, out } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = harness::output_dir(&cfg, out.as_deref());
            match harness::run_to_dir(&cfg, &dir, jobs) {
                Ok(m) => {
                    println!(
                        "{}: {} rows in {} ({:.1}s)",
                        m.experiment,
                        m.rows,
                        dir.display(),
                        m.wall_clock_seconds
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Compare { a, b, metric, format } => match compare_runs(&a, &b, &metric) {
            Ok(Ok(c)) => {
                match format {
                    Format::Text => print!("{}", c.to_text()),
                    Format::Csv => match c.to_csv() {
                        Ok(s) => print!("{s}"),
                        Err(e) => return fail(e),
                    },
                }
                ExitCode::SUCCESS
            }
            Ok(Err(missing)) => {
                eprintln!("error: metric `{}` is not present in both runs; available:", missing.metric);
                for m in missing.available {
                    eprintln!("  {m}");
                }
                ExitCode::from(2)
            }
            Err(e) => fail(e),
        },
        Command::ValidateConfig { config } => match ExperimentConfig::load(&config).and_then(|c| c.resolved()) {
            Ok(v) => {
                println!("{}", serde_json::to_string_pretty(&v).expect("json value serialises"));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::ListTasks => {
            for t in Task::ALL {
                println!("{:<14} {}", t.name(), t.description());
            }
            ExitCode::SUCCESS
        }
    }
}
