use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grasp_ssl::harness::{self, ScenarioConfig};
use grasp_ssl::learner::LearnerKind;
use grasp_ssl::predictor::gradcheck::{run_gradcheck, GradCheckConfig};
use grasp_ssl::predictor::Architecture;
use grasp_ssl::Error;

#[derive(Parser)]
#[command(
    name = "grasp-ssl",
    version,
    about = "Self-supervised 6-DoF grasp learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write episodes.jsonl, curve.csv and summary.json.
    Run(Common),
    /// Run every configured learner on identical seeds and print a comparison table.
    Compare(Common),
    /// Run experiments across object speeds and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated speeds in m/s.
        #[arg(long, value_delimiter = ',')]
        speeds: Option<Vec<f64>>,
    },
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        /// Maximum accepted relative error.
        #[arg(long, default_value_t = grasp_ssl::predictor::gradcheck::DEFAULT_TOLERANCE)]
        tolerance: f64,
        /// Check every trunk parameter instead of a per-instance sample.
        #[arg(long)]
        full: bool,
        #[arg(long, env = "GRASP_SSL_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Recompute the summary from a JSONL log and compare with the stored one.
    Report {
        /// Run directory or episodes.jsonl path.
        path: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// ssl | supervised | reward
    #[arg(long)]
    learner: Option<String>,
    /// Comma-separated learners for compare and sweep.
    #[arg(long, value_delimiter = ',')]
    learners: Option<Vec<String>>,
    /// Comma-separated seeds for compare and sweep.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[arg(long, env = "GRASP_SSL_OUT", default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    log_observations: bool,
}

fn load_config(path: Option<&Path>) -> grasp_ssl::Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::default()),
    }
}

impl Common {
    fn resolve(&self) -> grasp_ssl::Result<ScenarioConfig> {
        let mut c = load_config(self.config.as_deref())?;
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(n) = self.episodes {
            c.episodes = n;
        }
        if let Some(l) = &self.learner {
            c.learner = l.parse()?;
        }
        if let Some(ls) = &self.learners {
            c.learners = ls
                .iter()
                .map(|l| l.parse())
                .collect::<grasp_ssl::Result<Vec<LearnerKind>>>()?;
        }
        if let Some(s) = &self.seeds {
            c.seeds = s.clone();
        }
        if let Some(s) = &self.scenario {
            c.scenario = s.parse()?;
        }
        if let Some(e) = self.eta {
            c.hyperparams.eta = e;
        }
        if let Some(l) = self.lambda {
            c.hyperparams.lambda = l;
        }
        if self.log_observations {
            c.log_observations = true;
        }
        c.validate()?;
        Ok(c)
    }
}

fn print_summary(s: &harness::MetricsSummary) {
    println!(
        "episodes {} | success {:.3} | first {} {:.3} | final {} {:.3} | retries {} | adaptation {}",
        s.episodes,
        s.success_rate,
        s.first_window,
        s.first_window_success_rate,
        s.final_window,
        s.final_window_success_rate,
        s.retries,
        s.adaptation
            .episode
            .map(|e| e.to_string())
            .unwrap_or_else(|| "not reached".into())
    );
}

fn execute(cli: Cli) -> grasp_ssl::Result<ExitCode> {
    match cli.command {
        Command::Run(common) => {
            let config = common.resolve()?;
            let result = harness::run_experiment(&config, Some(&common.out))?;
            println!(
                "{} on {} (seed {}) -> {}",
                config.learner,
                config.scenario,
                config.seed,
                common.out.display()
            );
            print_summary(&result.summary);
        }
        Command::Compare(common) => {
            let config = common.resolve()?;
            let cmp = harness::compare_learners(&config, Some(&common.out))?;
            print!("{}", harness::format_comparison(&cmp));
            println!("wrote {}", common.out.join("compare.csv").display());
        }
        Command::Sweep { common, speeds } => {
            let mut config = common.resolve()?;
            if let Some(s) = speeds {
                config.speeds = s;
                config.validate()?;
            }
            let rows = harness::velocity_sweep(&config, Some(&common.out))?;
            println!("{:>8} {:<30} {:>12}", "speed", "learner", "final-window");
            for r in &rows {
                println!(
                    "{:>8.3} {:<30} {:>11.1}%",
                    r.speed,
                    r.learner.display_name(),
                    100.0 * r.final_window_success_rate
                );
            }
            println!("wrote {}", common.out.join("sweep.csv").display());
        }
        Command::Gradcheck {
            config,
            seed,
            instances,
            tolerance,
            full,
            out,
        } => {
            let architecture: Architecture = load_config(config.as_deref())?.architecture()?;
            let gc = GradCheckConfig {
                architecture,
                instances,
                seed,
                tolerance,
                trunk_samples: if full {
                    None
                } else {
                    GradCheckConfig::default().trunk_samples
                },
                ..GradCheckConfig::default()
            };
            let started = std::time::Instant::now();
            let reports = run_gradcheck(&gc)?;
            let elapsed = started.elapsed().as_secs_f64();
            for r in &reports {
                println!(
                    "{:?}: {} components over {} instances, max relative error {:.3e} (tolerance {:.0e}) {}",
                    r.objective,
                    r.components_checked,
                    r.instances,
                    r.max_relative_error,
                    r.tolerance,
                    if r.passed { "PASS" } else { "FAIL" }
                );
            }
            println!("elapsed {elapsed:.2}s");
            harness::log::ensure_dir(&out)?;
            harness::log::write_json(&out.join("gradcheck.json"), &reports)?;
            if reports.iter().any(|r| !r.passed) {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Report { path } => {
            let rep = harness::report(&path)?;
            print_summary(&rep.summary);
            if !rep.inconsistent.is_empty() {
                return Err(Error::Log {
                    path,
                    message: format!(
                        "success flags disagree with the criterion at episodes {:?}",
                        rep.inconsistent
                    ),
                });
            }
            match rep.stored_summary_matches {
                Some(true) => println!("stored summary matches"),
                Some(false) => {
                    return Err(Error::Log {
                        path,
                        message: "stored summary differs from the recomputed one".into(),
                    })
                }
                None => println!("no stored summary to compare"),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io { .. } | Error::Log { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
