use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use uc_core::api::ApiConfig;
use uc_core::harness::{
    gen_instance, load_instance, merge_hourly, read_summary, report, run, save_instance, verify, write_run,
    Algorithm, RunConfig,
};

#[derive(Parser)]
#[command(name = "uc", version, about = "Unit commitment planners and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random instance.
    Gen {
        #[arg(short = 'N', long = "units")]
        units: usize,
        #[arg(short = 'T', long = "horizon")]
        horizon: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Solve an instance and write schedule.csv, hourly.csv and summary.json.
    Solve {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        algo: Algo,
        /// Lookahead in hours.
        #[arg(short = 'H', long = "lookahead", default_value_t = 1)]
        lookahead: usize,
        /// Actions sampled per search node.
        #[arg(short = 'K', long = "samples", default_value_t = 64)]
        samples: usize,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        /// States sampled per back sweep slice.
        #[arg(long, default_value_t = 50)]
        ns: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Seed the back sweep with a tree search terminal state, e.g. `tree:H=1`.
        #[arg(long)]
        warm_start: Option<String>,
        #[arg(long, default_value_t = ApiConfig::default().iterations)]
        iterations: usize,
        #[arg(long, default_value_t = ApiConfig::default().alpha)]
        alpha: f64,
        #[arg(long, default_value_t = ApiConfig::default().epsilon)]
        epsilon: f64,
        #[arg(long, default_value_t = ApiConfig::default().episodes)]
        episodes: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Cross-check the solvers against brute force on a small instance.
    Verify {
        #[arg(short, long)]
        input: PathBuf,
    },
    /// Tabulate finished runs, cheapest first.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the merged per-hour rows of all runs.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Tree,
    TreeSub,
    Backsweep,
    Api,
}

fn parse_warm_start(text: &str) -> anyhow::Result<usize> {
    let Some(h) = text.strip_prefix("tree:H=") else {
        bail!("warm start must look like tree:H=<k>, got {text:?}");
    };
    let h: usize = h.parse().with_context(|| format!("bad lookahead in {text:?}"))?;
    if h == 0 {
        bail!("warm start lookahead must be >= 1");
    }
    Ok(h)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Gen {
            units,
            horizon,
            seed,
            output,
        } => {
            if units == 0 || horizon == 0 {
                bail!("-N and -T must be >= 1");
            }
            let instance = gen_instance(units, horizon, seed);
            save_instance(&instance, &output).with_context(|| format!("writing {}", output.display()))?;
            println!("wrote {} (N={units}, T={horizon}, seed={seed})", output.display());
        }
        Command::Solve {
            input,
            algo,
            lookahead,
            samples,
            rho,
            ns,
            seed,
            threads,
            warm_start,
            iterations,
            alpha,
            epsilon,
            episodes,
            output,
        } => {
            let instance = load_instance(&input).with_context(|| format!("loading {}", input.display()))?;
            if warm_start.is_some() && !matches!(algo, Algo::Backsweep) {
                bail!("--warm-start only applies to --algo backsweep");
            }
            let algorithm = match algo {
                Algo::Tree => Algorithm::Tree { lookahead },
                Algo::TreeSub => Algorithm::TreeSub {
                    lookahead,
                    samples,
                    rho,
                },
                Algo::Backsweep => Algorithm::Backsweep {
                    samples_per_slice: ns,
                    warm_start_lookahead: warm_start.as_deref().map(parse_warm_start).transpose()?,
                },
                Algo::Api => Algorithm::Api(ApiConfig {
                    iterations,
                    alpha,
                    epsilon,
                    episodes,
                }),
            };
            let config = RunConfig {
                algorithm,
                seed,
                threads,
            };
            let result = run(&instance, &config)?;
            write_run(&output, &instance, &result).with_context(|| format!("writing {}", output.display()))?;
            let cost = &result.solution.cost;
            println!(
                "{}: objective {:.2} $ (generation {:.2}, start-up {:.2}) in {:.3} s",
                result.name, cost.objective, cost.generation_total, cost.startup_total, result.runtime_s
            );
        }
        Command::Verify { input } => {
            let instance = load_instance(&input).with_context(|| format!("loading {}", input.display()))?;
            let checks = verify(&instance)?;
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Report { dirs, csv } => {
            let summaries = dirs
                .iter()
                .map(|d| read_summary(d).with_context(|| format!("reading {}", d.display())))
                .collect::<anyhow::Result<Vec<_>>>()?;
            print!("{}", report(&summaries));
            if let Some(path) = csv {
                std::fs::write(&path, merge_hourly(&dirs)?).with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
