//! Instance files, seeded instance generation, solver runs and reporting.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::api::{approximate_policy_iteration, ApiConfig};
use crate::backsweep::{evaluate_states, greedy_policy, BackSweepConfig, Sampling};
use crate::dispatch::{economic_dispatch, kkt_violation};
use crate::error::{Result, UcError};
use crate::mdp::UcEnv;
use crate::model::{validate_instance, DemandProfile, GeneratorSpec, ProblemInstance};
use crate::oracle::{exact_dp, exhaustive_optimum, grid_dispatch, EXACT_DP_MAX_UNITS, EXHAUSTIVE_MAX_BITS};
use crate::solution::ScheduleSolution;
use crate::treesearch::{tree_search_policy, SearchConfig, SubsampleConfig};

/// On-disk layout of an instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    horizon: usize,
    demand_mw: Vec<f64>,
    reserve_mw: Vec<f64>,
    generators: Vec<GeneratorSpec>,
}

pub fn instance_to_json(instance: &ProblemInstance) -> String {
    let file = InstanceFile {
        horizon: instance.horizon(),
        demand_mw: instance.profile.demand.clone(),
        reserve_mw: instance.profile.reserve.clone(),
        generators: instance.generators.clone(),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("plain data serializes");
    out.push('\n');
    out
}

pub fn instance_from_json(text: &str) -> Result<ProblemInstance> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| UcError::Parse(e.to_string()))?;
    if file.demand_mw.len() != file.horizon {
        return Err(UcError::Parse(format!(
            "demand_mw has {} entries but horizon is {}",
            file.demand_mw.len(),
            file.horizon
        )));
    }
    if file.reserve_mw.len() != file.horizon {
        return Err(UcError::Parse(format!(
            "reserve_mw has {} entries but horizon is {}",
            file.reserve_mw.len(),
            file.horizon
        )));
    }
    let instance = ProblemInstance {
        generators: file.generators,
        profile: DemandProfile {
            demand: file.demand_mw,
            reserve: file.reserve_mw,
        },
    };
    let report = validate_instance(&instance);
    if !report.is_ok() {
        return Err(UcError::Validation(report));
    }
    Ok(instance)
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<ProblemInstance> {
    instance_from_json(&fs::read_to_string(path)?)
}

pub fn save_instance(instance: &ProblemInstance, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, instance_to_json(instance))?;
    Ok(())
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let k = 10f64.powi(decimals);
    (x * k).round() / k
}

/// Relative load at hour-of-day `x`: a morning shoulder and an evening peak
/// over a base that keeps the trough above three quarters of the peak.
fn daily_shape(x: f64) -> f64 {
    let bump = |centre: f64, width: f64| (-0.5 * ((x - centre) / width).powi(2)).exp();
    0.75 + 0.15 * bump(10.5, 2.5) + 0.25 * bump(19.0, 2.0)
}

/// Reproducible random instance with `n` units over `horizon` hours.
///
/// The daily load curve is stretched over the horizon and scaled so that
/// peak demand plus 10% reserve uses 80% of installed capacity. Every unit
/// starts on and free to switch. Because minimum outputs never exceed half
/// of capacity and the load trough stays above that, the all-on schedule is
/// always feasible.
pub fn gen_instance(n: usize, horizon: usize, seed: u64) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generators: Vec<GeneratorSpec> = (0..n)
        .map(|id| {
            let p_max = round_to(rng.gen_range(50.0..400.0), 1);
            let p_min = round_to(rng.gen_range(0.2..0.5) * p_max, 1);
            let a = round_to(rng.gen_range(0.001..0.05), 5);
            let b = round_to(rng.gen_range(5.0..30.0), 3);
            let c = round_to(rng.gen_range(50.0..500.0), 2);
            let mid = 0.5 * (p_min + p_max);
            let typical = a * mid * mid + b * mid + c;
            let startup = rng.gen_range(1.0..4.0) * typical;
            let split = rng.gen_range(0.2..0.8);
            let e = round_to(startup * split, 2);
            let f = round_to(startup * (1.0 - split), 2);
            let g = round_to(rng.gen_range(0.05..0.5), 3);
            let h = round_to(rng.gen_range(0.05..0.5), 3);
            let t_up = rng.gen_range(1..=4u32);
            let t_down = rng.gen_range(1..=4u32);
            GeneratorSpec {
                id,
                a,
                b,
                c,
                e,
                f,
                g,
                h,
                p_min,
                p_max,
                t_up,
                t_down,
                initial_status: t_up as i32,
            }
        })
        .collect();

    let capacity: f64 = generators.iter().map(|g| g.p_max).sum();
    let shape: Vec<f64> = (0..horizon)
        .map(|t| {
            let x = 24.0 * t as f64 / horizon as f64;
            daily_shape(x) * rng.gen_range(0.98..1.02)
        })
        .collect();
    let peak = shape.iter().copied().fold(0.0, f64::max);
    let scale = 0.8 * capacity / (1.1 * peak);
    // Round down so peak demand plus reserve never exceeds the 80% target.
    let demand: Vec<f64> = shape
        .iter()
        .map(|s| ((s * scale) * 100.0).floor() / 100.0)
        .collect();
    let reserve: Vec<f64> = demand.iter().map(|d| round_to(0.1 * d, 2)).collect();
    ProblemInstance {
        generators,
        profile: DemandProfile { demand, reserve },
    }
}

/// Solver selection with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum Algorithm {
    Tree {
        lookahead: usize,
    },
    TreeSub {
        lookahead: usize,
        samples: usize,
        rho: f64,
    },
    Backsweep {
        samples_per_slice: usize,
        /// Lookahead of the tree search whose terminal state seeds the sweep.
        warm_start_lookahead: Option<usize>,
    },
    Api(ApiConfig),
}

impl Algorithm {
    pub fn name(&self) -> String {
        match self {
            Algorithm::Tree { lookahead } => format!("Tree Search, H={lookahead}"),
            Algorithm::TreeSub {
                lookahead, samples, ..
            } => format!("Sub-sampled Tree Search, H={lookahead}, K={samples}"),
            Algorithm::Backsweep { samples_per_slice, .. } => {
                format!("Back Sweep, Ns={samples_per_slice}")
            }
            Algorithm::Api(_) => "API (perceptron tree)".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub threads: usize,
}

/// Outcome of one solver run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub name: String,
    pub config: RunConfig,
    pub solution: ScheduleSolution,
    pub runtime_s: f64,
}

/// The machine-readable run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: String,
    pub config: serde_json::Value,
    pub objective_usd: f64,
    pub generation_usd: f64,
    pub startup_usd: f64,
    pub runtime_s: f64,
    pub seed: u64,
}

impl RunReport {
    pub fn summary(&self) -> Summary {
        Summary {
            algorithm: self.name.clone(),
            config: serde_json::to_value(&self.config).expect("plain data serializes"),
            objective_usd: self.solution.cost.objective,
            generation_usd: self.solution.cost.generation_total,
            startup_usd: self.solution.cost.startup_total,
            runtime_s: self.runtime_s,
            seed: self.config.seed,
        }
    }
}

fn solve(env: &UcEnv, config: &RunConfig) -> Result<ScheduleSolution> {
    let s0 = env.initial_state();
    let threads = config.threads.max(1);
    match &config.algorithm {
        Algorithm::Tree { lookahead } => {
            tree_search_policy(env, &s0, &SearchConfig::full(*lookahead).with_threads(threads))
        }
        Algorithm::TreeSub {
            lookahead,
            samples,
            rho,
        } => {
            let cfg = SearchConfig {
                lookahead: *lookahead,
                subsample: Some(SubsampleConfig {
                    samples: *samples,
                    rho: *rho,
                    seed: config.seed,
                }),
                threads,
            };
            tree_search_policy(env, &s0, &cfg)
        }
        Algorithm::Backsweep {
            samples_per_slice,
            warm_start_lookahead,
        } => {
            let anchor = match warm_start_lookahead {
                Some(h) => {
                    let warm = tree_search_policy(env, &s0, &SearchConfig::full(*h).with_threads(threads))?;
                    warm.terminal_state
                }
                None => s0.retimed(env.horizon()),
            };
            let cfg = BackSweepConfig {
                sampling: Sampling::Neighborhood {
                    per_slice: *samples_per_slice,
                },
                threads,
                ..BackSweepConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let values = evaluate_states(env, &anchor, &cfg, &mut rng)?;
            greedy_policy(env, &values, &s0, &cfg.metric)
        }
        Algorithm::Api(api) => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            Ok(approximate_policy_iteration(env, api, &mut rng)?.schedule)
        }
    }
}

/// Runs one solver and audits its objective against an independent replay.
pub fn run(instance: &ProblemInstance, config: &RunConfig) -> Result<RunReport> {
    let env = UcEnv::new(instance.clone())?;
    let start = Instant::now();
    let solution = solve(&env, config)?;
    let runtime_s = start.elapsed().as_secs_f64();

    let fresh = UcEnv::new(instance.clone())?;
    let audit = fresh.schedule_cost(&fresh.initial_state(), &solution.plan())?;
    if audit != solution.cost {
        return Err(UcError::InvalidArgument(format!(
            "self-audit failed: solver reported {:?}, replay gives {:?}",
            solution.cost, audit
        )));
    }
    Ok(RunReport {
        name: config.algorithm.name(),
        config: config.clone(),
        solution,
        runtime_s,
    })
}

/// One oracle cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// Cross-checks the solvers against the brute-force oracles. Only small
/// instances qualify: `N · T` must not exceed the exhaustive search limit.
pub fn verify(instance: &ProblemInstance) -> Result<Vec<Check>> {
    let env = UcEnv::new(instance.clone())?;
    let (n, horizon) = (env.num_units(), env.horizon());
    let optimum = exhaustive_optimum(&env)?;
    let best = optimum.objective();
    let mut checks = vec![Check::new(
        "exhaustive optimum",
        true,
        format!("objective {best:.6} over {} bits", n * horizon),
    )];

    let tree = tree_search_policy(&env, &env.initial_state(), &SearchConfig::full(horizon))?;
    checks.push(Check::new(
        format!("tree search H={horizon} matches optimum"),
        tree.objective() == best,
        format!("{:.6} vs {best:.6}", tree.objective()),
    ));

    if n <= EXACT_DP_MAX_UNITS {
        let exact = exact_dp(&env)?;
        let v0 = exact.value(&env.initial_state()).unwrap_or(f64::NAN);
        let rel = (v0 + best).abs() / best.abs().max(1.0);
        checks.push(Check::new(
            "exact DP value matches optimum",
            rel <= 1e-12,
            format!("V0 {v0:.6}, relative gap {rel:.2e}"),
        ));
        let cfg = BackSweepConfig {
            sampling: Sampling::Exhaustive,
            ..BackSweepConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let values = evaluate_states(&env, &env.initial_state().retimed(horizon), &cfg, &mut rng)?;
        let sweep = greedy_policy(&env, &values, &env.initial_state(), &cfg.metric)?;
        checks.push(Check::new(
            "exhaustive back sweep matches optimum",
            sweep.objective() == best,
            format!("{:.6} vs {best:.6}", sweep.objective()),
        ));
    }

    let gens = &env.instance().generators;
    let mut worst_kkt: f64 = 0.0;
    let mut worst_balance: f64 = 0.0;
    let mut worst_grid: f64 = 0.0;
    for record in &optimum.hours {
        let demand = env.instance().profile.demand[record.hour];
        let result = economic_dispatch(&record.action, demand, gens)?;
        worst_kkt = worst_kkt.max(kkt_violation(&result, &record.action, gens));
        let total: f64 = result.power.iter().sum();
        worst_balance = worst_balance.max((total - demand).abs() / demand);
        let committed = record.action.count_on();
        if committed <= 3 {
            let step = if committed <= 2 { 0.01 } else { 0.1 };
            let grid = grid_dispatch(&record.action, demand, gens, step)?;
            worst_grid = worst_grid.max(result.cost - grid.cost);
        }
    }
    checks.push(Check::new(
        "dispatch optimality conditions",
        worst_kkt <= 1e-6,
        format!("worst violation {worst_kkt:.2e}"),
    ));
    checks.push(Check::new(
        "dispatch power balance",
        worst_balance <= 1e-9,
        format!("worst relative residual {worst_balance:.2e}"),
    ));
    checks.push(Check::new(
        "dispatch against grid search",
        worst_grid <= 0.1,
        format!("worst excess over grid {worst_grid:.4} $"),
    ));
    Ok(checks)
}

/// Largest `N · T` that [`verify`] accepts.
pub const VERIFY_MAX_BITS: usize = EXHAUSTIVE_MAX_BITS;

/// Per-unit, per-hour schedule rows.
pub fn schedule_csv(solution: &ScheduleSolution) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "hour",
        "unit_id",
        "committed",
        "power_mw",
        "gen_cost_usd",
        "startup_cost_usd",
    ])
    .map_err(csv_err)?;
    for rec in &solution.hours {
        for unit in 0..rec.power.len() {
            w.write_record([
                rec.hour.to_string(),
                unit.to_string(),
                u8::from(rec.action.is_on(unit)).to_string(),
                rec.power[unit].to_string(),
                rec.unit_generation_cost[unit].to_string(),
                rec.unit_startup_cost[unit].to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish_csv(w)
}

/// One row per hour with demand, commitment and running cost.
pub fn hourly_csv(instance: &ProblemInstance, solution: &ScheduleSolution, algorithm: &str) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write_hourly_header(&mut w)?;
    write_hourly_rows(&mut w, instance, solution, algorithm)?;
    finish_csv(w)
}

fn write_hourly_header<W: Write>(w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record([
        "algorithm",
        "hour",
        "demand_mw",
        "reserve_mw",
        "commitment",
        "dispatched_mw",
        "generation_usd",
        "startup_usd",
        "cumulative_usd",
    ])
    .map_err(csv_err)
}

fn write_hourly_rows<W: Write>(
    w: &mut csv::Writer<W>,
    instance: &ProblemInstance,
    solution: &ScheduleSolution,
    algorithm: &str,
) -> Result<()> {
    let mut cumulative = 0.0;
    for rec in &solution.hours {
        cumulative += rec.generation + rec.startup;
        w.write_record([
            algorithm.to_string(),
            rec.hour.to_string(),
            instance.profile.demand[rec.hour].to_string(),
            instance.profile.reserve[rec.hour].to_string(),
            rec.action.to_string(),
            rec.power.iter().sum::<f64>().to_string(),
            rec.generation.to_string(),
            rec.startup.to_string(),
            cumulative.to_string(),
        ])
        .map_err(csv_err)?;
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> UcError {
    UcError::Io(std::io::Error::other(e))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| UcError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `schedule.csv`, `hourly.csv` and `summary.json` into `dir`.
pub fn write_run(dir: impl AsRef<Path>, instance: &ProblemInstance, report: &RunReport) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("schedule.csv"), schedule_csv(&report.solution)?)?;
    fs::write(
        dir.join("hourly.csv"),
        hourly_csv(instance, &report.solution, &report.name)?,
    )?;
    let mut summary = serde_json::to_string_pretty(&report.summary()).expect("plain data serializes");
    summary.push('\n');
    fs::write(dir.join("summary.json"), summary)?;
    Ok(())
}

pub fn read_summary(dir: impl AsRef<Path>) -> Result<Summary> {
    let text = fs::read_to_string(dir.as_ref().join("summary.json"))?;
    serde_json::from_str(&text).map_err(|e| UcError::Parse(e.to_string()))
}

/// Comparison table over several runs, cheapest first.
pub fn report(summaries: &[Summary]) -> String {
    let mut rows: Vec<&Summary> = summaries.iter().collect();
    rows.sort_by(|a, b| a.objective_usd.total_cmp(&b.objective_usd).then_with(|| a.algorithm.cmp(&b.algorithm)));
    let width = rows
        .iter()
        .map(|s| s.algorithm.len())
        .chain(std::iter::once("Algorithm".len()))
        .max()
        .unwrap_or(9);
    let mut out = format!(
        "{:<width$} | {:>16} | {:>12}\n",
        "Algorithm", "Objective [$]", "Run-time [s]"
    );
    out.push_str(&format!("{}-+-{}-+-{}\n", "-".repeat(width), "-".repeat(16), "-".repeat(12)));
    for s in rows {
        out.push_str(&format!(
            "{:<width$} | {:>16.2} | {:>12.3}\n",
            s.algorithm, s.objective_usd, s.runtime_s
        ));
    }
    out
}

/// Concatenates the `hourly.csv` files of several run directories.
pub fn merge_hourly(dirs: &[impl AsRef<Path>]) -> Result<String> {
    let mut out = String::new();
    for (k, dir) in dirs.iter().enumerate() {
        let text = fs::read_to_string(dir.as_ref().join("hourly.csv"))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if k == 0 {
            out.push_str(header);
            out.push('\n');
        }
        for line in lines {
            out.push_str(line);
            out.push('\n');
        }
    }
    Ok(out)
}
