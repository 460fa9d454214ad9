//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uc_core::api::{approximate_policy_iteration, features, random_feasible_rollout, ApiConfig};
use uc_core::backsweep::{evaluate_states, greedy_policy, BackSweepConfig, Sampling};
use uc_core::dispatch::{economic_dispatch, kkt_violation};
use uc_core::harness::{gen_instance, hourly_csv, load_instance, run, schedule_csv, Algorithm, RunConfig};
use uc_core::oracle::{exhaustive_optimum, grid_dispatch};
use uc_core::treesearch::{tree_search_policy, SearchConfig};
use uc_core::{CommitmentAction, GeneratorSpec, ProblemInstance, SystemState, UcEnv};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn bundled() -> ProblemInstance {
    load_instance(repo_root().join("instances/n12_t24.json")).expect("bundled instance loads")
}

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn c1_bundled_substitute() -> Outcome {
    let inst = bundled();
    check(inst == gen_instance(12, 24, 42), "bundled file differs from gen_instance(12, 24, 42)".into())?;
    check(
        inst.num_units() == 12 && inst.horizon() == 24,
        format!("bundled instance is N={} T={}", inst.num_units(), inst.horizon()),
    )?;
    let readme = std::fs::read_to_string(repo_root().join("README.md")).map_err(|e| format!("README: {e}"))?;
    check(
        readme.contains("not reproducible"),
        "README lacks the reproducibility disclosure".into(),
    )?;
    Ok("seed-42 N=12, T=24 instance bundled; README discloses that published dollar values are not reproducible".into())
}

fn c2_oracle_optimality() -> Outcome {
    let start = Instant::now();
    for seed in 0..20 {
        let env = UcEnv::new(gen_instance(3, 6, seed)).map_err(|e| e.to_string())?;
        let best = exhaustive_optimum(&env).map_err(|e| format!("seed {seed}: {e}"))?;
        let tree = tree_search_policy(&env, &env.initial_state(), &SearchConfig::full(6))
            .map_err(|e| format!("seed {seed}: {e}"))?;
        check(
            tree.objective() == best.objective(),
            format!("seed {seed}: tree {} vs optimum {}", tree.objective(), best.objective()),
        )?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 30.0, format!("took {secs:.1} s"))?;
    Ok(format!("20/20 instances (N=3, T=6) match the exhaustive optimum exactly in {secs:.2} s"))
}

fn c3_backsweep_exact() -> Outcome {
    let start = Instant::now();
    for seed in 0..10 {
        let env = UcEnv::new(gen_instance(2, 4, seed)).map_err(|e| e.to_string())?;
        let best = exhaustive_optimum(&env).map_err(|e| format!("seed {seed}: {e}"))?;
        let cfg = BackSweepConfig {
            sampling: Sampling::Exhaustive,
            ..BackSweepConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = evaluate_states(&env, &env.initial_state().retimed(4), &cfg, &mut rng)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let sweep = greedy_policy(&env, &values, &env.initial_state(), &cfg.metric)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        check(
            sweep.objective() == best.objective(),
            format!("seed {seed}: back sweep {} vs optimum {}", sweep.objective(), best.objective()),
        )?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 30.0, format!("took {secs:.1} s"))?;
    Ok(format!("10/10 instances (N=2, T=4) match the exhaustive optimum exactly in {secs:.2} s"))
}

fn random_unit(rng: &mut ChaCha8Rng, id: usize, max_width: f64) -> GeneratorSpec {
    let p_min = rng.gen_range(0.0..100.0);
    GeneratorSpec {
        id,
        a: if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.001..0.1) },
        b: rng.gen_range(5.0..40.0),
        c: rng.gen_range(0.0..500.0),
        e: 0.0,
        f: 0.0,
        g: 0.0,
        h: 0.0,
        p_min,
        p_max: p_min + rng.gen_range(1.0..max_width),
        t_up: 1,
        t_down: 1,
        initial_status: 1,
    }
}

fn c4_dispatch() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_kkt, mut worst_balance, mut worst_gap) = (0.0f64, 0.0f64, 0.0f64);
    let mut grid_cases = 0;
    for case in 0..2000 {
        // First half: at most three committed units, checked on the grid.
        let small = case < 1000;
        let fleet = if small { rng.gen_range(1..=5) } else { rng.gen_range(4..=12) };
        let width = if small { 20.0 } else { 200.0 };
        let gens: Vec<GeneratorSpec> = (0..fleet).map(|i| random_unit(&mut rng, i, width)).collect();
        let mask = loop {
            let m: u64 = rng.gen_range(1..(1u64 << fleet));
            let k = m.count_ones();
            if (small && k <= 3) || (!small && k >= 4) {
                break m;
            }
        };
        let action = CommitmentAction::from_mask(mask, fleet);
        let (lo, hi) = action
            .on_units()
            .fold((0.0, 0.0), |(l, h), i| (l + gens[i].p_min, h + gens[i].p_max));
        let demand = match rng.gen_range(0..20) {
            0 => lo,
            1 => hi,
            _ => rng.gen_range(lo..=hi),
        };
        let ed = economic_dispatch(&action, demand, &gens).map_err(|e| format!("case {case}: {e}"))?;
        worst_kkt = worst_kkt.max(kkt_violation(&ed, &action, &gens));
        let total: f64 = ed.power.iter().sum();
        worst_balance = worst_balance.max((total - demand).abs() / demand.max(f64::MIN_POSITIVE));
        if small {
            let grid = grid_dispatch(&action, demand, &gens, 0.01).map_err(|e| format!("case {case}: {e}"))?;
            check(
                grid.cost >= ed.cost - 1e-9 * ed.cost.abs(),
                format!("case {case}: grid {} undercuts dispatch {}", grid.cost, ed.cost),
            )?;
            worst_gap = worst_gap.max((grid.cost - ed.cost).abs());
            grid_cases += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst_kkt <= 1e-6, format!("optimality residual {worst_kkt:.3e}"))?;
    check(worst_balance <= 1e-9, format!("balance residual {worst_balance:.3e}"))?;
    check(worst_gap <= 0.1, format!("grid gap {worst_gap:.4} $"))?;
    check(secs < 60.0, format!("took {secs:.1} s"))?;
    Ok(format!(
        "2000 cases: optimality residual {worst_kkt:.1e}, balance {worst_balance:.1e}; \
         {grid_cases} grid cases, worst gap {worst_gap:.4} $; {secs:.2} s"
    ))
}

fn c5_scale() -> Outcome {
    let inst = bundled();
    let cfg = RunConfig {
        algorithm: Algorithm::Tree { lookahead: 1 },
        seed: 0,
        threads: 1,
    };
    let report = run(&inst, &cfg).map_err(|e| e.to_string())?;
    check(report.runtime_s < 300.0, format!("took {:.1} s", report.runtime_s))?;
    check(
        report.solution.hours.len() == 24,
        format!("schedule covers {} hours", report.solution.hours.len()),
    )?;
    Ok(format!(
        "H=1 on N=12, T=24: objective {:.2} $ in {:.3} s, self-audit passed",
        report.solution.objective(),
        report.runtime_s
    ))
}

fn c6_subsampling() -> Outcome {
    let env = UcEnv::new(bundled().truncated(8)).map_err(|e| e.to_string())?;
    let s0 = env.initial_state();
    let full = tree_search_policy(&env, &s0, &SearchConfig::full(3)).map_err(|e| e.to_string())?;
    let mut gaps = Vec::new();
    for seed in 0..5 {
        let sub = tree_search_policy(&env, &s0, &SearchConfig::subsampled(3, 64, 0.5, seed))
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let gap = (sub.objective() - full.objective()) / full.objective();
        check(
            sub.objective() >= full.objective(),
            format!("seed {seed}: sub-sampled {} below full {}", sub.objective(), full.objective()),
        )?;
        check(gap <= 0.01, format!("seed {seed}: gap {:.3}%", 100.0 * gap))?;
        gaps.push(gap);
    }
    let worst = gaps.iter().cloned().fold(0.0, f64::max);
    Ok(format!(
        "full H=3 {:.2} $; K=64, rho=0.5 over 5 seeds: worst gap {:.4}%, never below full",
        full.objective(),
        100.0 * worst
    ))
}

fn c7_features() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counted = 0;
    for n in [1usize, 2, 4, 8] {
        let env = UcEnv::new(gen_instance(n, 12, n as u64)).map_err(|e| e.to_string())?;
        for _ in 0..1000 {
            let status: Vec<i32> = (0..n)
                .map(|_| {
                    let k = rng.gen_range(1..=24);
                    if rng.gen_bool(0.5) {
                        k
                    } else {
                        -k
                    }
                })
                .collect();
            let s = SystemState::new(status, rng.gen_range(0..12));
            let a = CommitmentAction::from_mask(rng.gen_range(1..(1u64 << n)), n);
            let dense = features(&env, &s, &a).dense();
            check(dense.len() == 8 * n * n, format!("N={n}: dimension {}", dense.len()))?;
            let half = 4 * n * n;
            let first = dense[..half].contains(&1);
            let second = dense[half..].contains(&1);
            check(first != second, format!("N={n}: halves populated {first}/{second} for {s:?} {a}"))?;
            check(
                dense.iter().all(|&x| x <= 1),
                format!("N={n}: non-binary entry"),
            )?;
            counted += 1;
        }
    }
    Ok(format!("{counted} pairs at N in {{1, 2, 4, 8}}: dimension 8N², exactly one half populated"))
}

fn c8_api() -> Outcome {
    let env = UcEnv::new(gen_instance(4, 8, 42)).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = approximate_policy_iteration(&env, &ApiConfig::default(), &mut rng).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let replay = env
        .schedule_cost(&env.initial_state(), &out.schedule.plan())
        .map_err(|e| format!("schedule infeasible: {e}"))?;
    let mut memo = HashMap::new();
    let mut total = 0.0;
    for seed in 0..100 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        total += random_feasible_rollout(&env, &mut r, &mut memo)
            .map_err(|e| e.to_string())?
            .objective();
    }
    let mean = total / 100.0;
    let trained = out.history[1..]
        .iter()
        .flatten()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    check(replay.objective < mean, format!("API {} vs random mean {mean}", replay.objective))?;
    check(secs < 300.0, format!("took {secs:.1} s"))?;
    Ok(format!(
        "N=4, T=8: API {:.2} $ (iterate {}; best trained iterate {:.2} $) vs random mean {mean:.2} $ in {secs:.2} s",
        replay.objective, out.best_iteration, trained
    ))
}

fn c9_determinism() -> Outcome {
    let big = bundled();
    let small = gen_instance(4, 8, 42);
    let cases: Vec<(&ProblemInstance, Algorithm)> = vec![
        (&big, Algorithm::Tree { lookahead: 1 }),
        (
            &big,
            Algorithm::TreeSub {
                lookahead: 2,
                samples: 64,
                rho: 0.5,
            },
        ),
        (
            &big,
            Algorithm::Backsweep {
                samples_per_slice: 50,
                warm_start_lookahead: Some(1),
            },
        ),
        (&small, Algorithm::Api(ApiConfig::default())),
    ];
    let mut names = Vec::new();
    for (inst, algorithm) in cases {
        let mut first: Option<(String, String)> = None;
        for threads in [1, 1, 1, 4, 4, 4] {
            let cfg = RunConfig {
                algorithm: algorithm.clone(),
                seed: 17,
                threads,
            };
            let report = run(inst, &cfg).map_err(|e| e.to_string())?;
            let files = (
                schedule_csv(&report.solution).map_err(|e| e.to_string())?,
                hourly_csv(inst, &report.solution, &report.name).map_err(|e| e.to_string())?,
            );
            match &first {
                None => first = Some(files),
                Some(f) => check(f == &files, format!("{} differs with threads={threads}", report.name))?,
            }
        }
        names.push(algorithm.name());
    }
    Ok(format!("byte-identical CSVs over 3 runs at threads=1 and 3 at threads=4: {}", names.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("C1 bundled substitute instance", c1_bundled_substitute),
        ("C2 oracle optimality", c2_oracle_optimality),
        ("C3 back sweep exactness", c3_backsweep_exact),
        ("C4 dispatch correctness", c4_dispatch),
        ("C5 scale and runtime", c5_scale),
        ("C6 sub-sampling gap", c6_subsampling),
        ("C7 feature contract", c7_features),
        ("C8 API baseline viability", c8_api),
        ("C9 determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                println!("FAIL {name}: {detail}");
                failed += 1;
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
