//! Brute-force ground truth for small instances.
//!
//! These solvers deliberately avoid the environment's enumeration and cost
//! tables: actions are tried over all `2^N` masks and filtered through the
//! checked transition, and step costs come straight from the cost formulas.

use std::collections::HashMap;

use crate::dispatch::{committed_range, DispatchResult};
use crate::error::{Result, UcError};
use crate::mdp::{CommitmentAction, SystemState, UcEnv, BIG};
use crate::model::{startup_cost, GeneratorSpec, COUNTER_CAP};
use crate::solution::ScheduleSolution;

/// Largest `N·T` the exhaustive enumeration accepts.
pub const EXHAUSTIVE_MAX_BITS: usize = 20;

/// Largest fleet for the full-state-space DP.
pub const EXACT_DP_MAX_UNITS: usize = 2;

/// Step cost with its own dispatch memo, keyed by (hour, mask).
struct StepCosts<'a> {
    env: &'a UcEnv,
    dispatch: HashMap<(usize, u64), f64>,
}

impl<'a> StepCosts<'a> {
    fn new(env: &'a UcEnv) -> Self {
        StepCosts {
            env,
            dispatch: HashMap::new(),
        }
    }

    fn cost(&mut self, s: &SystemState, a: &CommitmentAction) -> Result<f64> {
        let env = self.env;
        let dispatch = match self.dispatch.get(&(s.hour, a.mask())) {
            Some(&c) => c,
            None => {
                let c = env.dispatch(s.hour, a)?.cost;
                self.dispatch.insert((s.hour, a.mask()), c);
                c
            }
        };
        let gens = &env.instance().generators;
        let mut startup = 0.0;
        for i in a.on_units() {
            if s.status[i] < 0 {
                startup += startup_cost(&gens[i], -s.status[i])?;
            }
        }
        Ok(dispatch + startup)
    }

    /// All `2^N` masks in lexicographic order.
    fn all_actions(&self) -> Vec<CommitmentAction> {
        let n = self.env.num_units();
        let mut acts: Vec<_> = (0..1u64 << n)
            .map(|m| CommitmentAction::from_mask(m, n))
            .collect();
        acts.sort();
        acts
    }
}

/// Minimum-objective plan over every feasible action sequence from the
/// initial state. Ties go to the lexicographically smallest plan.
pub fn exhaustive_optimum(env: &UcEnv) -> Result<ScheduleSolution> {
    let bits = env.num_units() * env.horizon();
    if bits > EXHAUSTIVE_MAX_BITS {
        return Err(UcError::TooLarge(format!(
            "N·T = {bits} exceeds {EXHAUSTIVE_MAX_BITS}"
        )));
    }
    let mut costs = StepCosts::new(env);
    let actions = costs.all_actions();
    let mut best: Option<(f64, Vec<CommitmentAction>)> = None;
    let mut path = Vec::with_capacity(env.horizon());
    search(env, &mut costs, &actions, &env.initial_state(), 0.0, &mut path, &mut best)?;

    let (_, plan) = best.ok_or(UcError::NoFeasiblePlan)?;
    env.replay(&env.initial_state(), &plan)
}

fn search(
    env: &UcEnv,
    costs: &mut StepCosts<'_>,
    actions: &[CommitmentAction],
    s: &SystemState,
    so_far: f64,
    path: &mut Vec<CommitmentAction>,
    best: &mut Option<(f64, Vec<CommitmentAction>)>,
) -> Result<()> {
    if s.hour == env.horizon() {
        if best.as_ref().is_none_or(|(c, _)| so_far < *c) {
            *best = Some((so_far, path.clone()));
        }
        return Ok(());
    }
    for a in actions {
        let Ok(next) = env.transition(s, a) else {
            continue;
        };
        let step = costs.cost(s, a)?;
        path.push(*a);
        search(env, costs, actions, &next, so_far + step, path, best)?;
        path.pop();
    }
    Ok(())
}

/// Optimal values for every valid state of a tiny instance.
#[derive(Debug, Clone)]
pub struct ExactValues {
    /// `values[t]` maps each valid state at hour `t` to `v*(s)`.
    pub values: Vec<HashMap<SystemState, f64>>,
    /// Greedy plan read out from the initial state.
    pub plan: Vec<CommitmentAction>,
}

impl ExactValues {
    pub fn value(&self, s: &SystemState) -> Option<f64> {
        self.values.get(s.hour)?.get(s).copied()
    }
}

/// Every valid counter vector for `n` units, in ascending order.
pub fn all_status_vectors(n: usize) -> Vec<Vec<i32>> {
    let counters: Vec<i32> = (-COUNTER_CAP..=COUNTER_CAP).filter(|&x| x != 0).collect();
    let mut out: Vec<Vec<i32>> = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                counters.iter().map(move |&x| {
                    let mut v = prefix.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    out
}

/// Backward induction over the full state space.
///
/// Counters keep their full ±24 range since start-up cost depends on the true
/// off duration.
pub fn exact_dp(env: &UcEnv) -> Result<ExactValues> {
    let n = env.num_units();
    if n > EXACT_DP_MAX_UNITS {
        return Err(UcError::TooLarge(format!(
            "exact DP supports at most {EXACT_DP_MAX_UNITS} units, got {n}"
        )));
    }
    let horizon = env.horizon();
    let statuses = all_status_vectors(n);
    let mut costs = StepCosts::new(env);
    let actions = costs.all_actions();

    let mut values: Vec<HashMap<SystemState, f64>> = vec![HashMap::new(); horizon + 1];
    for status in &statuses {
        values[horizon].insert(SystemState::new(status.clone(), horizon), 0.0);
    }
    for t in (0..horizon).rev() {
        let mut slice = HashMap::with_capacity(statuses.len());
        for status in &statuses {
            let s = SystemState::new(status.clone(), t);
            let mut best = f64::NEG_INFINITY;
            for a in &actions {
                let Ok(next) = env.transition(&s, a) else {
                    continue;
                };
                let reward = -costs.cost(&s, a)?;
                let v = reward + values[t + 1][&next];
                if v > best {
                    best = v;
                }
            }
            slice.insert(s, if best.is_finite() { best } else { -BIG });
        }
        values[t] = slice;
    }

    let mut plan = Vec::with_capacity(horizon);
    let mut s = env.initial_state();
    while s.hour < horizon {
        let mut chosen: Option<(f64, CommitmentAction, SystemState)> = None;
        for a in &actions {
            let Ok(next) = env.transition(&s, a) else {
                continue;
            };
            let v = -costs.cost(&s, a)? + values[s.hour + 1][&next];
            if chosen.as_ref().is_none_or(|(best, _, _)| v > *best) {
                chosen = Some((v, *a, next));
            }
        }
        let (_, a, next) = chosen.ok_or(UcError::NoFeasiblePlan)?;
        plan.push(a);
        s = next;
    }
    Ok(ExactValues { values, plan })
}

/// Exhaustive grid search over dispatches of at most three committed units.
///
/// All but one unit step through `p_min, p_min + step, …, p_max`; the
/// remaining unit takes what is left so balance holds exactly.
pub fn grid_dispatch(
    action: &CommitmentAction,
    demand: f64,
    gens: &[GeneratorSpec],
    step: f64,
) -> Result<DispatchResult> {
    let committed: Vec<usize> = action.on_units().collect();
    if committed.len() > 3 {
        return Err(UcError::TooLarge(format!(
            "grid dispatch supports at most 3 committed units, got {}",
            committed.len()
        )));
    }
    if step.is_nan() || step <= 0.0 {
        return Err(UcError::InvalidArgument(format!("grid step must be positive, got {step}")));
    }
    let (min_mw, max_mw) = committed_range(action, gens);
    let infeasible = || UcError::InfeasibleDispatch {
        demand,
        min_mw,
        max_mw,
    };
    if committed.is_empty() {
        return Err(infeasible());
    }

    let cost = |g: &GeneratorSpec, p: f64| g.a * p * p + g.b * p + g.c;
    let grid = |g: &GeneratorSpec| -> Vec<f64> {
        let k_max = ((g.p_max - g.p_min) / step).floor() as usize;
        let mut pts: Vec<f64> = (0..=k_max).map(|k| g.p_min + k as f64 * step).collect();
        if pts.last().is_none_or(|&p| p < g.p_max) {
            pts.push(g.p_max);
        }
        pts
    };
    // The remainder is a difference of sums, so allow it rounding slack at
    // the bounds and clamp it back.
    let tol = 1e-9 * demand.abs().max(1.0);
    let fit = |g: &GeneratorSpec, p: f64| (p >= g.p_min - tol && p <= g.p_max + tol).then(|| p.clamp(g.p_min, g.p_max));

    // Every unit takes a turn as the one absorbing the remainder, so an
    // interior optimum never has to sit on another unit's grid.
    let mut best: Option<(f64, Vec<(usize, f64)>)> = None;
    let mut consider = |powers: Vec<(usize, f64)>| {
        let c: f64 = committed
            .iter()
            .map(|&i| {
                let p = powers.iter().find(|(u, _)| *u == i).expect("every unit set").1;
                cost(&gens[i], p)
            })
            .sum();
        if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
            best = Some((c, powers));
        }
    };

    let k = committed.len();
    for r in 0..k {
        let order: Vec<usize> = (0..k).map(|x| committed[(r + 1 + x) % k]).collect();
        match order.as_slice() {
            [i] => {
                if let Some(p) = fit(&gens[*i], demand) {
                    consider(vec![(*i, p)]);
                }
            }
            [i, j] => {
                for p in grid(&gens[*i]) {
                    if let Some(rest) = fit(&gens[*j], demand - p) {
                        consider(vec![(*i, p), (*j, rest)]);
                    }
                }
            }
            [i, j, k] => {
                let (gi, gj, gk) = (&gens[*i], &gens[*j], &gens[*k]);
                let pj_grid = grid(gj);
                for pi in grid(gi) {
                    // Only the slice of unit j's grid that leaves unit k in bounds.
                    let lo = demand - pi - gk.p_max - tol;
                    let hi = demand - pi - gk.p_min + tol;
                    let start = pj_grid.partition_point(|&p| p < lo);
                    for &pj in pj_grid[start..].iter().take_while(|&&p| p <= hi) {
                        if let Some(pk) = fit(gk, demand - pi - pj) {
                            consider(vec![(*i, pi), (*j, pj), (*k, pk)]);
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    let (cost_total, powers) = best.ok_or_else(infeasible)?;
    let mut power = vec![0.0; gens.len()];
    for (i, p) in powers {
        power[i] = p;
    }
    let lambda = committed
        .iter()
        .map(|&i| gens[i].marginal_cost(power[i]))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(DispatchResult {
        power,
        lambda,
        cost: cost_total,
        degenerate_tie: false,
    })
}
