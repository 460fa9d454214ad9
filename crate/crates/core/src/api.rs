//! Approximate policy iteration baseline.
//!
//! Each iteration evaluates the current policy with SARSA on binary
//! state-action features, then trains a per-hour tree of perceptrons
//! towards the Q-greedy action on every state the episodes visited.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UcError};
use crate::mdp::{CommitmentAction, SystemState, UcEnv, BIG};
use crate::solution::ScheduleSolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApiConfig {
    /// Policy iterations.
    pub iterations: usize,
    pub alpha: f64,
    pub epsilon: f64,
    /// SARSA episodes per iteration.
    pub episodes: usize,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            iterations: 10,
            alpha: 0.01,
            epsilon: 0.1,
            episodes: 500,
        }
    }
}

impl ApiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(UcError::InvalidArgument("iterations must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(UcError::InvalidArgument(format!("alpha {} not in (0, 1]", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(UcError::InvalidArgument(format!("epsilon {} not in [0, 1]", self.epsilon)));
        }
        if self.episodes == 0 {
            return Err(UcError::InvalidArgument("episodes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Zone of a status counter relative to the unit's lock times.
fn zone(status: i32, t_up: u32, t_down: u32) -> usize {
    let (t_up, t_down) = (t_up as i32, t_down as i32);
    match status {
        s if s < -t_down => 0,
        s if s < 0 => 1,
        s if s <= t_up => 2,
        _ => 3,
    }
}

/// Index of the set zone bit for every unit: `4 i + zone`.
pub fn state_features(env: &UcEnv, s: &SystemState) -> Vec<usize> {
    env.instance()
        .generators
        .iter()
        .zip(&s.status)
        .enumerate()
        .map(|(i, (g, &x))| 4 * i + zone(x, g.t_up, g.t_down))
        .collect()
}

/// Binary state-action features, stored as the sorted indices of the ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    pub dim: usize,
    pub active: Vec<usize>,
}

impl FeatureVector {
    pub fn dense(&self) -> Vec<u8> {
        let mut v = vec![0u8; self.dim];
        for &i in &self.active {
            v[i] = 1;
        }
        v
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.active.iter().map(|&i| w[i]).sum()
    }
}

pub fn feature_dim(n: usize) -> usize {
    8 * n * n
}

/// The `4N` zone block repeated once per unit `j` (kept only if `a[j]` is
/// on), placed in the first half when the successor is safe and in the
/// second when it is a catastrophe.
pub fn features(env: &UcEnv, s: &SystemState, a: &CommitmentAction) -> FeatureVector {
    let n = env.num_units();
    let block = 4 * n;
    let next = env.transition_unchecked(s, a.mask());
    let half = if env.is_catastrophe(&next) { block * n } else { 0 };
    let zones = state_features(env, s);
    let mut active = Vec::with_capacity(zones.len() * a.count_on());
    for j in a.on_units() {
        active.extend(zones.iter().map(|z| half + j * block + z));
    }
    FeatureVector {
        dim: feature_dim(n),
        active,
    }
}

/// One linear Q weight vector per hour.
#[derive(Debug, Clone, PartialEq)]
pub struct QWeights {
    pub per_step: Vec<Vec<f64>>,
}

impl QWeights {
    pub fn zeros(env: &UcEnv) -> Self {
        QWeights {
            per_step: vec![vec![0.0; feature_dim(env.num_units())]; env.horizon()],
        }
    }

    pub fn q(&self, hour: usize, phi: &FeatureVector) -> f64 {
        phi.dot(&self.per_step[hour])
    }
}

/// Feasible action with the highest linear score; ties go to the
/// lexicographically smallest.
pub fn greedy_action_from_q(env: &UcEnv, w: &[f64], s: &SystemState) -> Result<CommitmentAction> {
    let mut best: Option<(CommitmentAction, f64)> = None;
    for a in env.feasible_actions(s) {
        let score = features(env, s, &a).dot(w);
        if best.as_ref().is_none_or(|(_, b)| score > *b) {
            best = Some((a, score));
        }
    }
    best.map(|(a, _)| a).ok_or(UcError::NoFeasibleAction { step: s.hour })
}

/// Feasible action closest in Hamming distance to `mask`, preferring ones
/// whose successor is not a catastrophe; ties go to the lexicographically
/// smallest.
pub fn project_to_feasible(env: &UcEnv, s: &SystemState, mask: u64) -> Result<CommitmentAction> {
    let mut best: Option<((bool, u32), u64)> = None;
    env.for_each_feasible(s, |m| {
        let doomed = env.is_catastrophe(&env.transition_unchecked(s, m));
        let key = (doomed, (m ^ mask).count_ones());
        if best.is_none_or(|(k, _)| key < k) {
            best = Some((key, m));
        }
        true
    });
    best.map(|(_, m)| env.action(m))
        .ok_or(UcError::NoFeasibleAction { step: s.hour })
}

/// Per-hour binary trees of perceptrons; the node at depth `d` decides the
/// bit of unit `d` from the state's zone indicators.
#[derive(Debug, Clone, Default)]
pub struct PerceptronTreePolicy {
    trees: Vec<HashMap<(usize, u64), Vec<f64>>>,
}

impl PerceptronTreePolicy {
    pub fn new(horizon: usize) -> Self {
        PerceptronTreePolicy {
            trees: vec![HashMap::new(); horizon],
        }
    }

    /// Number of allocated nodes across all hours.
    pub fn node_count(&self) -> usize {
        self.trees.iter().map(HashMap::len).sum()
    }

    /// Raw bits emitted by the tree before feasibility projection.
    pub fn predict_mask(&self, env: &UcEnv, s: &SystemState) -> u64 {
        let x = state_features(env, s);
        let tree = &self.trees[s.hour];
        let mut prefix = 0u64;
        for d in 0..env.num_units() {
            let score = tree
                .get(&(d, prefix))
                .map_or(0.0, |w| x.iter().map(|&i| w[i]).sum());
            if score >= 0.0 {
                prefix |= 1 << d;
            }
        }
        prefix
    }

    pub fn classify(&self, env: &UcEnv, s: &SystemState) -> Result<CommitmentAction> {
        project_to_feasible(env, s, self.predict_mask(env, s))
    }

    /// Perceptron step at every node on the target's path. Returns the
    /// number of nodes that were corrected.
    pub fn update_classifier(&mut self, env: &UcEnv, s: &SystemState, target: &CommitmentAction) -> usize {
        let n = env.num_units();
        let x = state_features(env, s);
        let tree = &mut self.trees[s.hour];
        let mut prefix = 0u64;
        let mut corrected = 0;
        for d in 0..n {
            let w = tree.entry((d, prefix)).or_insert_with(|| vec![0.0; 4 * n]);
            let score: f64 = x.iter().map(|&i| w[i]).sum();
            let bit = target.is_on(d);
            if (score >= 0.0) != bit {
                let sign = if bit { 1.0 } else { -1.0 };
                for &i in &x {
                    w[i] += sign;
                }
                corrected += 1;
            }
            if bit {
                prefix |= 1 << d;
            }
        }
        corrected
    }
}

/// What one round of SARSA produced.
#[derive(Debug, Clone)]
pub struct SarsaRun {
    pub weights: QWeights,
    /// Distinct non-terminal states in order of first visit.
    pub visited: Vec<SystemState>,
    /// Episodes that ran into a state with no feasible action.
    pub catastrophes: usize,
}

fn behaviour_action<R: Rng + ?Sized>(
    env: &UcEnv,
    policy: &PerceptronTreePolicy,
    s: &SystemState,
    epsilon: f64,
    rng: &mut R,
) -> Result<Option<CommitmentAction>> {
    if !env.has_feasible_action(s) {
        return Ok(None);
    }
    if epsilon > 0.0 && rng.gen_bool(epsilon) {
        let masks = env.feasible_masks(s);
        let m = *masks.choose(rng).expect("non-empty");
        return Ok(Some(env.action(m)));
    }
    policy.classify(env, s).map(Some)
}

/// Evaluates `policy` with epsilon-greedy SARSA, starting each episode at
/// the initial state. Weights start at zero.
pub fn sarsa_evaluate<R: Rng + ?Sized>(
    env: &UcEnv,
    policy: &PerceptronTreePolicy,
    alpha: f64,
    epsilon: f64,
    episodes: usize,
    rng: &mut R,
) -> Result<SarsaRun> {
    let horizon = env.horizon();
    let mut weights = QWeights::zeros(env);
    let mut visited = Vec::new();
    let mut seen = HashSet::new();
    let mut catastrophes = 0;
    let s0 = env.initial_state();

    for _ in 0..episodes {
        let mut s = s0.clone();
        let Some(mut a) = behaviour_action(env, policy, &s, epsilon, rng)? else {
            catastrophes += 1;
            continue;
        };
        loop {
            if seen.insert(s.clone()) {
                visited.push(s.clone());
            }
            let phi = features(env, &s, &a);
            let reward = -env.step_cost(&s, a.mask())?;
            let next = env.transition(&s, &a)?;
            let (target, next_action) = if next.hour == horizon {
                (reward, None)
            } else {
                match behaviour_action(env, policy, &next, epsilon, rng)? {
                    Some(a2) => {
                        let q_next = weights.q(next.hour, &features(env, &next, &a2));
                        (reward + q_next, Some(a2))
                    }
                    None => {
                        catastrophes += 1;
                        (reward - BIG, None)
                    }
                }
            };
            let w = &mut weights.per_step[s.hour];
            let delta = target - phi.dot(w);
            for &i in &phi.active {
                w[i] += alpha * delta;
            }
            match next_action {
                Some(a2) => {
                    s = next;
                    a = a2;
                }
                None => break,
            }
        }
    }
    Ok(SarsaRun {
        weights,
        visited,
        catastrophes,
    })
}

/// Deterministic rollout of a policy from the initial state.
pub fn rollout(env: &UcEnv, policy: &PerceptronTreePolicy) -> Result<ScheduleSolution> {
    let s0 = env.initial_state();
    let mut s = s0.clone();
    let mut plan = Vec::with_capacity(env.horizon());
    while s.hour < env.horizon() {
        let a = policy.classify(env, &s)?;
        s = env.transition(&s, &a)?;
        plan.push(a);
    }
    env.replay(&s0, &plan)
}

#[derive(Debug, Clone)]
pub struct ApiOutcome {
    /// Policy with the cheapest rollout seen, the untrained one included.
    pub policy: PerceptronTreePolicy,
    /// Iteration that produced `policy`; 0 is the untrained tree.
    pub best_iteration: usize,
    /// Weights of the last SARSA evaluation.
    pub weights: QWeights,
    pub schedule: ScheduleSolution,
    /// Rollout objective after each iteration, starting with the untrained
    /// tree; `None` where the rollout got stuck.
    pub history: Vec<Option<f64>>,
}

/// Alternates SARSA evaluation with classifier improvement on the visited
/// states. Approximate improvement is not monotone, so every iterate is
/// rolled out and the cheapest one is kept.
pub fn approximate_policy_iteration<R: Rng + ?Sized>(
    env: &UcEnv,
    cfg: &ApiConfig,
    rng: &mut R,
) -> Result<ApiOutcome> {
    cfg.validate()?;
    let mut policy = PerceptronTreePolicy::new(env.horizon());
    let mut weights = QWeights::zeros(env);
    let mut best: Option<(PerceptronTreePolicy, usize, ScheduleSolution)> = None;
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    for k in 0..=cfg.iterations {
        if k > 0 {
            let run = sarsa_evaluate(env, &policy, cfg.alpha, cfg.epsilon, cfg.episodes, rng)?;
            for s in &run.visited {
                let target = greedy_action_from_q(env, &run.weights.per_step[s.hour], s)?;
                policy.update_classifier(env, s, &target);
            }
            weights = run.weights;
        }
        let schedule = rollout(env, &policy).ok();
        history.push(schedule.as_ref().map(ScheduleSolution::objective));
        if let Some(schedule) = schedule {
            if best.as_ref().is_none_or(|(_, _, b)| schedule.objective() < b.objective()) {
                best = Some((policy.clone(), k, schedule));
            }
        }
    }
    let (policy, best_iteration, schedule) = best.ok_or(UcError::NoFeasiblePlan)?;
    Ok(ApiOutcome {
        policy,
        best_iteration,
        weights,
        schedule,
        history,
    })
}

/// Whether some sequence of feasible actions carries `s` to the end of the
/// horizon. Answers are memoised per state.
pub fn completable(env: &UcEnv, s: &SystemState, memo: &mut HashMap<SystemState, bool>) -> bool {
    if s.hour >= env.horizon() {
        return true;
    }
    if let Some(&known) = memo.get(s) {
        return known;
    }
    let mut found = false;
    env.for_each_feasible(s, |m| {
        found = completable(env, &env.transition_unchecked(s, m), memo);
        !found
    });
    memo.insert(s.clone(), found);
    found
}

/// Rollout choosing uniformly, at every hour, among the feasible actions
/// that still allow a complete schedule.
pub fn random_feasible_rollout<R: Rng + ?Sized>(
    env: &UcEnv,
    rng: &mut R,
    memo: &mut HashMap<SystemState, bool>,
) -> Result<ScheduleSolution> {
    let s0 = env.initial_state();
    if !completable(env, &s0, memo) {
        return Err(UcError::NoFeasiblePlan);
    }
    let mut s = s0.clone();
    let mut plan = Vec::with_capacity(env.horizon());
    while s.hour < env.horizon() {
        let viable: Vec<u64> = env
            .feasible_masks(&s)
            .into_iter()
            .filter(|&m| completable(env, &env.transition_unchecked(&s, m), memo))
            .collect();
        let m = *viable.choose(rng).expect("completable state has a viable action");
        let a = env.action(m);
        s = env.transition(&s, &a)?;
        plan.push(a);
    }
    env.replay(&s0, &plan)
}
