//! Backward sweep with sampled states and nearest-neighbour values.
//!
//! Starting from the last hour, each slice samples states around an anchor,
//! backs up their values with one Bellman step that looks up successors in
//! the already-sealed next slice, and hands its best state on as the next
//! anchor. A greedy forward pass over the stored values then yields the
//! schedule.

use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Result, UcError};
use crate::mdp::{CommitmentAction, SystemState, UcEnv, BIG};
use crate::model::COUNTER_CAP;
use crate::oracle::all_status_vectors;
use crate::solution::ScheduleSolution;

/// Default per-slice sample count.
pub const DEFAULT_SAMPLES_PER_SLICE: usize = 50;

/// Weighted L1 distance on clipped counter magnitudes plus a penalty per
/// unit whose on/off sign differs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDistanceMetric {
    pub sign_mismatch_weight: f64,
    pub counter_scale: f64,
}

impl Default for StateDistanceMetric {
    fn default() -> Self {
        StateDistanceMetric {
            sign_mismatch_weight: 8.0,
            counter_scale: 1.0,
        }
    }
}

/// Counters are clipped at each unit's lock horizon: past it, the unit is
/// free either way.
pub fn state_distance(env: &UcEnv, s1: &SystemState, s2: &SystemState, metric: &StateDistanceMetric) -> Result<f64> {
    if s1.hour != s2.hour {
        return Err(UcError::HourMismatch(s1.hour, s2.hour));
    }
    Ok(distance_unchecked(env, &s1.status, &s2.status, metric))
}

fn distance_unchecked(env: &UcEnv, x: &[i32], y: &[i32], metric: &StateDistanceMetric) -> f64 {
    let gens = &env.instance().generators;
    let mut d = 0.0;
    for ((g, &a), &b) in gens.iter().zip(x).zip(y) {
        if (a > 0) != (b > 0) {
            d += metric.sign_mismatch_weight;
        }
        let cap = g.lock_horizon();
        d += metric.counter_scale * (a.abs().min(cap) - b.abs().min(cap)).abs() as f64;
    }
    d
}

/// Sampled states of one hour with their estimated values.
#[derive(Debug, Clone, Default)]
pub struct ValueSlice {
    pub hour: usize,
    entries: Vec<(SystemState, f64)>,
    index: HashMap<Vec<i32>, usize>,
}

impl ValueSlice {
    pub fn new(hour: usize) -> Self {
        ValueSlice {
            hour,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Appends `(state, value)`; a repeated state keeps its first entry.
    pub fn push(&mut self, state: SystemState, value: f64) -> Result<()> {
        if state.hour != self.hour {
            return Err(UcError::HourMismatch(self.hour, state.hour));
        }
        if !self.index.contains_key(&state.status) {
            self.index.insert(state.status.clone(), self.entries.len());
            self.entries.push((state, value));
        }
        Ok(())
    }

    pub fn entries(&self) -> &[(SystemState, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, s: &SystemState) -> Option<f64> {
        self.index.get(&s.status).map(|&i| self.entries[i].1)
    }

    /// Earliest-inserted entry with the highest value.
    pub fn argmax(&self) -> Option<&SystemState> {
        let mut best: Option<&(SystemState, f64)> = None;
        for e in &self.entries {
            if best.is_none_or(|b| e.1 > b.1) {
                best = Some(e);
            }
        }
        best.map(|e| &e.0)
    }
}

/// One value slice per hour `0..=T`.
#[derive(Debug, Clone)]
pub struct ValueSampleSet {
    slices: Vec<ValueSlice>,
}

impl ValueSampleSet {
    pub fn new(slices: Vec<ValueSlice>) -> Self {
        ValueSampleSet { slices }
    }

    pub fn slice(&self, hour: usize) -> &ValueSlice {
        &self.slices[hour]
    }

    pub fn slices(&self) -> &[ValueSlice] {
        &self.slices
    }
}

/// How each slice's states are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// `per_slice` distinct states around the anchor.
    Neighborhood { per_slice: usize },
    /// Every valid state; only sensible for one or two units.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackSweepConfig {
    pub sampling: Sampling,
    pub metric: StateDistanceMetric,
    pub threads: usize,
}

impl Default for BackSweepConfig {
    fn default() -> Self {
        BackSweepConfig {
            sampling: Sampling::Neighborhood {
                per_slice: DEFAULT_SAMPLES_PER_SLICE,
            },
            metric: StateDistanceMetric::default(),
            threads: 1,
        }
    }
}

fn counter_from_index(k: u32) -> i32 {
    let k = k as i32;
    if k < COUNTER_CAP {
        -(k + 1)
    } else {
        k - COUNTER_CAP + 1
    }
}

/// Up to `count` distinct valid states at the anchor's hour, the anchor
/// first. Each further sample redraws a geometric(1/2) number of units
/// (capped at `N`) uniformly over the signed counter range.
pub fn sample_environment<R: Rng + ?Sized>(
    anchor: &SystemState,
    count: usize,
    rng: &mut R,
) -> Vec<SystemState> {
    let n = anchor.status.len();
    let space = (2 * COUNTER_CAP as usize).checked_pow(n as u32).unwrap_or(usize::MAX);
    let target = count.min(space).max(1);
    let mut out = vec![anchor.clone()];
    let mut seen = std::collections::HashSet::new();
    seen.insert(anchor.status.clone());
    let max_attempts = 100 * target + 1000;
    let mut attempts = 0;
    while out.len() < target && attempts < max_attempts {
        attempts += 1;
        let mut m = 1;
        while m < n && rng.gen_bool(0.5) {
            m += 1;
        }
        let mut status = anchor.status.clone();
        for unit in index::sample(rng, n, m) {
            status[unit] = counter_from_index(rng.gen_range(0..2 * COUNTER_CAP as u32));
        }
        if seen.insert(status.clone()) {
            out.push(SystemState::new(status, anchor.hour));
        }
    }
    out
}

/// Closest stored state to `s`. An exact match wins outright; otherwise
/// ties in distance go to the earliest-inserted entry.
pub fn nearest_neighbor<'a>(
    env: &UcEnv,
    s: &SystemState,
    slice: &'a ValueSlice,
    metric: &StateDistanceMetric,
) -> Result<(&'a SystemState, f64)> {
    if slice.is_empty() {
        return Err(UcError::EmptySlice(slice.hour));
    }
    if s.hour != slice.hour {
        return Err(UcError::HourMismatch(s.hour, slice.hour));
    }
    if let Some(&i) = slice.index.get(&s.status) {
        let (state, v) = &slice.entries[i];
        return Ok((state, *v));
    }
    let mut best = (f64::INFINITY, 0);
    for (i, (state, _)) in slice.entries.iter().enumerate() {
        let d = distance_unchecked(env, &s.status, &state.status, metric);
        if d < best.0 {
            best = (d, i);
        }
    }
    let (state, v) = &slice.entries[best.1];
    Ok((state, *v))
}

/// One-step lookahead value of each feasible action from `s`, using the
/// stored values of `next` for the successor.
fn action_values(
    env: &UcEnv,
    s: &SystemState,
    next: &ValueSlice,
    metric: &StateDistanceMetric,
) -> Result<Vec<(u64, f64)>> {
    let mut child = SystemState::new(Vec::with_capacity(env.num_units()), 0);
    env.feasible_masks(s)
        .into_iter()
        .map(|mask| {
            let reward = -env.step_cost(s, mask)?;
            env.transition_into(s, mask, &mut child);
            let (_, future) = nearest_neighbor(env, &child, next, metric)?;
            Ok((mask, reward + future))
        })
        .collect()
}

/// Bellman backup of `s` against the next slice; `−BIG` if `s` is a
/// catastrophe.
pub fn backup(env: &UcEnv, s: &SystemState, next: &ValueSlice, metric: &StateDistanceMetric) -> Result<f64> {
    let values = action_values(env, s, next, metric)?;
    Ok(values
        .into_iter()
        .map(|(_, v)| v)
        .fold(None, |best: Option<f64>, v| Some(best.map_or(v, |b| b.max(v))))
        .unwrap_or(-BIG))
}

fn slice_states<R: Rng + ?Sized>(
    env: &UcEnv,
    anchor: &SystemState,
    sampling: Sampling,
    rng: &mut R,
) -> Vec<SystemState> {
    match sampling {
        Sampling::Neighborhood { per_slice } => sample_environment(anchor, per_slice, rng),
        Sampling::Exhaustive => all_status_vectors(env.num_units())
            .into_iter()
            .map(|status| SystemState::new(status, anchor.hour))
            .collect(),
    }
}

/// Builds the value slices from the terminal hour back to hour 0.
///
/// `anchor` is a terminal state (hour `T`) around which the last slice is
/// sampled; each earlier slice is sampled around the best state of the one
/// after it.
pub fn evaluate_states<R: Rng + ?Sized>(
    env: &UcEnv,
    anchor: &SystemState,
    cfg: &BackSweepConfig,
    rng: &mut R,
) -> Result<ValueSampleSet> {
    let horizon = env.horizon();
    if anchor.hour != horizon {
        return Err(UcError::HourMismatch(anchor.hour, horizon));
    }
    if let Sampling::Neighborhood { per_slice: 0 } = cfg.sampling {
        return Err(UcError::InvalidArgument("sample count must be >= 1".into()));
    }
    if cfg.metric.sign_mismatch_weight <= 0.0 {
        return Err(UcError::InvalidArgument("sign mismatch weight must be positive".into()));
    }
    let pool = if cfg.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| UcError::InvalidArgument(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut slices: Vec<ValueSlice> = (0..=horizon).map(ValueSlice::new).collect();
    for s in slice_states(env, anchor, cfg.sampling, rng) {
        slices[horizon].push(s, 0.0)?;
    }
    let mut current = slices[horizon].argmax().expect("anchor is stored").clone();

    for t in (0..horizon).rev() {
        let states = slice_states(env, &current.retimed(t), cfg.sampling, rng);
        let next = &slices[t + 1];
        let eval = |s: &SystemState| backup(env, s, next, &cfg.metric);
        let values: Vec<Result<f64>> = match &pool {
            Some(pool) => pool.install(|| states.par_iter().map(eval).collect()),
            None => states.iter().map(eval).collect(),
        };
        let mut slice = ValueSlice::new(t);
        for (s, v) in states.into_iter().zip(values) {
            slice.push(s, v?)?;
        }
        current = slice.argmax().expect("slice non-empty").clone();
        slices[t] = slice;
    }
    Ok(ValueSampleSet::new(slices))
}

/// Forward pass choosing at each hour the action with the best reward plus
/// nearest-neighbour value of the successor. Ties go to the
/// lexicographically smallest action.
pub fn greedy_policy(
    env: &UcEnv,
    values: &ValueSampleSet,
    s0: &SystemState,
    metric: &StateDistanceMetric,
) -> Result<ScheduleSolution> {
    if s0.hour != 0 {
        return Err(UcError::InvalidArgument(format!(
            "rollout must start at hour 0, got {}",
            s0.hour
        )));
    }
    if values.slices().len() != env.horizon() + 1 {
        return Err(UcError::InvalidArgument("value set does not cover the horizon".into()));
    }
    let mut state = s0.clone();
    let mut plan: Vec<CommitmentAction> = Vec::with_capacity(env.horizon());
    let mut step_values = Vec::with_capacity(env.horizon());
    while state.hour < env.horizon() {
        let scored = action_values(env, &state, values.slice(state.hour + 1), metric)?;
        let mut best: Option<(u64, f64)> = None;
        for (mask, v) in scored {
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((mask, v));
            }
        }
        let (mask, v) = best.ok_or(UcError::NoFeasibleAction { step: state.hour })?;
        let action = env.action(mask);
        state = env.transition(&state, &action)?;
        plan.push(action);
        step_values.push(v);
    }
    let mut solution = env.replay(s0, &plan)?;
    solution.step_values = step_values;
    Ok(solution)
}
