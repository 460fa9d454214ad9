//! The scheduling problem as a deterministic finite-horizon MDP.
//!
//! A state holds one signed counter per unit (hours on if positive, hours off
//! if negative, saturating at ±24) and the index of the hour about to be
//! decided. An action is the on/off vector serving that hour. Transitions
//! only admit actions that respect minimum up/down times and leave enough
//! committed capacity for demand plus reserve; the reward is minus the
//! hour's dispatch and start-up cost.

use std::cmp::Ordering;
use std::fmt;
use std::sync::OnceLock;

use crate::dispatch::{check_set_limits, economic_dispatch, DispatchResult};
use crate::error::{Result, UcError};
use crate::model::{
    startup_cost, validate_instance, CostBreakdown, ProblemInstance, COUNTER_CAP,
};
use crate::solution::{HourRecord, ScheduleSolution};

/// Value assigned to states with no feasible action. Finite so that search
/// arithmetic stays comparable; any feasible path dominates it.
pub const BIG: f64 = 1e12;

/// Action vectors are packed into a `u64`.
pub const MAX_UNITS: usize = 64;

/// Per-(hour, action) tables are precomputed up to this fleet size.
const TABLE_MAX_UNITS: usize = 14;

/// On/off decision for every unit for one hour. Bit `i` is unit `i`.
///
/// Ordering is lexicographic over the bit list with unit 0 most significant,
/// so `[0,1] < [1,0]`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct CommitmentAction {
    mask: u64,
    len: u8,
}

impl CommitmentAction {
    pub fn from_mask(mask: u64, len: usize) -> Self {
        debug_assert!(len <= MAX_UNITS);
        let mask = if len == 64 { mask } else { mask & ((1u64 << len) - 1) };
        CommitmentAction { mask, len: len as u8 }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mask = bits
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &b)| if b { m | (1 << i) } else { m });
        Self::from_mask(mask, bits.len())
    }

    pub fn all_off(len: usize) -> Self {
        Self::from_mask(0, len)
    }

    pub fn all_on(len: usize) -> Self {
        Self::from_mask(u64::MAX, len)
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_on(&self, unit: usize) -> bool {
        self.mask >> unit & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_on(i)).collect()
    }

    pub fn on_units(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.is_on(i))
    }

    pub fn count_on(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn hamming(&self, other: &CommitmentAction) -> u32 {
        (self.mask ^ other.mask).count_ones()
    }

    /// Integer whose numeric order equals the lexicographic bit order.
    pub fn lex_key(&self) -> u64 {
        if self.len == 0 {
            0
        } else {
            self.mask.reverse_bits() >> (64 - self.len as u32)
        }
    }
}

impl Ord for CommitmentAction {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len
            .cmp(&other.len)
            .then_with(|| self.lex_key().cmp(&other.lex_key()))
    }
}

impl PartialOrd for CommitmentAction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CommitmentAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.is_on(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for CommitmentAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{self}]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemState {
    /// Signed hours on (+) or off (−) per unit, never zero, `|x| <= 24`.
    pub status: Vec<i32>,
    /// Hour about to be decided; equals the horizon when terminal.
    pub hour: usize,
}

impl SystemState {
    pub fn new(status: Vec<i32>, hour: usize) -> Self {
        SystemState { status, hour }
    }

    pub fn is_valid(&self) -> bool {
        self.status
            .iter()
            .all(|&x| x != 0 && x.abs() <= COUNTER_CAP)
    }

    pub fn retimed(&self, hour: usize) -> Self {
        SystemState {
            status: self.status.clone(),
            hour,
        }
    }

    /// Action that keeps every unit in its current on/off state.
    pub fn status_quo(&self) -> CommitmentAction {
        let mask = self
            .status
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &x)| if x > 0 { m | 1 << i } else { m });
        CommitmentAction::from_mask(mask, self.status.len())
    }
}

/// Counter update for one unit.
pub fn next_counter(status: i32, on: bool) -> i32 {
    match (on, status > 0) {
        (true, true) => (status + 1).min(COUNTER_CAP),
        (true, false) => 1,
        (false, false) => (status - 1).max(-COUNTER_CAP),
        (false, true) => -1,
    }
}

/// Units whose next decision is fixed by minimum up/down times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Locks {
    pub forced_on: u64,
    pub forced_off: u64,
}

impl Locks {
    pub fn admits(&self, mask: u64) -> bool {
        mask & self.forced_on == self.forced_on && mask & self.forced_off == 0
    }
}

/// The MDP environment over a validated instance.
///
/// Dispatch costs and the set-limit screen depend only on (hour, action), so
/// for fleets of up to 14 units both are tabulated once per environment.
#[derive(Debug)]
pub struct UcEnv {
    instance: ProblemInstance,
    n: usize,
    horizon: usize,
    full_mask: u64,
    set_limits: Option<Vec<bool>>,
    dispatch_cache: Option<Vec<OnceLock<Option<f64>>>>,
    startup_table: Vec<[f64; COUNTER_CAP as usize + 1]>,
}

impl UcEnv {
    pub fn new(instance: ProblemInstance) -> Result<Self> {
        let report = validate_instance(&instance);
        if !report.is_ok() {
            return Err(UcError::Validation(report));
        }
        let n = instance.num_units();
        let horizon = instance.horizon();
        let full_mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };

        let startup_table = instance
            .generators
            .iter()
            .map(|g| {
                let mut row = [0.0; COUNTER_CAP as usize + 1];
                for (t, slot) in row.iter_mut().enumerate().skip(1) {
                    *slot = startup_cost(g, t as i32).expect("t >= 1");
                }
                row
            })
            .collect();

        let (set_limits, dispatch_cache) = if n <= TABLE_MAX_UNITS {
            let width = 1usize << n;
            let mut table = vec![false; horizon * width];
            for t in 0..horizon {
                let (d, r) = (instance.profile.demand[t], instance.profile.reserve[t]);
                for m in 0..width {
                    let a = CommitmentAction::from_mask(m as u64, n);
                    table[t * width + m] = check_set_limits(&a, d, r, &instance.generators);
                }
            }
            let cache = (0..horizon * width).map(|_| OnceLock::new()).collect();
            (Some(table), Some(cache))
        } else {
            (None, None)
        };

        Ok(UcEnv {
            instance,
            n,
            horizon,
            full_mask,
            set_limits,
            dispatch_cache,
            startup_table,
        })
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    pub fn num_units(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> SystemState {
        SystemState::new(
            self.instance
                .generators
                .iter()
                .map(|g| g.initial_status)
                .collect(),
            0,
        )
    }

    pub fn action(&self, mask: u64) -> CommitmentAction {
        CommitmentAction::from_mask(mask, self.n)
    }

    pub fn locks(&self, s: &SystemState) -> Locks {
        let mut locks = Locks {
            forced_on: 0,
            forced_off: 0,
        };
        for (i, (g, &x)) in self.instance.generators.iter().zip(&s.status).enumerate() {
            if x > 0 && x < g.t_up as i32 {
                locks.forced_on |= 1 << i;
            } else if x < 0 && x > -(g.t_down as i32) {
                locks.forced_off |= 1 << i;
            }
        }
        locks
    }

    /// Set-limit screen for the commitment serving `hour`.
    pub fn set_limits_ok(&self, hour: usize, mask: u64) -> bool {
        match &self.set_limits {
            Some(table) => table[(hour << self.n) + mask as usize],
            None => check_set_limits(
                &self.action(mask),
                self.instance.profile.demand[hour],
                self.instance.profile.reserve[hour],
                &self.instance.generators,
            ),
        }
    }

    /// Calls `visit` with every feasible action mask in lexicographic order;
    /// stops early when `visit` returns `false`.
    pub fn for_each_feasible(&self, s: &SystemState, mut visit: impl FnMut(u64) -> bool) {
        if s.hour >= self.horizon {
            return;
        }
        let locks = self.locks(s);
        let free_mask = self.full_mask & !(locks.forced_on | locks.forced_off);
        let free: Vec<u32> = (0..self.n as u32).filter(|&i| free_mask >> i & 1 == 1).collect();
        let m = free.len();
        for k in 0u64..(1u64 << m) {
            let mut mask = locks.forced_on;
            for (j, &unit) in free.iter().enumerate() {
                if k >> (m - 1 - j) & 1 == 1 {
                    mask |= 1 << unit;
                }
            }
            if self.set_limits_ok(s.hour, mask) && !visit(mask) {
                return;
            }
        }
    }

    pub fn feasible_masks(&self, s: &SystemState) -> Vec<u64> {
        let mut out = Vec::new();
        self.for_each_feasible(s, |m| {
            out.push(m);
            true
        });
        out
    }

    /// Actions admitted from `s`, in lexicographic order. Empty when `s` is
    /// terminal or a catastrophe.
    pub fn feasible_actions(&self, s: &SystemState) -> Vec<CommitmentAction> {
        self.feasible_masks(s)
            .into_iter()
            .map(|m| self.action(m))
            .collect()
    }

    pub fn has_feasible_action(&self, s: &SystemState) -> bool {
        if s.hour >= self.horizon {
            return false;
        }
        let locks = self.locks(s);
        let free = self.full_mask & !(locks.forced_on | locks.forced_off);
        // Submasks of `free`, largest first: big commitments usually pass.
        let mut sub = free;
        loop {
            if self.set_limits_ok(s.hour, locks.forced_on | sub) {
                return true;
            }
            if sub == 0 {
                return false;
            }
            sub = (sub - 1) & free;
        }
    }

    /// A non-terminal state from which no action is admissible.
    pub fn is_catastrophe(&self, s: &SystemState) -> bool {
        s.hour < self.horizon && !self.has_feasible_action(s)
    }

    pub fn is_feasible(&self, s: &SystemState, a: &CommitmentAction) -> bool {
        s.hour < self.horizon
            && a.len() == self.n
            && self.locks(s).admits(a.mask())
            && self.set_limits_ok(s.hour, a.mask())
    }

    pub fn transition(&self, s: &SystemState, a: &CommitmentAction) -> Result<SystemState> {
        if !self.is_feasible(s, a) {
            return Err(UcError::InfeasibleAction { step: s.hour });
        }
        Ok(self.transition_unchecked(s, a.mask()))
    }

    pub(crate) fn transition_unchecked(&self, s: &SystemState, mask: u64) -> SystemState {
        let mut out = SystemState {
            status: Vec::with_capacity(self.n),
            hour: s.hour + 1,
        };
        out.status.extend(
            s.status
                .iter()
                .enumerate()
                .map(|(i, &x)| next_counter(x, mask >> i & 1 == 1)),
        );
        out
    }

    /// Writes the successor of `s` under `mask` into `out`, reusing its buffer.
    pub(crate) fn transition_into(&self, s: &SystemState, mask: u64, out: &mut SystemState) {
        out.hour = s.hour + 1;
        out.status.clear();
        out.status.extend(
            s.status
                .iter()
                .enumerate()
                .map(|(i, &x)| next_counter(x, mask >> i & 1 == 1)),
        );
    }

    /// Full dispatch of the commitment serving `hour`.
    pub fn dispatch(&self, hour: usize, a: &CommitmentAction) -> Result<DispatchResult> {
        economic_dispatch(a, self.instance.profile.demand[hour], &self.instance.generators)
    }

    /// Dispatch cost of the commitment serving `hour`, memoised when tabulated.
    pub fn dispatch_cost(&self, hour: usize, mask: u64) -> Result<f64> {
        let compute = || self.dispatch(hour, &self.action(mask)).map(|r| r.cost);
        match &self.dispatch_cache {
            Some(cache) => {
                let slot = &cache[(hour << self.n) + mask as usize];
                match slot.get_or_init(|| compute().ok()) {
                    Some(c) => Ok(*c),
                    None => compute(),
                }
            }
            None => compute(),
        }
    }

    /// Start-up cost charged when `unit`, currently at counter `status`, is
    /// committed. Zero unless the unit is off.
    pub fn unit_startup(&self, unit: usize, status: i32) -> f64 {
        if status < 0 {
            self.startup_table[unit][(-status) as usize]
        } else {
            0.0
        }
    }

    pub fn startup_total(&self, s: &SystemState, mask: u64) -> f64 {
        s.status
            .iter()
            .enumerate()
            .filter(|&(i, _)| mask >> i & 1 == 1)
            .map(|(i, &x)| self.unit_startup(i, x))
            .sum()
    }

    /// Cost of taking `mask` in `s`: dispatch plus start-ups.
    pub(crate) fn step_cost(&self, s: &SystemState, mask: u64) -> Result<f64> {
        Ok(self.dispatch_cost(s.hour, mask)? + self.startup_total(s, mask))
    }

    /// Minus the hour's operating cost. `next` must be the successor of `s`
    /// under `a`; it carries no extra information in a deterministic model.
    pub fn reward(&self, s: &SystemState, a: &CommitmentAction, next: &SystemState) -> Result<f64> {
        if next.hour != s.hour + 1 {
            return Err(UcError::HourMismatch(s.hour + 1, next.hour));
        }
        Ok(-self.step_cost(s, a.mask())?)
    }

    /// Replays `plan` from `s0`, checking every step.
    pub fn replay(&self, s0: &SystemState, plan: &[CommitmentAction]) -> Result<ScheduleSolution> {
        if s0.hour + plan.len() != self.horizon {
            return Err(UcError::InvalidArgument(format!(
                "plan length {} does not cover hours {}..{}",
                plan.len(),
                s0.hour,
                self.horizon
            )));
        }
        let mut state = s0.clone();
        let mut hours = Vec::with_capacity(plan.len());
        let mut generation_total = 0.0;
        let mut startup_total = 0.0;
        for a in plan {
            if !self.is_feasible(&state, a) {
                return Err(UcError::InfeasibleAction { step: state.hour });
            }
            let dispatch = self.dispatch(state.hour, a)?;
            let gens = &self.instance.generators;
            let unit_generation_cost: Vec<f64> = (0..self.n)
                .map(|i| {
                    if a.is_on(i) {
                        let p = dispatch.power[i];
                        gens[i].a * p * p + gens[i].b * p + gens[i].c
                    } else {
                        0.0
                    }
                })
                .collect();
            let unit_startup_cost: Vec<f64> = (0..self.n)
                .map(|i| if a.is_on(i) { self.unit_startup(i, state.status[i]) } else { 0.0 })
                .collect();
            let startup = self.startup_total(&state, a.mask());
            generation_total += dispatch.cost;
            startup_total += startup;
            hours.push(HourRecord {
                hour: state.hour,
                action: *a,
                power: dispatch.power,
                lambda: dispatch.lambda,
                unit_generation_cost,
                unit_startup_cost,
                generation: dispatch.cost,
                startup,
            });
            state = self.transition_unchecked(&state, a.mask());
        }
        Ok(ScheduleSolution {
            initial_state: s0.clone(),
            terminal_state: state,
            hours,
            cost: CostBreakdown::new(generation_total, startup_total),
            step_values: Vec::new(),
        })
    }

    /// Objective of `plan` started from `s0`.
    pub fn schedule_cost(&self, s0: &SystemState, plan: &[CommitmentAction]) -> Result<CostBreakdown> {
        Ok(self.replay(s0, plan)?.cost)
    }
}
