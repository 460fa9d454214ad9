use crate::mdp::{CommitmentAction, SystemState};
use crate::model::CostBreakdown;

/// What happened in one scheduled hour.
#[derive(Debug, Clone, PartialEq)]
pub struct HourRecord {
    pub hour: usize,
    pub action: CommitmentAction,
    /// MW per unit, zero when off.
    pub power: Vec<f64>,
    pub lambda: f64,
    pub unit_generation_cost: Vec<f64>,
    pub unit_startup_cost: Vec<f64>,
    pub generation: f64,
    pub startup: f64,
}

/// A full-horizon plan with its dispatch and costs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSolution {
    pub initial_state: SystemState,
    pub terminal_state: SystemState,
    pub hours: Vec<HourRecord>,
    pub cost: CostBreakdown,
    /// Solver's value estimate at each decision, when it produces one.
    pub step_values: Vec<f64>,
}

impl ScheduleSolution {
    pub fn plan(&self) -> Vec<CommitmentAction> {
        self.hours.iter().map(|h| h.action).collect()
    }

    pub fn objective(&self) -> f64 {
        self.cost.objective
    }

    /// Minus the per-hour operating cost, i.e. the reward sequence.
    pub fn rewards(&self) -> Vec<f64> {
        self.hours.iter().map(|h| -(h.generation + h.startup)).collect()
    }
}
