//! Depth-limited lookahead search.
//!
//! At each hour the planner enumerates every action sequence over the next
//! `H` hours (or until the horizon ends), commits the first action of the
//! best sequence, and moves on. Beyond the window the future is valued at
//! zero. Since good schedules rarely change many units from one hour to the
//! next, the search can instead sample a few candidates near the previous
//! action, with probability `rho^d` for Hamming distance `d`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, UcError};
use crate::mdp::{CommitmentAction, SystemState, UcEnv, BIG};
use crate::solution::ScheduleSolution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsampleConfig {
    /// Candidate actions drawn per search node.
    pub samples: usize,
    /// Weight decay per unit of Hamming distance, in `(0, 1)`.
    pub rho: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub lookahead: usize,
    pub subsample: Option<SubsampleConfig>,
    /// Worker threads for the root expansion; 1 runs everything inline.
    pub threads: usize,
}

impl SearchConfig {
    pub fn full(lookahead: usize) -> Self {
        SearchConfig {
            lookahead,
            subsample: None,
            threads: 1,
        }
    }

    pub fn subsampled(lookahead: usize, samples: usize, rho: f64, seed: u64) -> Self {
        SearchConfig {
            lookahead,
            subsample: Some(SubsampleConfig { samples, rho, seed }),
            threads: 1,
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    fn validate(&self, env: &UcEnv) -> Result<()> {
        if self.lookahead == 0 {
            return Err(UcError::InvalidArgument("lookahead must be >= 1".into()));
        }
        if let Some(sub) = &self.subsample {
            let max = 1u128 << env.num_units();
            if sub.samples == 0 || sub.samples as u128 > max {
                return Err(UcError::InvalidArgument(format!(
                    "sample count must be in 1..={max}, got {}",
                    sub.samples
                )));
            }
            if !(sub.rho > 0.0 && sub.rho < 1.0) {
                return Err(UcError::InvalidArgument(format!(
                    "rho must be in (0, 1), got {}",
                    sub.rho
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestAction {
    pub action: CommitmentAction,
    /// Cumulative reward of the best sequence starting with `action`.
    pub value: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn child_seed(seed: u64, mask: u64) -> u64 {
    splitmix64(seed ^ splitmix64(mask))
}

/// Draws up to `samples` distinct feasible actions near `anchor`.
///
/// The feasible action closest to `anchor` in Hamming distance (the anchor
/// itself when feasible) is always kept. The rest are drawn without
/// replacement with weight `rho^d`. Output is in lexicographic order.
pub fn sample_action_neighborhood<R: Rng + ?Sized>(
    env: &UcEnv,
    anchor: &CommitmentAction,
    s: &SystemState,
    samples: usize,
    rho: f64,
    rng: &mut R,
) -> Vec<CommitmentAction> {
    sample_masks(env, anchor.mask(), s, samples, rho, rng)
        .into_iter()
        .map(|m| env.action(m))
        .collect()
}

fn sample_masks<R: Rng + ?Sized>(
    env: &UcEnv,
    anchor: u64,
    s: &SystemState,
    samples: usize,
    rho: f64,
    rng: &mut R,
) -> Vec<u64> {
    let feasible = env.feasible_masks(s);
    if feasible.len() <= samples {
        return feasible;
    }
    let nearest = feasible
        .iter()
        .copied()
        .enumerate()
        .min_by_key(|&(idx, m)| ((m ^ anchor).count_ones(), idx))
        .map(|(idx, _)| idx)
        .expect("non-empty");

    // Exponential race in log space: the smallest `ln(−ln U) − d·ln(rho)`
    // keys form a weighted sample without replacement.
    let ln_rho = rho.ln();
    let mut keyed: Vec<(f64, usize)> = feasible
        .iter()
        .enumerate()
        .filter(|&(idx, _)| idx != nearest)
        .map(|(idx, &m)| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let d = (m ^ anchor).count_ones() as f64;
            ((-u.ln()).ln() - d * ln_rho, idx)
        })
        .collect();
    keyed.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut chosen: Vec<usize> = keyed.iter().take(samples - 1).map(|&(_, idx)| idx).collect();
    chosen.push(nearest);
    chosen.sort_unstable();
    chosen.into_iter().map(|idx| feasible[idx]).collect()
}

struct Searcher<'a> {
    env: &'a UcEnv,
    sampling: Option<SubsampleConfig>,
}

impl Searcher<'_> {
    fn candidates(&self, s: &SystemState, anchor: u64, seed: u64) -> Vec<u64> {
        match &self.sampling {
            None => self.env.feasible_masks(s),
            Some(cfg) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                sample_masks(self.env, anchor, s, cfg.samples, cfg.rho, &mut rng)
            }
        }
    }

    /// Best cumulative reward over the next `depth` hours from `s`.
    ///
    /// A state left with no admissible action scores `−BIG`, including at the
    /// edge of the window.
    fn value(
        &self,
        s: &SystemState,
        depth: usize,
        anchor: u64,
        seed: u64,
        scratch: &mut [SystemState],
    ) -> Result<f64> {
        if s.hour >= self.env.horizon() {
            return Ok(0.0);
        }
        if depth == 0 {
            return Ok(if self.env.has_feasible_action(s) { 0.0 } else { -BIG });
        }
        let candidates = self.candidates(s, anchor, seed);
        if candidates.is_empty() {
            return Ok(-BIG);
        }
        let (child, rest) = scratch.split_first_mut().expect("scratch depth");
        let mut best = f64::NEG_INFINITY;
        for mask in candidates {
            let v = self.branch_value(s, mask, depth, seed, child, rest)?;
            if v > best {
                best = v;
            }
        }
        Ok(best)
    }

    fn branch_value(
        &self,
        s: &SystemState,
        mask: u64,
        depth: usize,
        seed: u64,
        child: &mut SystemState,
        rest: &mut [SystemState],
    ) -> Result<f64> {
        let reward = -self.env.step_cost(s, mask)?;
        self.env.transition_into(s, mask, child);
        let future = self.value(child, depth - 1, mask, child_seed(seed, mask), rest)?;
        Ok(reward + future)
    }

    fn best_at_root(
        &self,
        s: &SystemState,
        depth: usize,
        anchor: u64,
        seed: u64,
        pool: Option<&rayon::ThreadPool>,
    ) -> Result<BestAction> {
        let candidates = self.candidates(s, anchor, seed);
        if candidates.is_empty() {
            return Err(UcError::NoFeasibleAction { step: s.hour });
        }
        let eval = |mask: u64| -> Result<f64> {
            let mut scratch = vec![SystemState::new(Vec::new(), 0); depth];
            let (child, rest) = scratch.split_first_mut().expect("depth >= 1");
            self.branch_value(s, mask, depth, seed, child, rest)
        };
        let values: Vec<Result<f64>> = match pool {
            Some(pool) => pool.install(|| candidates.par_iter().map(|&m| eval(m)).collect()),
            None => candidates.iter().map(|&m| eval(m)).collect(),
        };

        // Candidates arrive in lexicographic order, so a strict comparison
        // keeps the smallest action among equal values.
        let mut best: Option<BestAction> = None;
        for (&mask, v) in candidates.iter().zip(values) {
            let v = v?;
            if best.is_none_or(|b| v > b.value) {
                best = Some(BestAction {
                    action: self.env.action(mask),
                    value: v,
                });
            }
        }
        Ok(best.expect("non-empty"))
    }
}

fn make_pool(threads: usize) -> Result<Option<rayon::ThreadPool>> {
    if threads <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| UcError::InvalidArgument(format!("thread pool: {e}")))
}

/// First action of the best `lookahead`-hour sequence from `s`, with that
/// sequence's cumulative reward.
pub fn find_best_action(env: &UcEnv, s: &SystemState, lookahead: usize) -> Result<BestAction> {
    if lookahead == 0 {
        return Err(UcError::InvalidArgument("lookahead must be >= 1".into()));
    }
    if s.hour >= env.horizon() {
        return Err(UcError::InvalidArgument(format!(
            "state at hour {} is terminal",
            s.hour
        )));
    }
    let searcher = Searcher {
        env,
        sampling: None,
    };
    searcher.best_at_root(s, lookahead, 0, 0, None)
}

/// The full best action sequence over the lookahead window from `s`.
pub fn principal_line(env: &UcEnv, s: &SystemState, lookahead: usize) -> Result<Vec<CommitmentAction>> {
    let mut line = Vec::new();
    let mut state = s.clone();
    for depth in (1..=lookahead).rev() {
        if state.hour >= env.horizon() {
            break;
        }
        let best = find_best_action(env, &state, depth)?;
        state = env.transition(&state, &best.action)?;
        line.push(best.action);
    }
    Ok(line)
}

/// Rolls the lookahead planner forward from `s0` over the whole horizon.
///
/// With `cfg.subsample` set, every search node draws its candidates from
/// the neighbourhood of the action that led to it; the root of hour `t` is
/// anchored on the action committed at `t − 1` (at hour 0, on the action
/// that keeps every unit in its initial on/off state).
pub fn tree_search_policy(env: &UcEnv, s0: &SystemState, cfg: &SearchConfig) -> Result<ScheduleSolution> {
    cfg.validate(env)?;
    if s0.hour != 0 {
        return Err(UcError::InvalidArgument(format!(
            "rollout must start at hour 0, got {}",
            s0.hour
        )));
    }
    let pool = make_pool(cfg.threads)?;
    let searcher = Searcher {
        env,
        sampling: cfg.subsample,
    };
    let base_seed = cfg.subsample.map_or(0, |s| s.seed);

    let mut state = s0.clone();
    let mut anchor = s0.status_quo().mask();
    let mut plan = Vec::with_capacity(env.horizon());
    let mut values = Vec::with_capacity(env.horizon());
    while state.hour < env.horizon() {
        let seed = splitmix64(base_seed ^ splitmix64(state.hour as u64));
        let best = searcher.best_at_root(&state, cfg.lookahead, anchor, seed, pool.as_ref())?;
        state = env.transition(&state, &best.action)?;
        anchor = best.action.mask();
        plan.push(best.action);
        values.push(best.value);
    }

    let mut solution = env.replay(s0, &plan)?;
    solution.step_values = values;
    Ok(solution)
}

/// Sub-sampled variant; `cfg.subsample` must be set.
pub fn subsampled_tree_search(env: &UcEnv, s0: &SystemState, cfg: &SearchConfig) -> Result<ScheduleSolution> {
    if cfg.subsample.is_none() {
        return Err(UcError::InvalidArgument("sub-sampling parameters missing".into()));
    }
    tree_search_policy(env, s0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::unit;
    use crate::model::{DemandProfile, ProblemInstance};

    fn env_from(gens: Vec<crate::model::GeneratorSpec>, demand: Vec<f64>) -> UcEnv {
        let reserve = demand.iter().map(|d| 0.1 * d).collect();
        UcEnv::new(ProblemInstance {
            generators: gens,
            profile: DemandProfile { demand, reserve },
        })
        .unwrap()
    }

    #[test]
    fn locked_single_unit() {
        let mut g = unit(0, 0.01, 10.0, 50.0, 0.0, 100.0);
        g.t_up = 10;
        let env = env_from(vec![g], vec![40.0, 50.0, 60.0]);
        let s = SystemState::new(vec![1], 0);
        let best = find_best_action(&env, &s, 3).unwrap();
        assert_eq!(best.action.bits(), vec![true]);
        let expected = -(env.dispatch_cost(0, 1).unwrap()
            + (env.dispatch_cost(1, 1).unwrap() + (env.dispatch_cost(2, 1).unwrap() + 0.0)));
        assert_eq!(best.value, expected);
    }

    #[test]
    fn rejects_bad_arguments() {
        let env = env_from(vec![unit(0, 0.01, 10.0, 50.0, 0.0, 100.0)], vec![40.0]);
        let s = env.initial_state();
        assert!(find_best_action(&env, &s, 0).is_err());
        assert!(find_best_action(&env, &s.retimed(1), 1).is_err());
        assert!(tree_search_policy(&env, &s.retimed(1), &SearchConfig::full(1)).is_err());
        assert!(tree_search_policy(&env, &s, &SearchConfig::subsampled(1, 3, 0.5, 0)).is_err());
        assert!(tree_search_policy(&env, &s, &SearchConfig::subsampled(1, 1, 1.5, 0)).is_err());
        assert!(subsampled_tree_search(&env, &s, &SearchConfig::full(1)).is_err());
    }

    #[test]
    fn catastrophe_root_is_an_error() {
        let mut g = unit(0, 0.01, 10.0, 50.0, 0.0, 100.0);
        g.t_down = 3;
        g.initial_status = -1;
        let env = env_from(vec![g, unit(1, 0.01, 10.0, 0.0, 0.0, 10.0)], vec![50.0]);
        assert!(matches!(
            find_best_action(&env, &env.initial_state(), 1),
            Err(UcError::NoFeasibleAction { step: 0 })
        ));
    }

    #[test]
    fn single_hour_horizon() {
        let env = env_from(
            vec![unit(0, 0.02, 10.0, 50.0, 0.0, 100.0), unit(1, 0.01, 20.0, 10.0, 0.0, 100.0)],
            vec![60.0],
        );
        let sol = tree_search_policy(&env, &env.initial_state(), &SearchConfig::full(4)).unwrap();
        let best = find_best_action(&env, &env.initial_state(), 1).unwrap();
        assert_eq!(sol.plan(), vec![best.action]);
        assert_eq!(sol.step_values, vec![best.value]);
    }

    #[test]
    fn nearest_feasible_anchor_always_kept() {
        let gens: Vec<_> = (0..4).map(|i| unit(i, 0.01, 10.0 + i as f64, 0.0, 0.0, 50.0)).collect();
        let env = env_from(gens, vec![60.0]);
        let s = SystemState::new(vec![5; 4], 0);
        // 0000 is infeasible; the nearest feasible actions are at distance 2.
        let anchor = CommitmentAction::all_off(4);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let picks = sample_action_neighborhood(&env, &anchor, &s, 2, 0.5, &mut rng);
            assert_eq!(picks.len(), 2);
            assert!(picks.contains(&CommitmentAction::from_bits(&[false, false, true, true])));
        }
    }
}
