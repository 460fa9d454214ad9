//! Economic dispatch for a fixed commitment.
//!
//! Generation costs are separable and convex, so the optimum is characterised
//! by a single multiplier λ: every unit strictly inside its limits runs at
//! marginal cost λ, units at `p_max` are no dearer than λ, and units at
//! `p_min` no cheaper. The aggregate response `Σ P_i(λ)` is monotone in λ,
//! which makes bisection globally convergent.

use crate::error::{Result, UcError};
use crate::mdp::CommitmentAction;
use crate::model::{generation_cost, GeneratorSpec};

const MAX_BISECTIONS: usize = 200;
const BALANCE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    /// MW per generator id; zero for uncommitted units.
    pub power: Vec<f64>,
    /// Equal incremental cost at the optimum ($/MWh).
    pub lambda: f64,
    pub cost: f64,
    /// Set when several linear-cost units share the marginal price and the
    /// split between them was fixed by id order rather than by cost.
    pub degenerate_tie: bool,
}

/// Whether the committed set can serve `demand` and hold `reserve` on top.
pub fn check_set_limits(
    action: &CommitmentAction,
    demand: f64,
    reserve: f64,
    gens: &[GeneratorSpec],
) -> bool {
    let (min_mw, max_mw) = committed_range(action, gens);
    min_mw <= demand && max_mw >= demand + reserve
}

pub(crate) fn committed_range(action: &CommitmentAction, gens: &[GeneratorSpec]) -> (f64, f64) {
    action
        .on_units()
        .fold((0.0, 0.0), |(lo, hi), i| (lo + gens[i].p_min, hi + gens[i].p_max))
}

fn quad_response(gen: &GeneratorSpec, lambda: f64) -> f64 {
    ((lambda - gen.b) / (2.0 * gen.a)).clamp(gen.p_min, gen.p_max)
}

/// Minimum-cost allocation of `demand` across the units committed by `action`.
pub fn economic_dispatch(
    action: &CommitmentAction,
    demand: f64,
    gens: &[GeneratorSpec],
) -> Result<DispatchResult> {
    let committed: Vec<usize> = action.on_units().collect();
    let (min_mw, max_mw) = committed_range(action, gens);
    if committed.is_empty() || !(demand >= min_mw && demand <= max_mw) {
        return Err(UcError::InfeasibleDispatch {
            demand,
            min_mw,
            max_mw,
        });
    }

    let mut power = vec![0.0; gens.len()];
    let mut degenerate_tie = false;
    let lambda;

    if demand == min_mw {
        for &i in &committed {
            power[i] = gens[i].p_min;
        }
        lambda = committed
            .iter()
            .map(|&i| gens[i].marginal_cost(gens[i].p_min))
            .fold(f64::INFINITY, f64::min);
    } else if demand == max_mw {
        for &i in &committed {
            power[i] = gens[i].p_max;
        }
        lambda = committed
            .iter()
            .map(|&i| gens[i].marginal_cost(gens[i].p_max))
            .fold(f64::NEG_INFINITY, f64::max);
    } else {
        let quad: Vec<usize> = committed.iter().copied().filter(|&i| gens[i].a > 0.0).collect();
        let mut linear: Vec<usize> = committed.iter().copied().filter(|&i| gens[i].a == 0.0).collect();
        linear.sort_by(|&x, &y| gens[x].b.total_cmp(&gens[y].b).then(x.cmp(&y)));

        let q_total = |lam: f64| quad.iter().map(|&i| quad_response(&gens[i], lam)).sum::<f64>();
        // Linear output with units priced below `lam` at p_max, above at p_min;
        // `at_max` decides the units priced exactly at `lam`.
        let lin_total = |lam: f64, at_max: bool| {
            linear
                .iter()
                .map(|&i| {
                    let g = &gens[i];
                    if g.b < lam || (at_max && g.b == lam) {
                        g.p_max
                    } else {
                        g.p_min
                    }
                })
                .sum::<f64>()
        };

        let mut breakpoints: Vec<f64> = linear.iter().map(|&i| gens[i].b).collect();
        breakpoints.dedup();

        let mut solved = None;
        let mut prev: Option<f64> = None;
        for &beta in &breakpoints {
            let q = q_total(beta);
            let f_lo = q + lin_total(beta, false);
            let f_hi = q + lin_total(beta, true);
            if demand <= f_hi {
                if demand >= f_lo {
                    solved = Some(Solved::AtBreakpoint(beta));
                } else {
                    solved = Some(Solved::Interval {
                        lo: prev,
                        hi: Some(beta),
                        linear_mw: lin_total(beta, false),
                    });
                }
                break;
            }
            prev = Some(beta);
        }
        let solved = solved.unwrap_or(Solved::Interval {
            lo: prev,
            hi: None,
            linear_mw: lin_total(f64::INFINITY, true),
        });

        match solved {
            Solved::AtBreakpoint(beta) => {
                lambda = beta;
                for &i in &quad {
                    power[i] = quad_response(&gens[i], beta);
                }
                let tied: Vec<usize> = linear.iter().copied().filter(|&i| gens[i].b == beta).collect();
                let mut residual = demand - q_total(beta);
                for &i in &linear {
                    let g = &gens[i];
                    if g.b < beta {
                        power[i] = g.p_max;
                        residual -= g.p_max;
                    } else {
                        power[i] = g.p_min;
                        residual -= g.p_min;
                    }
                }
                let tied_range: f64 = tied.iter().map(|&i| gens[i].p_max - gens[i].p_min).sum();
                let flexible = tied
                    .iter()
                    .filter(|&&i| gens[i].p_max > gens[i].p_min)
                    .count();
                degenerate_tie = flexible >= 2 && residual > 0.0 && residual < tied_range;
                for &i in &tied {
                    let g = &gens[i];
                    let add = residual.clamp(0.0, g.p_max - g.p_min);
                    power[i] = g.p_min + add;
                    residual -= add;
                }
            }
            Solved::Interval { lo, hi, linear_mw } => {
                for &i in &linear {
                    let g = &gens[i];
                    power[i] = if lo.is_some_and(|l| g.b <= l) {
                        g.p_max
                    } else {
                        g.p_min
                    };
                }
                let target = demand - linear_mw;
                lambda = solve_quadratic_block(gens, &quad, target, lo, hi, demand);
                for &i in &quad {
                    power[i] = quad_response(&gens[i], lambda);
                }
            }
        }
    }

    let mut cost = 0.0;
    for &i in &committed {
        power[i] = power[i].clamp(gens[i].p_min, gens[i].p_max);
        cost += generation_cost(&gens[i], power[i])?;
    }
    Ok(DispatchResult {
        power,
        lambda,
        cost,
        degenerate_tie,
    })
}

enum Solved {
    AtBreakpoint(f64),
    Interval {
        lo: Option<f64>,
        hi: Option<f64>,
        linear_mw: f64,
    },
}

/// Finds λ with `Σ_quad P_i(λ) = target`, searching inside `(lo, hi)` when
/// those bounds are given.
fn solve_quadratic_block(
    gens: &[GeneratorSpec],
    quad: &[usize],
    target: f64,
    lo: Option<f64>,
    hi: Option<f64>,
    demand: f64,
) -> f64 {
    if quad.is_empty() {
        return lo.or(hi).unwrap_or(0.0);
    }
    let q_total = |lam: f64| quad.iter().map(|&i| quad_response(&gens[i], lam)).sum::<f64>();
    let lam_floor = quad
        .iter()
        .map(|&i| gens[i].b)
        .fold(f64::INFINITY, f64::min);
    let lam_ceil = quad
        .iter()
        .map(|&i| gens[i].marginal_cost(gens[i].p_max))
        .fold(f64::NEG_INFINITY, f64::max);

    let mut lo = lo.unwrap_or(lam_floor);
    let mut hi = hi.unwrap_or(lam_ceil);
    // The response saturates outside [lam_floor, lam_ceil], so expansion
    // only matters when rounding put the target a hair outside the bracket.
    let mut width = (hi - lo).abs().max(1.0);
    for _ in 0..64 {
        if q_total(lo) <= target {
            break;
        }
        lo -= width;
        width *= 2.0;
    }
    width = (hi - lo).abs().max(1.0);
    for _ in 0..64 {
        if q_total(hi) >= target {
            break;
        }
        hi += width;
        width *= 2.0;
    }

    let tol = BALANCE_RTOL * demand;
    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECTIONS {
        lambda = 0.5 * (lo + hi);
        let r = q_total(lambda) - target;
        if r.abs() <= tol || lambda == lo || lambda == hi {
            break;
        }
        if r < 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
    }

    // Newton polish on the units strictly inside their limits.
    for _ in 0..2 {
        let mut slope = 0.0;
        for &i in quad {
            let p = quad_response(&gens[i], lambda);
            if p > gens[i].p_min && p < gens[i].p_max {
                slope += 1.0 / (2.0 * gens[i].a);
            }
        }
        let r = target - q_total(lambda);
        if slope == 0.0 || r == 0.0 {
            break;
        }
        let candidate = lambda + r / slope;
        if (q_total(candidate) - target).abs() < r.abs() {
            lambda = candidate;
        } else {
            break;
        }
    }
    lambda
}

/// Largest violation of the optimality conditions for a dispatch result:
/// interior units must sit at marginal cost λ, units at `p_max` must not be
/// dearer, units at `p_min` must not be cheaper.
pub fn kkt_violation(result: &DispatchResult, action: &CommitmentAction, gens: &[GeneratorSpec]) -> f64 {
    let lam = result.lambda;
    action
        .on_units()
        .map(|i| {
            let g = &gens[i];
            let p = result.power[i];
            let mc = g.marginal_cost(p);
            if g.p_min == g.p_max {
                0.0
            } else if p >= g.p_max {
                (mc - lam).max(0.0)
            } else if p <= g.p_min {
                (lam - mc).max(0.0)
            } else {
                (mc - lam).abs()
            }
        })
        .fold(0.0, f64::max)
}
