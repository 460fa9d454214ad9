//! Problem data shared by every solver: generator cost curves and limits,
//! the hourly demand/reserve profile, and the objective's cost split.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UcError};

/// Largest magnitude a status counter can take (hours).
pub const COUNTER_CAP: i32 = 24;

/// One thermal unit.
///
/// `t_up`/`t_down` are minimum durations; the running on/off counters live in
/// [`crate::mdp::SystemState`]. `initial_status` uses the same signed
/// convention as those counters: negative means hours already off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub id: usize,
    /// Quadratic generation cost coefficients, `a·P² + b·P + c`.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Start-up cost coefficients, `e·exp(−g·t_off) + f·exp(−h·t_off)`.
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub h: f64,
    #[serde(rename = "p_min_mw")]
    pub p_min: f64,
    #[serde(rename = "p_max_mw")]
    pub p_max: f64,
    #[serde(rename = "t_up_h")]
    pub t_up: u32,
    #[serde(rename = "t_down_h")]
    pub t_down: u32,
    #[serde(rename = "initial_status_h")]
    pub initial_status: i32,
}

impl GeneratorSpec {
    /// Marginal cost `dC/dP` at `power`.
    pub fn marginal_cost(&self, power: f64) -> f64 {
        2.0 * self.a * power + self.b
    }

    /// Counter magnitude beyond which the unit's locks no longer bind.
    pub fn lock_horizon(&self) -> i32 {
        self.t_up.max(self.t_down) as i32
    }
}

/// Cost of producing `power` MW for one hour on `gen`.
pub fn generation_cost(gen: &GeneratorSpec, power: f64) -> Result<f64> {
    if !(power >= gen.p_min && power <= gen.p_max) {
        return Err(UcError::OutOfBounds {
            unit: gen.id,
            power,
            p_min: gen.p_min,
            p_max: gen.p_max,
        });
    }
    Ok(gen.a * power * power + gen.b * power + gen.c)
}

/// Cost of starting `gen` after it has been off for `t_off` hours.
///
/// Off durations past [`COUNTER_CAP`] are evaluated at the cap, since state
/// counters saturate there.
pub fn startup_cost(gen: &GeneratorSpec, t_off: i32) -> Result<f64> {
    if t_off < 1 {
        return Err(UcError::InvalidArgument(format!(
            "t_off must be >= 1, got {t_off}"
        )));
    }
    let t = t_off.min(COUNTER_CAP) as f64;
    Ok(gen.e * (-gen.g * t).exp() + gen.f * (-gen.h * t).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandProfile {
    pub demand: Vec<f64>,
    pub reserve: Vec<f64>,
}

impl DemandProfile {
    pub fn horizon(&self) -> usize {
        self.demand.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub generators: Vec<GeneratorSpec>,
    pub profile: DemandProfile,
}

impl ProblemInstance {
    pub fn num_units(&self) -> usize {
        self.generators.len()
    }

    pub fn horizon(&self) -> usize {
        self.profile.horizon()
    }

    pub fn total_capacity(&self) -> f64 {
        self.generators.iter().map(|g| g.p_max).sum()
    }

    /// Keeps the first `n` units and scales demand and reserve by the
    /// retained share of capacity, so the load shape and margin survive.
    pub fn truncated(&self, n: usize) -> ProblemInstance {
        let n = n.min(self.num_units());
        let kept: Vec<GeneratorSpec> = self.generators[..n].to_vec();
        let ratio = kept.iter().map(|g| g.p_max).sum::<f64>() / self.total_capacity();
        ProblemInstance {
            generators: kept,
            profile: DemandProfile {
                demand: self.profile.demand.iter().map(|d| d * ratio).collect(),
                reserve: self.profile.reserve.iter().map(|r| r * ratio).collect(),
            },
        }
    }
}

/// Generation and start-up totals of a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub generation_total: f64,
    pub startup_total: f64,
    pub objective: f64,
}

impl CostBreakdown {
    pub fn new(generation_total: f64, startup_total: f64) -> Self {
        CostBreakdown {
            generation_total,
            startup_total,
            objective: generation_total + startup_total,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Location of the offending value, e.g. `generators[2].p_min_mw`.
    pub field: String,
    pub rule: String,
    pub value: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} (got {})", self.field, self.rule, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: impl Into<String>, rule: &str, value: impl fmt::Display) {
        self.violations.push(Violation {
            field: field.into(),
            rule: rule.to_string(),
            value: value.to_string(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of `instance` and reports all
/// violations rather than stopping at the first.
pub fn validate_instance(instance: &ProblemInstance) -> ValidationReport {
    let mut report = ValidationReport::default();
    let finite = |x: f64| x.is_finite();

    if instance.generators.is_empty() {
        report.push("generators", "at least one generator required", 0);
    }
    if instance.generators.len() > crate::mdp::MAX_UNITS {
        report.push(
            "generators",
            "too many generators",
            instance.generators.len(),
        );
    }
    for (idx, gen) in instance.generators.iter().enumerate() {
        let field = |name: &str| format!("generators[{idx}].{name}");
        if gen.id != idx {
            report.push(field("id"), "ids must be 0..N-1 in order", gen.id);
        }
        for (name, v) in [
            ("a", gen.a),
            ("b", gen.b),
            ("c", gen.c),
            ("e", gen.e),
            ("f", gen.f),
            ("g", gen.g),
            ("h", gen.h),
            ("p_min_mw", gen.p_min),
            ("p_max_mw", gen.p_max),
        ] {
            if !finite(v) {
                report.push(field(name), "must be finite", v);
            }
        }
        if gen.p_min < 0.0 {
            report.push(field("p_min_mw"), "p_min >= 0", gen.p_min);
        }
        if gen.p_min > gen.p_max {
            report.push(field("p_min_mw"), "p_min <= p_max", gen.p_min);
        }
        if gen.p_max.is_nan() || gen.p_max <= 0.0 {
            report.push(field("p_max_mw"), "p_max > 0", gen.p_max);
        }
        if gen.a < 0.0 {
            report.push(field("a"), "a >= 0 (convex cost)", gen.a);
        }
        if gen.t_up < 1 {
            report.push(field("t_up_h"), "t_up >= 1", gen.t_up);
        }
        if gen.t_down < 1 {
            report.push(field("t_down_h"), "t_down >= 1", gen.t_down);
        }
        if gen.initial_status == 0 || gen.initial_status.abs() > COUNTER_CAP {
            report.push(
                field("initial_status_h"),
                "initial_status nonzero with |status| <= 24",
                gen.initial_status,
            );
        }
        if gen.g < 0.0 {
            report.push(field("g"), "g >= 0", gen.g);
        }
        if gen.h < 0.0 {
            report.push(field("h"), "h >= 0", gen.h);
        }
    }

    let profile = &instance.profile;
    if profile.demand.is_empty() {
        report.push("demand_mw", "horizon must be >= 1", 0);
    }
    if profile.reserve.len() != profile.demand.len() {
        report.push(
            "reserve_mw",
            "length must equal horizon",
            profile.reserve.len(),
        );
    }
    for (t, &d) in profile.demand.iter().enumerate() {
        if d.is_nan() || d <= 0.0 || !finite(d) {
            report.push(format!("demand_mw[{t}]"), "demand > 0", d);
        }
    }
    for (t, &r) in profile.reserve.iter().enumerate() {
        if r.is_nan() || r < 0.0 || !finite(r) {
            report.push(format!("reserve_mw[{t}]"), "reserve >= 0", r);
        }
    }

    let peak = profile
        .demand
        .iter()
        .zip(&profile.reserve)
        .map(|(d, r)| d + r)
        .fold(0.0_f64, f64::max);
    let capacity = instance.total_capacity();
    if capacity < peak {
        report.push(
            "generators",
            "capacity shortfall: sum p_max >= peak demand + reserve",
            format!("{capacity} < {peak}"),
        );
    }
    report
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn unit(id: usize, a: f64, b: f64, c: f64, p_min: f64, p_max: f64) -> GeneratorSpec {
        GeneratorSpec {
            id,
            a,
            b,
            c,
            e: 0.0,
            f: 0.0,
            g: 0.0,
            h: 0.0,
            p_min,
            p_max,
            t_up: 1,
            t_down: 1,
            initial_status: 1,
        }
    }

    fn two_unit_instance() -> ProblemInstance {
        ProblemInstance {
            generators: vec![unit(0, 1.0, 0.0, 0.0, 0.0, 10.0), unit(1, 1.0, 0.0, 0.0, 0.0, 10.0)],
            profile: DemandProfile {
                demand: vec![10.0, 12.0],
                reserve: vec![1.0, 1.2],
            },
        }
    }

    #[test]
    fn generation_cost_examples() {
        assert_eq!(generation_cost(&unit(0, 0.0, 0.0, 5.0, 0.0, 10.0), 7.0).unwrap(), 5.0);
        assert_eq!(generation_cost(&unit(0, 1.0, 0.0, 0.0, 0.0, 10.0), 5.0).unwrap(), 25.0);
        // 0.01·2500 + 10·50 + 100
        let c = generation_cost(&unit(0, 0.01, 10.0, 100.0, 0.0, 100.0), 50.0).unwrap();
        assert!((c - 625.0).abs() < 1e-12);
    }

    #[test]
    fn generation_cost_rejects_out_of_bounds() {
        let g = unit(3, 0.0, 1.0, 0.0, 10.0, 20.0);
        assert!(matches!(
            generation_cost(&g, 9.0),
            Err(UcError::OutOfBounds { unit: 3, .. })
        ));
        assert!(generation_cost(&g, 20.5).is_err());
        assert!(generation_cost(&g, f64::NAN).is_err());
    }

    #[test]
    fn startup_cost_examples() {
        let mut g = unit(0, 0.0, 0.0, 0.0, 0.0, 1.0);
        (g.e, g.f, g.g, g.h) = (100.0, 50.0, 0.0, 0.0);
        assert_eq!(startup_cost(&g, 3).unwrap(), 150.0);

        (g.e, g.f, g.g, g.h) = (0.0, 0.0, 1.0, 1.0);
        assert_eq!(startup_cost(&g, 5).unwrap(), 0.0);

        (g.e, g.f, g.g, g.h) = (100.0, 50.0, 0.1, 0.2);
        let expected = 100.0 * (-1.0f64).exp() + 50.0 * (-2.0f64).exp();
        assert!((startup_cost(&g, 10).unwrap() - expected).abs() < 1e-12);

        assert!(matches!(startup_cost(&g, 0), Err(UcError::InvalidArgument(_))));
        assert_eq!(startup_cost(&g, 30).unwrap(), startup_cost(&g, 24).unwrap());
    }

    #[test]
    fn validate_accepts_well_formed() {
        assert!(validate_instance(&two_unit_instance()).is_ok());
    }

    #[test]
    fn validate_names_bad_unit() {
        let mut inst = two_unit_instance();
        inst.generators[1].p_min = 11.0;
        let report = validate_instance(&inst);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].field, "generators[1].p_min_mw");
        assert_eq!(report.violations[0].rule, "p_min <= p_max");
    }

    #[test]
    fn validate_reports_capacity_shortfall() {
        let mut inst = two_unit_instance();
        inst.profile.demand[1] = 19.5;
        let report = validate_instance(&inst);
        assert!(report
            .violations
            .iter()
            .any(|v| v.rule.contains("capacity shortfall")));
    }

    #[test]
    fn validate_rejects_zero_status_and_id_gap() {
        let mut inst = two_unit_instance();
        inst.generators[0].initial_status = 0;
        inst.generators[1].id = 5;
        let fields: Vec<_> = validate_instance(&inst)
            .violations
            .into_iter()
            .map(|v| v.field)
            .collect();
        assert!(fields.contains(&"generators[0].initial_status_h".to_string()));
        assert!(fields.contains(&"generators[1].id".to_string()));
    }

    #[test]
    fn truncation_scales_profile() {
        let inst = two_unit_instance().truncated(1);
        assert_eq!(inst.num_units(), 1);
        assert_eq!(inst.profile.demand, vec![5.0, 6.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn generation_cost_is_convex(
                a in 0.0..0.1f64, b in 0.0..40.0f64, c in 0.0..500.0f64,
                p_min in 0.0..100.0f64, width in 1.0..300.0f64,
                u in 0.0..1.0f64, v in 0.0..1.0f64,
            ) {
                let g = unit(0, a, b, c, p_min, p_min + width);
                let (lo, hi) = if u < v { (u, v) } else { (v, u) };
                let p1 = p_min + lo * width;
                let p2 = p_min + hi * width;
                let mid = generation_cost(&g, 0.5 * (p1 + p2)).unwrap();
                let avg = 0.5 * (generation_cost(&g, p1).unwrap() + generation_cost(&g, p2).unwrap());
                prop_assert!(mid <= avg + 1e-9 * avg.abs().max(1.0));
            }

            #[test]
            fn startup_cost_non_increasing(
                e in 0.0..5000.0f64, f in 0.0..5000.0f64,
                g in 0.0..1.0f64, h in 0.0..1.0f64, t in 1..40i32,
            ) {
                let mut gen = unit(0, 0.0, 0.0, 0.0, 0.0, 1.0);
                (gen.e, gen.f, gen.g, gen.h) = (e, f, g, h);
                prop_assert!(startup_cost(&gen, t + 1).unwrap() <= startup_cost(&gen, t).unwrap());
            }
        }
    }
}
