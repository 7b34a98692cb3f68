//! Unit-commitment instances and their MILP formulation.
//!
//! Each generator `g` and period `t` owns four variables: output `p_g_t`,
//! commitment `u_g_t`, startup `su_g_t` and shutdown `sd_g_t`. Periods are one
//! hour long and every cost is charged per period.

use std::fmt::Write as _;

use crate::kv::{KvError, KvMap};
use crate::milp::{Constraint, MilpProblem, ModelError, RowSense, Variable};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub id: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub fuel_cost: f64,
    pub no_load_cost: f64,
    pub startup_cost: f64,
    pub shutdown_cost: f64,
    pub min_up: usize,
    pub min_down: usize,
    pub ramp_limit: Option<f64>,
    pub init_on: bool,
    pub init_periods_in_state: usize,
    pub init_power: f64,
    pub emission_rate: Option<f64>,
}

impl GeneratorSpec {
    /// A unit with the given capacity range and fuel cost; every other cost is
    /// zero, min up/down are one period, and the unit starts off.
    pub fn simple(id: usize, p_min: f64, p_max: f64, fuel_cost: f64) -> Self {
        Self {
            id,
            p_min,
            p_max,
            fuel_cost,
            no_load_cost: 0.0,
            startup_cost: 0.0,
            shutdown_cost: 0.0,
            min_up: 1,
            min_down: 1,
            ramp_limit: None,
            init_on: false,
            init_periods_in_state: 1,
            init_power: 0.0,
            emission_rate: None,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let finite = [
            self.p_min,
            self.p_max,
            self.fuel_cost,
            self.no_load_cost,
            self.startup_cost,
            self.shutdown_cost,
            self.init_power,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(format!("generator {}: non-finite parameter", self.id));
        }
        if !(0.0 <= self.p_min && self.p_min <= self.p_max) {
            return Err(format!("generator {}: need 0 <= p_min <= p_max", self.id));
        }
        if self.fuel_cost < 0.0 || self.no_load_cost < 0.0 || self.startup_cost < 0.0 || self.shutdown_cost < 0.0 {
            return Err(format!("generator {}: negative cost", self.id));
        }
        if self.min_up < 1 || self.min_down < 1 {
            return Err(format!("generator {}: min_up and min_down must be >= 1", self.id));
        }
        if let Some(r) = self.ramp_limit {
            if !(r.is_finite() && r >= 0.0) {
                return Err(format!("generator {}: ramp limit must be finite and >= 0", self.id));
            }
        }
        if let Some(e) = self.emission_rate {
            if !(e.is_finite() && e >= 0.0) {
                return Err(format!("generator {}: emission rate must be finite and >= 0", self.id));
            }
        }
        if self.init_on {
            if self.init_power < self.p_min || self.init_power > self.p_max {
                return Err(format!("generator {}: initial power outside [p_min, p_max]", self.id));
            }
        } else if self.init_power > 0.0 {
            return Err(format!("generator {}: initially off but init_power > 0", self.id));
        }
        Ok(())
    }

    /// Periods at the start of the horizon during which the unit is locked in
    /// its initial state by an unexpired min up/down window.
    pub fn locked_periods(&self) -> usize {
        let window = if self.init_on { self.min_up } else { self.min_down };
        window.saturating_sub(self.init_periods_in_state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UcInstance {
    pub generators: Vec<GeneratorSpec>,
    pub demand: Vec<f64>,
    pub emission_cap: Option<f64>,
}

impl UcInstance {
    pub fn new(generators: Vec<GeneratorSpec>, demand: Vec<f64>, emission_cap: Option<f64>) -> Result<Self, ModelError> {
        let inst = Self {
            generators,
            demand,
            emission_cap,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn horizon(&self) -> usize {
        self.demand.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidInstance(m));
        if self.demand.is_empty() {
            return bad("empty horizon".into());
        }
        if self.generators.is_empty() {
            return bad("no generators".into());
        }
        if let Some(t) = self.demand.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return bad(format!("demand[{t}] must be finite and >= 0"));
        }
        for g in &self.generators {
            g.validate().or_else(bad)?;
        }
        if let Some(cap) = self.emission_cap {
            if !cap.is_finite() {
                return bad("emission cap must be finite".into());
            }
            if let Some(g) = self.generators.iter().find(|g| g.emission_rate.is_none()) {
                return bad(format!("generator {} lacks an emission rate", g.id));
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let nums = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(s, "horizon = {}", self.horizon()).unwrap();
        writeln!(s, "demand = {}", nums(&self.demand)).unwrap();
        if let Some(cap) = self.emission_cap {
            writeln!(s, "emission_cap = {cap}").unwrap();
        }
        writeln!(s, "generators = {}", self.generators.len()).unwrap();
        for (k, g) in self.generators.iter().enumerate() {
            let pre = format!("gen.{k}");
            writeln!(s, "{pre}.id = {}", g.id).unwrap();
            writeln!(s, "{pre}.p_min = {}", g.p_min).unwrap();
            writeln!(s, "{pre}.p_max = {}", g.p_max).unwrap();
            writeln!(s, "{pre}.fuel_cost = {}", g.fuel_cost).unwrap();
            writeln!(s, "{pre}.no_load_cost = {}", g.no_load_cost).unwrap();
            writeln!(s, "{pre}.startup_cost = {}", g.startup_cost).unwrap();
            writeln!(s, "{pre}.shutdown_cost = {}", g.shutdown_cost).unwrap();
            writeln!(s, "{pre}.min_up = {}", g.min_up).unwrap();
            writeln!(s, "{pre}.min_down = {}", g.min_down).unwrap();
            if let Some(r) = g.ramp_limit {
                writeln!(s, "{pre}.ramp_limit = {r}").unwrap();
            }
            writeln!(s, "{pre}.init_on = {}", g.init_on).unwrap();
            writeln!(s, "{pre}.init_periods_in_state = {}", g.init_periods_in_state).unwrap();
            writeln!(s, "{pre}.init_power = {}", g.init_power).unwrap();
            if let Some(e) = g.emission_rate {
                writeln!(s, "{pre}.emission_rate = {e}").unwrap();
            }
        }
        s
    }

    pub fn from_kv(text: &str) -> Result<Self, KvError> {
        let kv = KvMap::parse(text)?;
        let horizon: usize = kv.get("horizon")?;
        let demand: Vec<f64> = kv.get_list("demand")?;
        if demand.len() != horizon {
            return Err(KvError::Invalid(format!(
                "demand has {} entries, horizon is {horizon}",
                demand.len()
            )));
        }
        let count: usize = kv.get("generators")?;
        let mut generators = Vec::with_capacity(count);
        for k in 0..count {
            let key = |f: &str| format!("gen.{k}.{f}");
            generators.push(GeneratorSpec {
                id: kv.get(&key("id"))?,
                p_min: kv.get(&key("p_min"))?,
                p_max: kv.get(&key("p_max"))?,
                fuel_cost: kv.get(&key("fuel_cost"))?,
                no_load_cost: kv.get(&key("no_load_cost"))?,
                startup_cost: kv.get(&key("startup_cost"))?,
                shutdown_cost: kv.get(&key("shutdown_cost"))?,
                min_up: kv.get(&key("min_up"))?,
                min_down: kv.get(&key("min_down"))?,
                ramp_limit: kv.get_opt(&key("ramp_limit"))?,
                init_on: kv.get(&key("init_on"))?,
                init_periods_in_state: kv.get(&key("init_periods_in_state"))?,
                init_power: kv.get(&key("init_power"))?,
                emission_rate: kv.get_opt(&key("emission_rate"))?,
            });
        }
        let emission_cap = kv.get_opt("emission_cap")?;
        UcInstance::new(generators, demand, emission_cap).map_err(|e| KvError::Invalid(e.to_string()))
    }
}

/// Index of variable `kind` (0 = p, 1 = u, 2 = su, 3 = sd) for unit `g` at `t`.
pub fn var_slot(horizon: usize, g: usize, t: usize, kind: usize) -> usize {
    4 * (g * horizon + t) + kind
}

pub fn build_milp(inst: &UcInstance) -> Result<MilpProblem, ModelError> {
    inst.validate()?;
    let horizon = inst.horizon();
    let p = |g, t| var_slot(horizon, g, t, 0);
    let u = |g, t| var_slot(horizon, g, t, 1);
    let su = |g, t| var_slot(horizon, g, t, 2);
    let sd = |g, t| var_slot(horizon, g, t, 3);

    let mut vars = Vec::with_capacity(4 * inst.generators.len() * horizon);
    let mut objective = Vec::with_capacity(vars.capacity());
    for (g, gen) in inst.generators.iter().enumerate() {
        for t in 0..horizon {
            vars.push(Variable::continuous(format!("p_{g}_{t}"), 0.0, gen.p_max));
            vars.push(Variable::binary(format!("u_{g}_{t}")));
            vars.push(Variable::binary(format!("su_{g}_{t}")));
            vars.push(Variable::binary(format!("sd_{g}_{t}")));
            objective.push((p(g, t), gen.fuel_cost));
            objective.push((u(g, t), gen.no_load_cost));
            objective.push((su(g, t), gen.startup_cost));
            objective.push((sd(g, t), gen.shutdown_cost));
        }
    }

    let mut rows = Vec::new();
    for (t, &d) in inst.demand.iter().enumerate() {
        let terms = (0..inst.generators.len()).map(|g| (p(g, t), 1.0)).collect();
        rows.push(Constraint::new(format!("bal_{t}"), terms, RowSense::Eq, d));
    }
    for (g, gen) in inst.generators.iter().enumerate() {
        let init_u = if gen.init_on { 1.0 } else { 0.0 };
        for t in 0..horizon {
            rows.push(Constraint::new(
                format!("pmin_{g}_{t}"),
                vec![(p(g, t), 1.0), (u(g, t), -gen.p_min)],
                RowSense::Ge,
                0.0,
            ));
            rows.push(Constraint::new(
                format!("pmax_{g}_{t}"),
                vec![(p(g, t), 1.0), (u(g, t), -gen.p_max)],
                RowSense::Le,
                0.0,
            ));
            let (logic, rhs) = if t == 0 {
                (vec![(u(g, 0), 1.0), (su(g, 0), -1.0), (sd(g, 0), 1.0)], init_u)
            } else {
                (
                    vec![(u(g, t), 1.0), (u(g, t - 1), -1.0), (su(g, t), -1.0), (sd(g, t), 1.0)],
                    0.0,
                )
            };
            rows.push(Constraint::new(format!("logic_{g}_{t}"), logic, RowSense::Eq, rhs));

            let up_from = (t + 1).saturating_sub(gen.min_up);
            let mut minup: Vec<(usize, f64)> = (up_from..=t).map(|tau| (su(g, tau), 1.0)).collect();
            minup.push((u(g, t), -1.0));
            rows.push(Constraint::new(format!("minup_{g}_{t}"), minup, RowSense::Le, 0.0));

            let down_from = (t + 1).saturating_sub(gen.min_down);
            let mut mindown: Vec<(usize, f64)> = (down_from..=t).map(|tau| (sd(g, tau), 1.0)).collect();
            mindown.push((u(g, t), 1.0));
            rows.push(Constraint::new(format!("mindown_{g}_{t}"), mindown, RowSense::Le, 1.0));
        }
    }
    for (g, gen) in inst.generators.iter().enumerate() {
        let Some(ramp) = gen.ramp_limit else { continue };
        for t in 0..horizon {
            // A startup (shutdown) period lifts the ramp cap so the unit can
            // jump to (from) p_min.
            let (up, down, rhs_up, rhs_down) = if t == 0 {
                (
                    vec![(p(g, 0), 1.0), (su(g, 0), -gen.p_max)],
                    vec![(p(g, 0), -1.0), (sd(g, 0), -gen.p_max)],
                    ramp + gen.init_power,
                    ramp - gen.init_power,
                )
            } else {
                (
                    vec![(p(g, t), 1.0), (p(g, t - 1), -1.0), (su(g, t), -gen.p_max)],
                    vec![(p(g, t - 1), 1.0), (p(g, t), -1.0), (sd(g, t), -gen.p_max)],
                    ramp,
                    ramp,
                )
            };
            rows.push(Constraint::new(format!("rampup_{g}_{t}"), up, RowSense::Le, rhs_up));
            rows.push(Constraint::new(format!("rampdn_{g}_{t}"), down, RowSense::Le, rhs_down));
        }
    }
    for (g, gen) in inst.generators.iter().enumerate() {
        let value = if gen.init_on { 1.0 } else { 0.0 };
        for t in 0..gen.locked_periods().min(horizon) {
            rows.push(Constraint::new(format!("init_{g}_{t}"), vec![(u(g, t), 1.0)], RowSense::Eq, value));
        }
    }
    if let Some(cap) = inst.emission_cap {
        let mut terms = Vec::new();
        for (g, gen) in inst.generators.iter().enumerate() {
            let rate = gen.emission_rate.unwrap_or(0.0);
            terms.extend((0..horizon).map(|t| (p(g, t), rate)));
        }
        rows.push(Constraint::new("emission", terms, RowSense::Le, cap));
    }
    MilpProblem::new(vars, objective, 0.0, rows)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Two units, one period, demand 60: cheap unit 0 alone costs 120.
    pub fn two_unit_one_period() -> UcInstance {
        UcInstance::new(
            vec![GeneratorSpec::simple(0, 10.0, 100.0, 2.0), GeneratorSpec::simple(1, 10.0, 50.0, 5.0)],
            vec![60.0],
            None,
        )
        .unwrap()
    }

    pub fn two_unit_three_period() -> UcInstance {
        UcInstance::new(
            vec![GeneratorSpec::simple(0, 10.0, 100.0, 2.0), GeneratorSpec::simple(1, 10.0, 50.0, 5.0)],
            vec![60.0, 120.0, 80.0],
            None,
        )
        .unwrap()
    }
}
