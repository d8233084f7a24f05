//! Domain types and the pure game mathematics: the quadratic tariff, the
//! per-player bill, storage feasibility, the state transition and the
//! stage-additive utility.
//!
//! Quantities are continuous kits. Feasibility checks use an absolute
//! tolerance of [`FEASIBILITY_TOL`] kits.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::ModelError;

/// Absolute slack (in kits) accepted by every feasibility check.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Cost coefficients and solver tolerances shared by every player.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameParams {
    /// Quadratic tariff coefficient, currency per kit².
    pub quad_coeff: f64,
    /// Linear tariff coefficient, currency per kit.
    pub lin_coeff: f64,
    /// Weight on leftover stock at the end of the horizon, currency per kit.
    pub terminal_weight: f64,
    /// Relative optimality gap accepted for a best response.
    pub br_tolerance: f64,
    /// Inter-sweep mean squared order change (kits²) that counts as converged.
    pub mse_threshold: f64,
    pub max_sweeps: usize,
}

impl Default for GameParams {
    fn default() -> Self {
        Self {
            quad_coeff: 8e-6,
            lin_coeff: 1e-2,
            terminal_weight: 1.0,
            br_tolerance: 1e-6,
            mse_threshold: 10.0,
            max_sweeps: 500,
        }
    }
}

impl GameParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let check = |ok: bool, name: &'static str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(ModelError::InvalidParam { name, reason: reason.to_string() })
            }
        };
        check(self.quad_coeff.is_finite() && self.quad_coeff > 0.0, "quad_coeff", "must be > 0")?;
        check(self.lin_coeff.is_finite() && self.lin_coeff >= 0.0, "lin_coeff", "must be >= 0")?;
        check(
            self.terminal_weight.is_finite() && self.terminal_weight >= 0.0,
            "terminal_weight",
            "must be >= 0",
        )?;
        check(self.br_tolerance > 0.0, "br_tolerance", "must be > 0")?;
        check(self.mse_threshold > 0.0, "mse_threshold", "must be > 0")?;
        check(self.max_sweeps >= 1, "max_sweeps", "must be >= 1")?;
        Ok(())
    }
}

/// Daily PPE demand of one player, one entry per 24-hour interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub region: String,
    pub start_date: NaiveDate,
    pub daily_kits: Vec<f64>,
}

impl DemandProfile {
    pub fn new(
        region: impl Into<String>,
        start_date: NaiveDate,
        daily_kits: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let region = region.into();
        if daily_kits.is_empty() {
            return Err(ModelError::EmptyProfile { region });
        }
        if let Some(&bad) = daily_kits.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(ModelError::Negative { what: "daily demand", value: bad });
        }
        Ok(Self { region, start_date, daily_kits })
    }

    pub fn len(&self) -> usize {
        self.daily_kits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.daily_kits.is_empty()
    }

    /// Last covered date (inclusive).
    pub fn end_date(&self) -> NaiveDate {
        self.start_date + chrono::Days::new(self.daily_kits.len() as u64 - 1)
    }

    pub fn date_at(&self, t: usize) -> NaiveDate {
        self.start_date + chrono::Days::new(t as u64)
    }

    pub fn total(&self) -> f64 {
        stable_sum(self.daily_kits.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    pub region: String,
    pub base_capacity_kits: f64,
    pub multiplier: f64,
}

impl StorageSpec {
    pub fn new(region: impl Into<String>, base_capacity_kits: f64, multiplier: f64) -> Result<Self, ModelError> {
        if !(base_capacity_kits.is_finite() && base_capacity_kits >= 0.0) {
            return Err(ModelError::Negative { what: "storage capacity", value: base_capacity_kits });
        }
        if !(multiplier.is_finite() && multiplier > 0.0) {
            return Err(ModelError::InvalidParam {
                name: "multiplier",
                reason: format!("must be > 0, got {multiplier}"),
            });
        }
        Ok(Self { region: region.into(), base_capacity_kits, multiplier })
    }

    /// Capacity in kits after applying the scenario multiplier.
    pub fn effective(&self) -> f64 {
        self.base_capacity_kits * self.multiplier
    }
}

/// One player's storage schedule. `states` has one more entry than
/// `actions`: `states[0]` is the initial stock and `states[t + 1]` the
/// stock after interval `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub actions: Vec<f64>,
    pub states: Vec<f64>,
    pub orders: Vec<f64>,
}

impl Schedule {
    /// Builds a schedule from storage actions; orders are `demand + action`.
    pub fn from_actions(initial_state: f64, demand: &[f64], actions: Vec<f64>) -> Result<Self, ModelError> {
        if actions.len() != demand.len() {
            return Err(ModelError::HorizonMismatch { expected: demand.len(), actual: actions.len() });
        }
        let states = accumulate(initial_state, &actions);
        let orders = demand.iter().zip(&actions).map(|(d, a)| d + a).collect();
        Ok(Self { actions, states, orders })
    }

    /// Builds a schedule from order quantities; actions are `order - demand`.
    pub fn from_orders(initial_state: f64, demand: &[f64], orders: Vec<f64>) -> Result<Self, ModelError> {
        if orders.len() != demand.len() {
            return Err(ModelError::HorizonMismatch { expected: demand.len(), actual: orders.len() });
        }
        let actions: Vec<f64> = orders.iter().zip(demand).map(|(q, d)| q - d).collect();
        let states = accumulate(initial_state, &actions);
        Ok(Self { actions, states, orders })
    }

    /// The do-nothing schedule: order exactly the demand every day.
    pub fn idle(initial_state: f64, demand: &[f64]) -> Self {
        Self {
            actions: vec![0.0; demand.len()],
            states: vec![initial_state; demand.len() + 1],
            orders: demand.to_vec(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn initial_state(&self) -> f64 {
        self.states[0]
    }

    pub fn final_state(&self) -> f64 {
        *self.states.last().expect("states always holds the initial stock")
    }
}

fn accumulate(initial_state: f64, actions: &[f64]) -> Vec<f64> {
    let mut states = Vec::with_capacity(actions.len() + 1);
    let mut s = initial_state;
    states.push(s);
    for a in actions {
        s += a;
        states.push(s);
    }
    states
}

/// Schedules of all players over a shared horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub schedules: Vec<Schedule>,
}

impl StrategyProfile {
    pub fn new(schedules: Vec<Schedule>) -> Result<Self, ModelError> {
        if let Some(first) = schedules.first() {
            let horizon = first.horizon();
            if let Some(bad) = schedules.iter().find(|s| s.horizon() != horizon) {
                return Err(ModelError::HorizonMismatch { expected: horizon, actual: bad.horizon() });
            }
        }
        Ok(Self { schedules })
    }

    pub fn horizon(&self) -> usize {
        self.schedules.first().map_or(0, Schedule::horizon)
    }

    /// Per-interval aggregate order `Q^t`.
    pub fn aggregate_orders(&self) -> Vec<f64> {
        aggregate_of(self.schedules.iter().map(|s| s.orders.as_slice()), self.horizon())
    }

    /// Per-interval sum of everyone's orders except `player`.
    pub fn others_orders(&self, player: usize) -> Vec<f64> {
        let others = self
            .schedules
            .iter()
            .enumerate()
            .filter(|(n, _)| *n != player)
            .map(|(_, s)| s.orders.as_slice());
        aggregate_of(others, self.horizon())
    }
}

pub(crate) fn aggregate_of<'a>(series: impl Iterator<Item = &'a [f64]>, horizon: usize) -> Vec<f64> {
    let mut total = vec![0.0; horizon];
    for s in series {
        for (acc, q) in total.iter_mut().zip(s) {
            *acc += q;
        }
    }
    total
}

/// Admissible interval for a single storage action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub lower: f64,
    pub upper: f64,
}

impl ActionBounds {
    pub fn contains(&self, a: f64) -> bool {
        a >= self.lower - FEASIBILITY_TOL && a <= self.upper + FEASIBILITY_TOL
    }
}

fn require_non_negative(what: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::Negative { what, value })
    }
}

/// Central tariff `C(Q) = aQ² + bQ` for an aggregate order `Q`.
pub fn aggregate_cost(total: f64, params: &GameParams) -> Result<f64, ModelError> {
    require_non_negative("aggregate order", total)?;
    Ok(params.quad_coeff * total * total + params.lin_coeff * total)
}

/// Price per kit `C(Q)/Q = aQ + b`, equal to `b` at `Q = 0`.
pub fn unit_price(total: f64, params: &GameParams) -> Result<f64, ModelError> {
    require_non_negative("aggregate order", total)?;
    Ok(params.quad_coeff * total + params.lin_coeff)
}

/// A player's bill for one interval: its order times the common unit price.
pub fn player_stage_cost(own: f64, total: f64, params: &GameParams) -> Result<f64, ModelError> {
    require_non_negative("player order", own)?;
    require_non_negative("aggregate order", total)?;
    if own > total + FEASIBILITY_TOL {
        return Err(ModelError::OrderExceedsAggregate { own, aggregate: total });
    }
    Ok(own * unit_price(total, params)?)
}

pub fn feasible_action_bounds(stock: f64, demand: f64, capacity: f64) -> Result<ActionBounds, ModelError> {
    require_non_negative("demand", demand)?;
    if !(stock >= -FEASIBILITY_TOL && stock <= capacity + FEASIBILITY_TOL) {
        return Err(ModelError::StateOutOfRange { state: stock, capacity });
    }
    let stock = stock.clamp(0.0, capacity.max(0.0));
    Ok(ActionBounds { lower: (-demand).max(-stock), upper: capacity - stock })
}

/// Applies one action to the stock, rejecting actions outside the
/// feasible interval for the given demand and capacity.
pub fn transition(stock: f64, action: f64, demand: f64, capacity: f64) -> Result<f64, ModelError> {
    let bounds = feasible_action_bounds(stock, demand, capacity)?;
    if !bounds.contains(action) {
        return Err(ModelError::InfeasibleAction { action, lower: bounds.lower, upper: bounds.upper });
    }
    Ok(stock + action)
}

/// Stage-additive utility of one schedule: minus the terminal penalty and
/// minus the daily bills, given the others' aggregate orders.
pub fn utility(own: &Schedule, others_orders: &[f64], params: &GameParams) -> Result<f64, ModelError> {
    let horizon = own.horizon();
    if others_orders.len() != horizon {
        return Err(ModelError::HorizonMismatch { expected: horizon, actual: others_orders.len() });
    }
    if own.orders.len() != horizon {
        return Err(ModelError::HorizonMismatch { expected: horizon, actual: own.orders.len() });
    }
    let mut bills = Vec::with_capacity(horizon);
    for (&q, &others) in own.orders.iter().zip(others_orders) {
        // Sub-tolerance negatives are rounding noise from the solver.
        let q = if q < 0.0 && q > -FEASIBILITY_TOL { 0.0 } else { q };
        let others = if others < 0.0 && others > -FEASIBILITY_TOL { 0.0 } else { others };
        require_non_negative("others' aggregate order", others)?;
        bills.push(player_stage_cost(q, q + others, params)?);
    }
    let terminal = params.terminal_weight * own.final_state();
    Ok(-terminal - stable_sum(bills))
}

/// Cost (negated utility) of one schedule, evaluated directly from its
/// action vector with no feasibility checks. This is the objective the best
/// response minimizes and is smooth everywhere.
pub fn schedule_cost(
    actions: &[f64],
    demand: &[f64],
    others_orders: &[f64],
    initial_state: f64,
    params: &GameParams,
) -> f64 {
    let bills = actions.iter().zip(demand).zip(others_orders).map(|((a, d), o)| {
        let q = d + a;
        q * (params.quad_coeff * (q + o) + params.lin_coeff)
    });
    let final_state = initial_state + stable_sum(actions.iter().copied());
    params.terminal_weight * final_state + stable_sum(bills)
}

/// Gradient of [`schedule_cost`] with respect to each action:
/// `a·Q₋ₙ + 2a·q + b + λ`.
pub fn cost_gradient(actions: &[f64], demand: &[f64], others_orders: &[f64], params: &GameParams) -> Vec<f64> {
    actions
        .iter()
        .zip(demand)
        .zip(others_orders)
        .map(|((a, d), o)| {
            let q = d + a;
            params.quad_coeff * (o + 2.0 * q) + params.lin_coeff + params.terminal_weight
        })
        .collect()
}

/// Neumaier-compensated summation; conservation checks across long horizons
/// of 10⁶-kit days need it to stay inside the 1e-6 kit tolerance.
pub fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut compensation = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// Action / state / order / demand series have inconsistent lengths.
    Length,
    NegativeStock,
    OverCapacity,
    NegativeOrder,
    /// `s[t+1] != s[t] + a[t]`.
    Transition,
    /// `q[t] != d[t] + a[t]`: demand not met exactly by order plus withdrawal.
    OrderBalance,
    /// `Σq - Σd != s[T] - s[0]`.
    Conservation,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Length => "length mismatch",
            Self::NegativeStock => "negative stock",
            Self::OverCapacity => "capacity exceeded",
            Self::NegativeOrder => "negative order",
            Self::Transition => "state transition mismatch",
            Self::OrderBalance => "order/demand balance mismatch",
            Self::Conservation => "kit conservation",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub interval: usize,
    pub magnitude: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at t={} (magnitude {:.6e})", self.kind, self.interval, self.magnitude)
    }
}

/// Lists every violated schedule invariant. An empty list means the
/// schedule is feasible for the given demand and storage.
pub fn validate_schedule(schedule: &Schedule, demand: &DemandProfile, storage: &StorageSpec) -> Vec<Violation> {
    let horizon = demand.len();
    let mut report = Vec::new();
    let lengths = [schedule.actions.len(), schedule.orders.len(), schedule.states.len().saturating_sub(1)];
    if schedule.states.is_empty() || lengths.iter().any(|&l| l != horizon) {
        let worst = lengths.iter().map(|&l| l.abs_diff(horizon)).max().unwrap_or(horizon);
        report.push(Violation { kind: ViolationKind::Length, interval: 0, magnitude: worst.max(1) as f64 });
        return report;
    }
    let capacity = storage.effective();
    for (t, &s) in schedule.states.iter().enumerate() {
        if s < -FEASIBILITY_TOL {
            report.push(Violation { kind: ViolationKind::NegativeStock, interval: t, magnitude: -s });
        }
        if s > capacity + FEASIBILITY_TOL {
            report.push(Violation { kind: ViolationKind::OverCapacity, interval: t, magnitude: s - capacity });
        }
    }
    for t in 0..horizon {
        let (a, q, d) = (schedule.actions[t], schedule.orders[t], demand.daily_kits[t]);
        if q < -FEASIBILITY_TOL {
            report.push(Violation { kind: ViolationKind::NegativeOrder, interval: t, magnitude: -q });
        }
        let balance = q - d - a;
        if balance.abs() > FEASIBILITY_TOL {
            report.push(Violation { kind: ViolationKind::OrderBalance, interval: t, magnitude: balance.abs() });
        }
        let step = schedule.states[t + 1] - schedule.states[t] - a;
        if step.abs() > FEASIBILITY_TOL {
            report.push(Violation { kind: ViolationKind::Transition, interval: t, magnitude: step.abs() });
        }
    }
    let net_orders = stable_sum(schedule.orders.iter().zip(&demand.daily_kits).map(|(q, d)| q - d));
    let net_stock = schedule.final_state() - schedule.initial_state();
    let drift = net_orders - net_stock;
    if drift.abs() > FEASIBILITY_TOL {
        report.push(Violation { kind: ViolationKind::Conservation, interval: horizon, magnitude: drift.abs() });
    }
    report
}
