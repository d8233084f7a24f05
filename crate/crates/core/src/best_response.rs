//! Exact best responses for one player.
//!
//! Given everyone else's aggregate orders `O[t]`, the player minimizes
//! `Σ q[t]·(a·(q[t] + O[t]) + b) + λ·s[T]` over orders `q[t] ≥ 0` whose stock
//! path `s[t+1] = s[t] + q[t] - d[t]` stays inside `[0, s_max]`.
//!
//! Stationarity gives `q[t] = max(0, π[t] - w[t])` with the per-day floor
//! `w[t] = O[t]/2 + (b + λ)/(2a)` and a water level `π` that is constant
//! between days where the store is empty (level drops afterwards) or full
//! (level rises afterwards), and zero at the free end. The solver traces the
//! stock path with a taut-string sweep: each segment keeps the interval of
//! levels that keep every prefix inside the storage tube and closes at the
//! last touching day once the interval collapses. The result is exact up to
//! rounding and needs no step sizes or iteration tolerances.

use crate::error::{ModelError, SolverError};
use crate::model::{cost_gradient, schedule_cost, GameParams, Schedule, FEASIBILITY_TOL};

/// Decision problem of one player against fixed opponents.
#[derive(Debug, Clone, Copy)]
pub struct BestResponseProblem<'a> {
    pub demand: &'a [f64],
    /// Per-interval sum of all other players' orders.
    pub others_aggregate: &'a [f64],
    /// Effective storage capacity in kits.
    pub capacity: f64,
    pub initial_state: f64,
    pub params: &'a GameParams,
}

impl<'a> BestResponseProblem<'a> {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.params.validate()?;
        if self.demand.is_empty() {
            return Err(ModelError::EmptyProfile { region: "best-response demand".into() });
        }
        if self.others_aggregate.len() != self.demand.len() {
            return Err(ModelError::HorizonMismatch {
                expected: self.demand.len(),
                actual: self.others_aggregate.len(),
            });
        }
        if let Some(&d) = self.demand.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(ModelError::Negative { what: "demand", value: d });
        }
        if let Some(&o) = self.others_aggregate.iter().find(|o| !(o.is_finite() && **o >= -FEASIBILITY_TOL)) {
            return Err(ModelError::Negative { what: "others' aggregate order", value: o });
        }
        if !(self.capacity.is_finite() && self.capacity >= 0.0) {
            return Err(ModelError::Negative { what: "storage capacity", value: self.capacity });
        }
        if !(self.initial_state >= 0.0 && self.initial_state <= self.capacity) {
            return Err(ModelError::StateOutOfRange { state: self.initial_state, capacity: self.capacity });
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.demand.len()
    }

    /// Total cost (negated utility) of a schedule in this problem.
    pub fn cost(&self, schedule: &Schedule) -> f64 {
        schedule_cost(&schedule.actions, self.demand, self.others_aggregate, self.initial_state, self.params)
    }

    /// Cost gradient with respect to the player's actions.
    pub fn gradient(&self, actions: &[f64]) -> Vec<f64> {
        cost_gradient(actions, self.demand, self.others_aggregate, self.params)
    }

    fn floors(&self) -> Vec<f64> {
        let p = self.params;
        let offset = (p.lin_coeff + p.terminal_weight) / (2.0 * p.quad_coeff);
        self.others_aggregate.iter().map(|o| 0.5 * o.max(0.0) + offset).collect()
    }
}

/// Floors of the days in the current segment, kept sorted so the water
/// level for a target volume can be read off in one pass.
struct Segment {
    sorted: Vec<f64>,
}

impl Segment {
    fn new() -> Self {
        Self { sorted: Vec::new() }
    }

    fn insert(&mut self, w: f64) {
        let at = self.sorted.partition_point(|&x| x <= w);
        self.sorted.insert(at, w);
    }

    /// Largest level `π` with `Σ max(0, π - w) = volume` (`volume >= 0`).
    fn level(&self, volume: f64) -> f64 {
        let mut prefix = 0.0;
        for (m, &w) in self.sorted.iter().enumerate() {
            prefix += w;
            let candidate = (volume + prefix) / (m + 1) as f64;
            match self.sorted.get(m + 1) {
                Some(&next) if candidate > next => continue,
                _ => return candidate,
            }
        }
        unreachable!("level queried on an empty segment")
    }
}

#[derive(Clone, Copy)]
struct Bound {
    level: f64,
    at: usize,
}

/// Computes the unique cost-minimizing schedule for `problem`.
pub fn best_response(problem: &BestResponseProblem<'_>) -> Result<Schedule, SolverError> {
    problem.validate()?;
    let horizon = problem.horizon();
    let floors = problem.floors();
    let capacity = problem.capacity;
    let mut orders = vec![0.0; horizon];

    let mut start = 0;
    let mut stock = problem.initial_state;
    while start < horizon {
        let mut segment = Segment::new();
        let mut lower = Bound { level: f64::NEG_INFINITY, at: start };
        let mut upper = Bound { level: f64::INFINITY, at: start };
        let mut cumulative_demand = 0.0;
        // (last day of the segment, level, stock at its end)
        let mut close: Option<(usize, f64, f64)> = None;

        for j in start..horizon {
            segment.insert(floors[j]);
            cumulative_demand += problem.demand[j];
            let need_low = cumulative_demand - stock;
            let need_high = (need_low + capacity).max(0.0);
            let lo_j = if need_low > 0.0 { segment.level(need_low) } else { f64::NEG_INFINITY };
            let hi_j = segment.level(need_high);

            if lo_j > upper.level {
                close = Some((upper.at, upper.level, capacity));
                break;
            }
            if hi_j < lower.level {
                close = Some((lower.at, lower.level, 0.0));
                break;
            }
            if lo_j >= lower.level {
                lower = Bound { level: lo_j, at: j };
            }
            if hi_j <= upper.level {
                upper = Bound { level: hi_j, at: j };
            }
        }

        let (end, level, end_stock) = match close {
            Some(c) => c,
            // Free end: the terminal level is zero unless the tube forces it.
            None if lower.level > 0.0 => (lower.at, lower.level, 0.0),
            None if upper.level < 0.0 => (upper.at, upper.level, capacity),
            None => {
                for t in start..horizon {
                    orders[t] = (0.0 - floors[t]).max(0.0);
                }
                break;
            }
        };
        if !level.is_finite() {
            return Err(SolverError::Internal(format!("non-finite water level on days {start}..={end}")));
        }
        for t in start..=end {
            orders[t] = (level - floors[t]).max(0.0);
        }
        stock = end_stock;
        start = end + 1;
    }

    Ok(Schedule::from_orders(problem.initial_state, problem.demand, orders)?)
}

fn check_feasible(schedule: &Schedule, problem: &BestResponseProblem<'_>) -> Result<(), SolverError> {
    let horizon = problem.horizon();
    if schedule.horizon() != horizon || schedule.orders.len() != horizon || schedule.states.len() != horizon + 1 {
        return Err(SolverError::InfeasibleCandidate("horizon mismatch".into()));
    }
    if (schedule.initial_state() - problem.initial_state).abs() > FEASIBILITY_TOL {
        return Err(SolverError::InfeasibleCandidate("initial stock differs from the problem".into()));
    }
    for t in 0..horizon {
        let q = schedule.orders[t];
        if q < -FEASIBILITY_TOL {
            return Err(SolverError::InfeasibleCandidate(format!("negative order {q} at t={t}")));
        }
        if (q - problem.demand[t] - schedule.actions[t]).abs() > FEASIBILITY_TOL {
            return Err(SolverError::InfeasibleCandidate(format!("order does not balance demand at t={t}")));
        }
        if (schedule.states[t + 1] - schedule.states[t] - schedule.actions[t]).abs() > FEASIBILITY_TOL {
            return Err(SolverError::InfeasibleCandidate(format!("transition mismatch at t={t}")));
        }
    }
    for (t, &s) in schedule.states.iter().enumerate() {
        if s < -FEASIBILITY_TOL || s > problem.capacity + FEASIBILITY_TOL {
            return Err(SolverError::InfeasibleCandidate(format!("stock {s} out of range at t={t}")));
        }
    }
    Ok(())
}

/// Largest decrease of `2a'·δ² + g·δ` (with `a' = curvature`) over `δ` in
/// `[lo, hi]`.
fn best_step_decrease(curvature: f64, slope: f64, lo: f64, hi: f64) -> f64 {
    if !(lo <= hi) {
        return 0.0;
    }
    let step = (-slope / (2.0 * curvature)).clamp(lo, hi);
    -(curvature * step * step + slope * step)
}

/// Suboptimality certificate: the largest cost decrease reachable by moving
/// one action alone, or by shifting kits between the orders of two days,
/// each by the largest step that stays feasible, divided by the candidate's
/// cost. Zero (up to rounding) exactly at the optimum.
pub fn optimality_gap(candidate: &Schedule, problem: &BestResponseProblem<'_>) -> Result<f64, SolverError> {
    problem.validate()?;
    check_feasible(candidate, problem)?;
    let horizon = problem.horizon();
    let a = problem.params.quad_coeff;
    let capacity = problem.capacity;
    let grad = problem.gradient(&candidate.actions);
    let states = &candidate.states;
    let orders: Vec<f64> = candidate.orders.iter().map(|q| q.max(0.0)).collect();

    // Suffix extrema of the stock after each day.
    let mut suffix_min = vec![f64::INFINITY; horizon + 1];
    let mut suffix_max = vec![f64::NEG_INFINITY; horizon + 1];
    for t in (0..horizon).rev() {
        suffix_min[t] = suffix_min[t + 1].min(states[t + 1]);
        suffix_max[t] = suffix_max[t + 1].max(states[t + 1]);
    }

    let mut best: f64 = 0.0;
    for i in 0..horizon {
        // Change action i alone: every later stock moves with it.
        let lo = (-orders[i]).max(-suffix_min[i]);
        let hi = capacity - suffix_max[i];
        best = best.max(best_step_decrease(a, grad[i], lo, hi));

        // Move δ kits of ordering from day j to day i (i < j): stock on
        // days i+1..=j rises by δ.
        let mut run_min = f64::INFINITY;
        let mut run_max = f64::NEG_INFINITY;
        for j in (i + 1)..horizon {
            run_min = run_min.min(states[j]);
            run_max = run_max.max(states[j]);
            let lo = (-orders[i]).max(-run_min);
            let hi = orders[j].min(capacity - run_max);
            best = best.max(best_step_decrease(2.0 * a, grad[i] - grad[j], lo, hi));
        }
    }
    let cost = problem.cost(candidate);
    if best <= 0.0 {
        return Ok(0.0);
    }
    Ok(best / cost.abs().max(f64::MIN_POSITIVE))
}
