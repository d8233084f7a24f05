//! Exhaustive test oracle for tiny games.
//!
//! Enumerates every integer-kit schedule of each player, picks tabular best
//! responses by direct cost evaluation and iterates sequential updates to a
//! fixed point. It shares nothing with the continuous solver beyond the
//! tariff itself, so it is used to cross-check equilibria on games with two
//! players and at most three intervals.

use std::collections::HashSet;

use crate::model::{utility, GameParams, Schedule};

/// Largest enumeration accepted per player.
pub const MAX_GRID_POINTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    /// Integer orders per player at the grid fixed point.
    Equilibrium(Vec<Vec<f64>>),
    /// Sequential updates revisited a profile without settling.
    Cycle,
    TooLarge { player: usize, points: usize },
    InvalidInput(String),
}

/// Every integer schedule for one player (demands and capacity must be
/// whole kits), in lexicographic order of actions.
pub fn enumerate_schedules(demand: &[f64], capacity: f64, initial_state: f64) -> Vec<Schedule> {
    fn walk(t: usize, stock: i64, demand: &[i64], capacity: i64, prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if t == demand.len() {
            out.push(prefix.clone());
            return;
        }
        let lower = (-demand[t]).max(-stock);
        let upper = capacity - stock;
        for a in lower..=upper {
            prefix.push(a);
            walk(t + 1, stock + a, demand, capacity, prefix, out);
            prefix.pop();
        }
    }
    let d: Vec<i64> = demand.iter().map(|x| x.round() as i64).collect();
    let mut raw = Vec::new();
    walk(0, initial_state.round() as i64, &d, capacity.round() as i64, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|actions| {
            let actions = actions.into_iter().map(|a| a as f64).collect();
            Schedule::from_actions(initial_state, demand, actions).expect("lengths match")
        })
        .collect()
}

/// Lowest-cost schedule from `candidates` against `others`; ties go to the
/// first candidate in enumeration order.
pub fn tabular_best_response<'a>(candidates: &'a [Schedule], others: &[f64], params: &GameParams) -> &'a Schedule {
    let mut best = &candidates[0];
    let mut best_cost = f64::INFINITY;
    for c in candidates {
        let cost = -utility(c, others, params).expect("enumerated schedules are feasible");
        if cost < best_cost - 1e-12 {
            best_cost = cost;
            best = c;
        }
    }
    best
}

/// Fixed point of sequential tabular best responses, starting from the
/// do-nothing profile. Player order is `0..N`.
pub fn brute_force_nash(demands: &[Vec<f64>], capacities: &[f64], params: &GameParams) -> OracleOutcome {
    if demands.len() != capacities.len() || demands.is_empty() {
        return OracleOutcome::InvalidInput("need one capacity per player".into());
    }
    let horizon = demands[0].len();
    if demands.iter().any(|d| d.len() != horizon) {
        return OracleOutcome::InvalidInput("horizon mismatch".into());
    }
    let tables: Vec<Vec<Schedule>> = demands.iter().zip(capacities).map(|(d, c)| enumerate_schedules(d, *c, 0.0)).collect();
    if let Some((player, t)) = tables.iter().enumerate().find(|(_, t)| t.len() > MAX_GRID_POINTS) {
        return OracleOutcome::TooLarge { player, points: t.len() };
    }

    let mut orders: Vec<Vec<f64>> = demands.to_vec();
    let key = |o: &Vec<Vec<f64>>| -> Vec<i64> { o.iter().flatten().map(|q| q.round() as i64).collect() };
    let mut visited = HashSet::new();
    visited.insert(key(&orders));
    loop {
        let before = orders.clone();
        for n in 0..demands.len() {
            let others: Vec<f64> = (0..horizon)
                .map(|t| orders.iter().enumerate().filter(|(m, _)| *m != n).map(|(_, o)| o[t]).sum())
                .collect();
            orders[n] = tabular_best_response(&tables[n], &others, params).orders.clone();
        }
        if orders == before {
            return OracleOutcome::Equilibrium(orders);
        }
        if !visited.insert(key(&orders)) {
            return OracleOutcome::Cycle;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> GameParams {
        GameParams { quad_coeff: 1.0, lin_coeff: 0.0, terminal_weight: 1.0, ..GameParams::default() }
    }

    #[test]
    fn enumerates_feasible_grid() {
        // d = (0, 1), s_max = 1: a0 in {0, 1}; a1 in [-min(1, s), 1 - s].
        let all = enumerate_schedules(&[0.0, 1.0], 1.0, 0.0);
        let actions: Vec<_> = all.iter().map(|s| s.actions.clone()).collect();
        assert_eq!(actions, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, -1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn symmetric_pair() {
        let d = vec![vec![0.0, 10.0], vec![0.0, 10.0]];
        let out = brute_force_nash(&d, &[10.0, 10.0], &unit());
        assert_eq!(out, OracleOutcome::Equilibrium(vec![vec![5.0, 5.0], vec![5.0, 5.0]]));
    }

    #[test]
    fn zero_demand() {
        let d = vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]];
        let out = brute_force_nash(&d, &[4.0, 4.0], &unit());
        assert_eq!(out, OracleOutcome::Equilibrium(vec![vec![0.0; 3], vec![0.0; 3]]));
    }

    #[test]
    fn single_player_capacity_bound() {
        let out = brute_force_nash(&[vec![0.0, 10.0]], &[3.0], &unit());
        assert_eq!(out, OracleOutcome::Equilibrium(vec![vec![3.0, 7.0]]));
    }

    #[test]
    fn refuses_large_grids() {
        let d = vec![vec![100.0; 3]];
        assert!(matches!(brute_force_nash(&d, &[100.0], &unit()), OracleOutcome::TooLarge { .. }));
    }
}
