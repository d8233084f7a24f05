//! Sequential best-response dynamics and equilibrium certification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::best_response::{best_response, BestResponseProblem};
use crate::error::{ModelError, SolverError};
use crate::model::{
    aggregate_of, feasible_action_bounds, validate_schedule, DemandProfile, GameParams, Schedule, StorageSpec,
    StrategyProfile, Violation,
};

/// The full game: one demand profile and one store per player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Game {
    pub demands: Vec<DemandProfile>,
    pub capacities: Vec<StorageSpec>,
    pub initial_states: Vec<f64>,
    pub params: GameParams,
}

impl Game {
    /// Game with every store starting empty.
    pub fn new(demands: Vec<DemandProfile>, capacities: Vec<StorageSpec>, params: GameParams) -> Result<Self, ModelError> {
        let initial_states = vec![0.0; demands.len()];
        Self::with_initial_states(demands, capacities, initial_states, params)
    }

    pub fn with_initial_states(
        demands: Vec<DemandProfile>,
        capacities: Vec<StorageSpec>,
        initial_states: Vec<f64>,
        params: GameParams,
    ) -> Result<Self, ModelError> {
        params.validate()?;
        if demands.is_empty() {
            return Err(ModelError::InvalidParam { name: "demands", reason: "at least one player is required".into() });
        }
        for len in [capacities.len(), initial_states.len()] {
            if len != demands.len() {
                return Err(ModelError::InvalidParam {
                    name: "players",
                    reason: format!("{} demand profiles but {len} stores / initial states", demands.len()),
                });
            }
        }
        let horizon = demands[0].len();
        if let Some(bad) = demands.iter().find(|d| d.len() != horizon || d.start_date != demands[0].start_date) {
            return Err(ModelError::HorizonMismatch { expected: horizon, actual: bad.len() });
        }
        for (s, cap) in initial_states.iter().zip(&capacities) {
            if !(*s >= 0.0 && *s <= cap.effective()) {
                return Err(ModelError::StateOutOfRange { state: *s, capacity: cap.effective() });
            }
        }
        Ok(Self { demands, capacities, initial_states, params })
    }

    pub fn players(&self) -> usize {
        self.demands.len()
    }

    pub fn horizon(&self) -> usize {
        self.demands[0].len()
    }

    pub fn problem<'a>(&'a self, player: usize, others_aggregate: &'a [f64]) -> BestResponseProblem<'a> {
        BestResponseProblem {
            demand: &self.demands[player].daily_kits,
            others_aggregate,
            capacity: self.capacities[player].effective(),
            initial_state: self.initial_states[player],
            params: &self.params,
        }
    }

    /// Everyone orders exactly their demand.
    pub fn idle_profile(&self) -> StrategyProfile {
        let schedules = self
            .demands
            .iter()
            .zip(&self.initial_states)
            .map(|(d, s0)| Schedule::idle(*s0, &d.daily_kits))
            .collect();
        StrategyProfile { schedules }
    }

    /// Per-player cost (negated utility) of a profile.
    pub fn player_costs(&self, profile: &StrategyProfile) -> Vec<f64> {
        (0..self.players())
            .map(|n| {
                let others = profile.others_orders(n);
                self.problem(n, &others).cost(&profile.schedules[n])
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub profile: StrategyProfile,
    pub sweeps_used: usize,
    pub final_mse: f64,
    pub converged: bool,
    pub per_player_costs: Vec<f64>,
    pub aggregate_orders: Vec<f64>,
    /// Inter-sweep MSE after each sweep.
    pub mse_history: Vec<f64>,
}

/// Mean squared change of order quantities over all players and intervals.
pub fn sweep_mse(previous: &[Vec<f64>], next: &[Vec<f64>]) -> Result<f64, ModelError> {
    if previous.len() != next.len() {
        return Err(ModelError::HorizonMismatch { expected: previous.len(), actual: next.len() });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, n) in previous.iter().zip(next) {
        if p.len() != n.len() {
            return Err(ModelError::HorizonMismatch { expected: p.len(), actual: n.len() });
        }
        total += p.iter().zip(n).map(|(a, b)| (b - a) * (b - a)).sum::<f64>();
        count += p.len();
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Runs sequential best responses in canonical player order.
pub fn solve_nash(game: &Game) -> Result<EquilibriumResult, SolverError> {
    let order: Vec<usize> = (0..game.players()).collect();
    solve_nash_in_order(game, &order)
}

/// Runs sequential best responses, updating players in `order` within each
/// sweep. Every player best-responds to the latest schedules of the others;
/// iteration stops once a full sweep moves orders by at most the MSE
/// threshold, or after `max_sweeps` sweeps (then `converged` is false).
pub fn solve_nash_in_order(game: &Game, order: &[usize]) -> Result<EquilibriumResult, SolverError> {
    let players = game.players();
    let mut seen = vec![false; players];
    for &n in order {
        if n >= players || std::mem::replace(&mut seen[n], true) {
            return Err(SolverError::Internal(format!("update order {order:?} is not a permutation of 0..{players}")));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(SolverError::Internal(format!("update order {order:?} is not a permutation of 0..{players}")));
    }

    let horizon = game.horizon();
    let mut profile = game.idle_profile();
    let mut aggregate = profile.aggregate_orders();
    let mut history = Vec::new();
    let mut converged = false;
    let mut others = vec![0.0; horizon];

    for _ in 0..game.params.max_sweeps {
        let previous: Vec<Vec<f64>> = profile.schedules.iter().map(|s| s.orders.clone()).collect();
        for &n in order {
            let own = &profile.schedules[n].orders;
            for t in 0..horizon {
                others[t] = (aggregate[t] - own[t]).max(0.0);
            }
            let schedule = best_response(&game.problem(n, &others))?;
            for t in 0..horizon {
                aggregate[t] = others[t] + schedule.orders[t];
            }
            profile.schedules[n] = schedule;
        }
        // Refresh the running sum so rounding does not accumulate across sweeps.
        aggregate = profile.aggregate_orders();
        let next: Vec<Vec<f64>> = profile.schedules.iter().map(|s| s.orders.clone()).collect();
        let mse = sweep_mse(&previous, &next)?;
        history.push(mse);
        if mse <= game.params.mse_threshold {
            converged = true;
            break;
        }
    }

    let per_player_costs = game.player_costs(&profile);
    Ok(EquilibriumResult {
        sweeps_used: history.len(),
        final_mse: history.last().copied().unwrap_or(0.0),
        converged,
        per_player_costs,
        aggregate_orders: aggregate_of(profile.schedules.iter().map(|s| s.orders.as_slice()), horizon),
        profile,
        mse_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Relative utility improvement tolerated for any unilateral deviation.
    pub eps: f64,
    /// Random feasible deviations tried per player.
    pub deviations: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { eps: 1e-6, deviations: 1000, seed: 0x5EED }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerCheck {
    pub region: String,
    pub cost: f64,
    /// Relative gain from switching to the exact best response.
    pub best_response_improvement: f64,
    /// Largest relative gain over the random deviations.
    pub deviation_improvement: f64,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub max_improvement: f64,
    pub players: Vec<PlayerCheck>,
    pub failures: Vec<String>,
}

fn relative_gain(current: f64, candidate: f64) -> f64 {
    let gain = current - candidate;
    if gain <= 0.0 {
        0.0
    } else {
        gain / current.abs().max(f64::MIN_POSITIVE)
    }
}

/// Random feasible schedule: actions drawn uniformly from their admissible
/// interval day by day.
pub fn random_feasible_schedule(
    rng: &mut impl Rng,
    initial_state: f64,
    demand: &[f64],
    capacity: f64,
) -> Result<Schedule, ModelError> {
    let mut stock = initial_state;
    let mut actions = Vec::with_capacity(demand.len());
    for &d in demand {
        let bounds = feasible_action_bounds(stock, d, capacity)?;
        let a = if bounds.upper > bounds.lower { rng.gen_range(bounds.lower..=bounds.upper) } else { bounds.lower };
        stock = (stock + a).clamp(0.0, capacity);
        actions.push(a);
    }
    Schedule::from_actions(initial_state, demand, actions)
}

/// Checks that no player can gain more than `options.eps` (relative) by a
/// unilateral deviation: once against its exact best response and again
/// against random feasible deviations mixed into the equilibrium schedule.
/// Every schedule is also re-validated.
pub fn verify_equilibrium(result: &EquilibriumResult, game: &Game, options: &VerifyOptions) -> VerificationReport {
    let mut failures = Vec::new();
    let mut players = Vec::new();
    if !result.converged {
        failures.push(format!("not converged after {} sweeps (final MSE {:.3e})", result.sweeps_used, result.final_mse));
    }
    if result.profile.schedules.len() != game.players() {
        failures.push(format!(
            "profile has {} schedules for {} players",
            result.profile.schedules.len(),
            game.players()
        ));
        return VerificationReport { passed: false, max_improvement: f64::INFINITY, players, failures };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut max_improvement: f64 = 0.0;
    for n in 0..game.players() {
        let schedule = &result.profile.schedules[n];
        let region = game.demands[n].region.clone();
        let violations = validate_schedule(schedule, &game.demands[n], &game.capacities[n]);
        if !violations.is_empty() {
            failures.push(format!("{region}: {}", violations[0]));
            players.push(PlayerCheck {
                region,
                cost: f64::NAN,
                best_response_improvement: f64::NAN,
                deviation_improvement: f64::NAN,
                violations,
            });
            continue;
        }
        let others = result.profile.others_orders(n);
        let problem = game.problem(n, &others);
        let cost = problem.cost(schedule);

        let br_gain = match best_response(&problem) {
            Ok(br) => relative_gain(cost, problem.cost(&br)),
            Err(e) => {
                failures.push(format!("{region}: best response failed: {e}"));
                f64::INFINITY
            }
        };

        let mut deviation_gain: f64 = 0.0;
        for k in 0..options.deviations {
            let random = match random_feasible_schedule(&mut rng, problem.initial_state, problem.demand, problem.capacity) {
                Ok(s) => s,
                Err(e) => {
                    failures.push(format!("{region}: could not sample a deviation: {e}"));
                    break;
                }
            };
            // Mix weights spread log-uniformly over (1e-6, 1] to probe both
            // local and distant deviations; mixtures of feasible schedules stay feasible.
            let theta = if k % 4 == 0 { 1.0 } else { 10f64.powf(-6.0 * rng.gen::<f64>()) };
            let actions: Vec<f64> = schedule
                .actions
                .iter()
                .zip(&random.actions)
                .map(|(x, y)| x + theta * (y - x))
                .collect();
            let cost_dev = crate::model::schedule_cost(&actions, problem.demand, &others, problem.initial_state, &game.params);
            deviation_gain = deviation_gain.max(relative_gain(cost, cost_dev));
        }

        let worst = br_gain.max(deviation_gain);
        if worst > options.eps {
            failures.push(format!(
                "{region}: unilateral deviation improves utility by {worst:.3e} (relative), above {:.1e}",
                options.eps
            ));
        }
        max_improvement = max_improvement.max(worst);
        players.push(PlayerCheck {
            region,
            cost,
            best_response_improvement: br_gain,
            deviation_improvement: deviation_gain,
            violations,
        });
    }
    VerificationReport { passed: failures.is_empty(), max_improvement, players, failures }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn unit() -> GameParams {
        GameParams { quad_coeff: 1.0, lin_coeff: 0.0, terminal_weight: 1.0, ..GameParams::default() }
    }

    fn game(demands: &[&[f64]], capacity: f64, params: GameParams) -> Game {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let d = demands
            .iter()
            .enumerate()
            .map(|(n, d)| DemandProfile::new(format!("p{n}"), start, d.to_vec()).unwrap())
            .collect();
        let c = (0..demands.len()).map(|n| StorageSpec::new(format!("p{n}"), capacity, 1.0).unwrap()).collect();
        Game::new(d, c, params).unwrap()
    }

    #[test]
    fn mse_examples() {
        let a = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(sweep_mse(&a, &a).unwrap(), 0.0);
        let b = vec![vec![3.0, 4.0], vec![5.0, 6.0]];
        assert_eq!(sweep_mse(&a, &b).unwrap(), 4.0);
        let c = vec![vec![1.0, 2.0], vec![3.0, 10.0]];
        assert_eq!(sweep_mse(&a, &c).unwrap(), 9.0);
        assert!(sweep_mse(&a, &[vec![1.0]]).is_err());
        assert!(sweep_mse(&a, &[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn symmetric_pair_reaches_analytic_equilibrium() {
        let g = game(&[&[0.0, 10.0], &[0.0, 10.0]], 10.0, GameParams { mse_threshold: 1e-12, ..unit() });
        let r = solve_nash(&g).unwrap();
        assert!(r.converged);
        for s in &r.profile.schedules {
            assert!((s.orders[0] - 5.0).abs() < 1e-5 && (s.orders[1] - 5.0).abs() < 1e-5, "{:?}", s.orders);
        }
        assert!((r.aggregate_orders[0] - 10.0).abs() < 1e-5);
        let report = verify_equilibrium(&r, &g, &VerifyOptions { eps: 1e-9, ..Default::default() });
        assert!(report.passed, "{:?}", report.failures);
    }

    #[test]
    fn single_player_matches_best_response() {
        let g = game(&[&[0.0, 10.0]], 3.0, unit());
        let r = solve_nash(&g).unwrap();
        assert!(r.converged && r.sweeps_used <= 2);
        assert!((r.profile.schedules[0].orders[0] - 3.0).abs() < 1e-12);
        let report = verify_equilibrium(&r, &g, &VerifyOptions::default());
        assert!(report.passed, "{:?}", report.failures);
    }

    #[test]
    fn zero_demand_converges_immediately() {
        let g = game(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]], 5.0, unit());
        let r = solve_nash(&g).unwrap();
        assert!(r.converged);
        assert_eq!(r.sweeps_used, 1);
        assert_eq!(r.final_mse, 0.0);
        assert!(r.aggregate_orders.iter().all(|q| *q == 0.0));
    }

    #[test]
    fn forced_deviation_fails_verification() {
        let g = game(&[&[0.0, 10.0], &[0.0, 10.0]], 10.0, GameParams { mse_threshold: 1e-12, ..unit() });
        let mut r = solve_nash(&g).unwrap();
        r.profile.schedules[0] = Schedule::from_orders(0.0, &[0.0, 10.0], vec![0.0, 10.0]).unwrap();
        let report = verify_equilibrium(&r, &g, &VerifyOptions::default());
        assert!(!report.passed);
        assert!(report.players[0].best_response_improvement > 0.1);
        assert!(report.failures.iter().any(|f| f.starts_with("p0")));
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = game(&[&[0.0, 10.0], &[0.0, 10.0]], 10.0, GameParams { mse_threshold: 1e-300, max_sweeps: 1, ..unit() });
        let r = solve_nash(&g).unwrap();
        assert!(!r.converged);
        assert_eq!(r.sweeps_used, 1);
        let report = verify_equilibrium(&r, &g, &VerifyOptions::default());
        assert!(!report.passed);
        assert!(report.failures[0].contains("not converged"));
    }

    #[test]
    fn rejects_bad_update_order() {
        let g = game(&[&[1.0], &[1.0]], 1.0, unit());
        assert!(solve_nash_in_order(&g, &[0, 0]).is_err());
        assert!(solve_nash_in_order(&g, &[0]).is_err());
    }
}
