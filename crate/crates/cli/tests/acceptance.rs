//! Acceptance suite: one PASS/FAIL line per criterion. Criterion 8 is
//! indicative and reported as INFO without affecting the exit status.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ppe_stock::brute_force::{brute_force_nash, OracleOutcome};
use ppe_stock::demand::{beds_to_ppe, bundled_bed_occupancy, total_between, ExtrapolationRule};
use ppe_stock::model::{cost_gradient, schedule_cost, stable_sum, FEASIBILITY_TOL};
use ppe_stock::nash::random_feasible_schedule;
use ppe_stock::scenario::{run_grid, GridSpec, ScenarioConfig, ScenarioOutcome, ScenarioResult, Stage};
use ppe_stock::{
    best_response, feasible_action_bounds, optimality_gap, solve_nash, validate_schedule, verify_equilibrium,
    BestResponseProblem, DemandProfile, Game, GameParams, StorageSpec, VerifyOptions,
};

// Criterion 1
const ANALYTIC_ORDER_TOL: f64 = 1e-3;
const ANALYTIC_TIME_LIMIT: Duration = Duration::from_secs(1);
// Criterion 2
const ORACLE_MIN_GAMES: usize = 20;
const ORACLE_GAMES_DRAWN: usize = 40;
const ORACLE_GRID_RESOLUTION: f64 = 1.0;
const ORACLE_VERIFY_EPS: f64 = 1e-4;
// Criterion 3
const BR_PROBLEMS: usize = 100;
const BR_GAP_TOL: f64 = 1e-6;
const BR_DEVIATIONS: usize = 1000;
const BR_DEVIATION_TOL: f64 = 1e-6;
// Criterion 4
const GRADIENT_POINTS: usize = 100;
const GRADIENT_REL_TOL: f64 = 1e-4;
// Criterion 5
const CONSERVATION_TOL: f64 = 1e-6;
// Criterion 8
const BAND_LATE_SMALL: (f64, f64) = (0.04, 0.14);
const BAND_EARLY_LARGE: (f64, f64) = (0.30, 0.46);
// Criterion 9
const CONSUMPTION_TARGET_KITS: f64 = 58e6;
const CONSUMPTION_REL_TOL: f64 = 0.15;
// Criterion 11
const GRID_TIME_LIMIT: Duration = Duration::from_secs(600);

/// Convergence threshold for unit-scale test games, where the default
/// 10 kits² would stop the dynamics after the first sweeps.
const TINY_GAME_MSE: f64 = 1e-12;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn profile(kits: &[f64]) -> DemandProfile {
    DemandProfile::new("London", date(2020, 3, 1), kits.to_vec()).unwrap()
}

fn unit_params() -> GameParams {
    GameParams { quad_coeff: 1.0, lin_coeff: 0.0, terminal_weight: 1.0, mse_threshold: TINY_GAME_MSE, ..GameParams::default() }
}

fn analytic_equilibrium() -> Outcome {
    let started = Instant::now();
    let demands = vec![profile(&[0.0, 10.0]), profile(&[0.0, 10.0])];
    let storage = vec![StorageSpec::new("London", 10.0, 1.0).unwrap(), StorageSpec::new("London", 10.0, 1.0).unwrap()];
    let eq = solve_nash(&Game::new(demands, storage, unit_params()).unwrap()).unwrap();
    let elapsed = started.elapsed();
    let err = eq
        .profile
        .schedules
        .iter()
        .flat_map(|s| s.orders.iter().map(|q| (q - 5.0).abs()))
        .fold(0.0, f64::max);
    outcome(
        eq.converged && err <= ANALYTIC_ORDER_TOL && elapsed < ANALYTIC_TIME_LIMIT,
        format!("max |q - 5| = {err:.2e} kits after {} sweeps in {:.1} ms", eq.sweeps_used, elapsed.as_secs_f64() * 1e3),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut compared, mut inconclusive, mut worst, mut failures) = (0, 0, 0.0_f64, Vec::new());
    for game_id in 0..ORACLE_GAMES_DRAWN {
        let players = rng.gen_range(1..=2);
        let horizon = rng.gen_range(1..=3);
        let demands: Vec<Vec<f64>> =
            (0..players).map(|_| (0..horizon).map(|_| f64::from(rng.gen_range(0..=10u8))).collect()).collect();
        let caps: Vec<f64> = (0..players).map(|_| f64::from(rng.gen_range(0..=10u8))).collect();
        let grid = match brute_force_nash(&demands, &caps, &unit_params()) {
            OracleOutcome::Equilibrium(g) => g,
            _ => {
                inconclusive += 1;
                continue;
            }
        };
        let game = Game::new(
            demands.iter().map(|d| profile(d)).collect(),
            caps.iter().map(|&c| StorageSpec::new("London", c, 1.0).unwrap()).collect(),
            unit_params(),
        )
        .unwrap();
        let eq = solve_nash(&game).unwrap();
        let diff = grid
            .iter()
            .zip(&eq.profile.schedules)
            .flat_map(|(g, s)| g.iter().zip(&s.orders).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        worst = worst.max(diff);
        let report = verify_equilibrium(&eq, &game, &VerifyOptions { eps: ORACLE_VERIFY_EPS, ..VerifyOptions::default() });
        if diff > ORACLE_GRID_RESOLUTION || !report.passed {
            failures.push(format!("game {game_id}: diff {diff:.3} {:?}", report.failures));
        }
        compared += 1;
    }
    outcome(
        compared >= ORACLE_MIN_GAMES && failures.is_empty(),
        format!(
            "{compared} games compared ({inconclusive} inconclusive), max order difference {worst:.3} kits{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

struct RandomProblem {
    demand: Vec<f64>,
    others: Vec<f64>,
    capacity: f64,
    initial_state: f64,
    params: GameParams,
}

impl RandomProblem {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let horizon = rng.gen_range(2..=60);
        let scale = 10f64.powf(rng.gen_range(1.0..5.5));
        let demand = (0..horizon).map(|_| if rng.gen_bool(0.2) { 0.0 } else { scale * rng.gen::<f64>() }).collect();
        let others = (0..horizon).map(|_| 6.0 * scale * rng.gen::<f64>()).collect();
        let capacity = scale * rng.gen_range(0.0..8.0);
        let initial_state = if rng.gen_bool(0.3) { capacity * rng.gen::<f64>() } else { 0.0 };
        let params = if rng.gen_bool(0.5) {
            GameParams::default()
        } else {
            GameParams {
                quad_coeff: 10f64.powf(rng.gen_range(-7.0..0.0)),
                lin_coeff: rng.gen_range(0.0..1.0),
                terminal_weight: rng.gen_range(0.0..3.0),
                ..GameParams::default()
            }
        };
        Self { demand, others, capacity, initial_state, params }
    }

    fn problem(&self) -> BestResponseProblem<'_> {
        BestResponseProblem {
            demand: &self.demand,
            others_aggregate: &self.others,
            capacity: self.capacity,
            initial_state: self.initial_state,
            params: &self.params,
        }
    }
}

fn best_response_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_gap, mut worst_dev, mut failures) = (0.0_f64, 0.0_f64, Vec::new());
    for id in 0..BR_PROBLEMS {
        let rp = RandomProblem::draw(&mut rng);
        let p = rp.problem();
        let br = best_response(&p).unwrap();
        let gap = optimality_gap(&br, &p).unwrap();
        let cost = p.cost(&br);
        let mut dev_gain = 0.0_f64;
        for k in 0..BR_DEVIATIONS {
            let random = random_feasible_schedule(&mut rng, p.initial_state, p.demand, p.capacity).unwrap();
            let theta = if k % 4 == 0 { 1.0 } else { 10f64.powf(-6.0 * rng.gen::<f64>()) };
            let mixed: Vec<f64> = br.actions.iter().zip(&random.actions).map(|(x, y)| x + theta * (y - x)).collect();
            let c = schedule_cost(&mixed, p.demand, p.others_aggregate, p.initial_state, p.params);
            dev_gain = dev_gain.max((cost - c) / cost.abs().max(f64::MIN_POSITIVE));
        }
        worst_gap = worst_gap.max(gap);
        worst_dev = worst_dev.max(dev_gain);
        if gap > BR_GAP_TOL || dev_gain > BR_DEVIATION_TOL {
            failures.push(format!("problem {id}: gap {gap:.2e}, deviation gain {dev_gain:.2e}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{BR_PROBLEMS} problems: max gap {worst_gap:.2e}, max deviation gain {worst_dev:.2e} over {BR_DEVIATIONS} deviations each{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0_f64;
    for _ in 0..GRADIENT_POINTS {
        let rp = RandomProblem::draw(&mut rng);
        // Interior point: strictly inside every action interval.
        let mut stock = rp.initial_state.min(rp.capacity);
        let mut actions = Vec::with_capacity(rp.demand.len());
        for &d in &rp.demand {
            let b = feasible_action_bounds(stock, d, rp.capacity.max(1.0)).unwrap();
            let a = b.lower + (b.upper - b.lower) * rng.gen_range(0.1..0.9);
            stock += a;
            actions.push(a);
        }
        let g = cost_gradient(&actions, &rp.demand, &rp.others, &rp.params);
        for t in 0..actions.len() {
            let h = 1e-3 * actions[t].abs().max(1.0);
            let mut up = actions.clone();
            let mut down = actions.clone();
            up[t] += h;
            down[t] -= h;
            let fd = (schedule_cost(&up, &rp.demand, &rp.others, rp.initial_state, &rp.params)
                - schedule_cost(&down, &rp.demand, &rp.others, rp.initial_state, &rp.params))
                / (2.0 * h);
            worst = worst.max((fd - g[t]).abs() / g[t].abs().max(f64::MIN_POSITIVE));
        }
    }
    outcome(worst <= GRADIENT_REL_TOL, format!("{GRADIENT_POINTS} points: max relative error {worst:.2e}"))
}

struct Grids {
    one: Vec<ScenarioOutcome>,
    two: Vec<ScenarioOutcome>,
}

impl Grids {
    fn run() -> Self {
        let data = bundled_bed_occupancy();
        let base = ScenarioConfig { extrapolation: ExtrapolationRule::midpoint(), ..ScenarioConfig::default() };
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        let one = run_grid(&GridSpec::standard(Stage::One), &base, &data, workers).unwrap();
        let two = run_grid(&GridSpec::standard(Stage::Two), &base, &data, workers).unwrap();
        Self { one, two }
    }

    fn all(&self) -> impl Iterator<Item = &ScenarioOutcome> {
        self.one.iter().chain(&self.two)
    }

    fn saving(&self, stage: Stage, start: NaiveDate, multiplier: f64, peak: NaiveDate) -> f64 {
        let list = match stage {
            Stage::One => &self.one,
            Stage::Two => &self.two,
        };
        list.iter()
            .filter_map(ScenarioOutcome::result)
            .find(|r| {
                r.config.start_date() == start
                    && r.config.storage_multiplier == multiplier
                    && r.config.second_wave.peak_date == peak
            })
            .map(|r| r.saving)
            .unwrap_or(f64::NAN)
    }
}

fn completed(grids: &Grids) -> Result<Vec<&ScenarioResult>, String> {
    let failed: Vec<String> = grids
        .all()
        .filter_map(|o| match o {
            ScenarioOutcome::Failed { config, error } => Some(format!("{}: {error}", config.id())),
            _ => None,
        })
        .collect();
    if failed.is_empty() {
        Ok(grids.all().filter_map(ScenarioOutcome::result).collect())
    } else {
        Err(failed.join("; "))
    }
}

fn feasibility_and_conservation(grids: &Grids) -> Outcome {
    let results = match completed(grids) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let (mut schedules, mut worst, mut problems) = (0, 0.0_f64, Vec::new());
    for r in &results {
        for ((d, s), cap) in r.demands.iter().zip(&r.equilibrium.profile.schedules).zip(&r.capacities) {
            let violations = validate_schedule(s, d, cap);
            if let Some(v) = violations.first() {
                problems.push(format!("{} {}: {v}", r.config.id(), d.region));
            }
            let drift = (s.initial_state() + stable_sum(s.orders.iter().copied())
                - stable_sum(d.daily_kits.iter().copied())
                - s.final_state())
            .abs();
            worst = worst.max(drift);
            schedules += 1;
        }
    }
    let n = results.len();
    outcome(
        n == 150 && problems.is_empty() && worst <= CONSERVATION_TOL,
        format!(
            "{n} scenarios, {schedules} schedules, max conservation drift {worst:.2e} kits{}",
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

fn flattening(grids: &Grids) -> Outcome {
    let results = match completed(grids) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let mut problems = Vec::new();
    let mut converged = 0;
    for r in results.iter().filter(|r| r.equilibrium.converged) {
        converged += 1;
        if r.game_cost > r.reference_cost {
            problems.push(format!("{}: game cost {} > reference {}", r.config.id(), r.game_cost, r.reference_cost));
        }
        let peak_order = r.equilibrium.aggregate_orders.iter().copied().fold(0.0, f64::max);
        let peak_demand = r.aggregate_demand().into_iter().fold(0.0, f64::max);
        if peak_order > peak_demand + FEASIBILITY_TOL {
            problems.push(format!("{}: peak order {peak_order} > peak demand {peak_demand}", r.config.id()));
        }
    }
    outcome(
        converged == results.len() && problems.is_empty(),
        format!("{converged}/{} converged scenarios checked{}", results.len(), if problems.is_empty() {
            String::new()
        } else {
            format!("; {}", problems.join("; "))
        }),
    )
}

fn directional(grids: &Grids) -> Outcome {
    let g1 = GridSpec::standard(Stage::One);
    let cutoff = date(2020, 8, 1);
    let mut problems = Vec::new();

    // (i) storage axis, both stages
    let mut pairs = 0;
    for (stage, starts) in [(Stage::One, g1.start_dates.clone()), (Stage::Two, vec![cutoff])] {
        for &start in &starts {
            for &peak in &g1.peak_dates {
                for w in g1.multipliers.windows(2) {
                    let (lo, hi) = (grids.saving(stage, start, w[0], peak), grids.saving(stage, start, w[1], peak));
                    pairs += 1;
                    if !(hi >= lo) {
                        problems.push(format!("(i) {stage} {start} {peak}: x{} {lo:.6} > x{} {hi:.6}", w[0], w[1]));
                    }
                }
            }
        }
    }

    // (ii) earlier start, multiplier >= 5; start dates are listed latest first
    for &m in g1.multipliers.iter().filter(|&&m| m >= 5.0) {
        for &peak in &g1.peak_dates {
            for w in g1.start_dates.windows(2) {
                let (late, early) = (grids.saving(Stage::One, w[0], m, peak), grids.saving(Stage::One, w[1], m, peak));
                if !(early >= late) {
                    problems.push(format!("(ii) x{m} {peak}: start {} {early:.6} < start {} {late:.6}", w[1], w[0]));
                }
            }
        }
    }

    // (iii) diminishing returns in stage two
    let mut worst_ratio = 0.0_f64;
    for &peak in &g1.peak_dates {
        let s = |m| grids.saving(Stage::Two, cutoff, m, peak);
        let (first, last) = (s(5.0) - s(1.0), s(20.0) - s(15.0));
        worst_ratio = worst_ratio.max(last / first);
        if !(last <= first) {
            problems.push(format!("(iii) {peak}: x15->x20 {last:.6} > x1->x5 {first:.6}"));
        }
    }

    // (iv) corner contrast
    for &peak in &g1.peak_dates {
        let early = grids.saving(Stage::One, date(2020, 2, 7), 10.0, peak);
        let late = grids.saving(Stage::One, date(2020, 3, 11), 1.0, peak);
        if !(early > late) {
            problems.push(format!("(iv) {peak}: 02-07 x10 {early:.4} <= 03-11 x1 {late:.4}"));
        }
    }
    outcome(
        problems.is_empty(),
        format!(
            "{pairs} storage pairs, start-axis and corner checks; worst x15->x20 / x1->x5 ratio {worst_ratio:.3}{}",
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

fn soft_bands(grids: &Grids) -> Outcome {
    let peaks = GridSpec::standard(Stage::One).peak_dates;
    let late: Vec<f64> = peaks.iter().map(|&p| grids.saving(Stage::One, date(2020, 3, 11), 1.0, p)).collect();
    let early: Vec<f64> = peaks.iter().map(|&p| grids.saving(Stage::One, date(2020, 2, 7), 10.0, p)).collect();
    let inside = |v: &[f64], (lo, hi): (f64, f64)| v.iter().all(|s| (lo..=hi).contains(s));
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        format!("{:.1}%..{:.1}%", 100.0 * lo, 100.0 * hi)
    };
    outcome(
        inside(&late, BAND_LATE_SMALL) && inside(&early, BAND_EARLY_LARGE),
        format!(
            "03-11 x1: {} (band 4%..14%); 02-07 x10: {} (band 30%..46%)",
            range(&late),
            range(&early)
        ),
    )
}

fn demand_sanity() -> Outcome {
    let data = bundled_bed_occupancy();
    let (from, to) = (date(2020, 3, 20), date(2020, 4, 15));
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, rule) in [("midpoint", ExtrapolationRule::midpoint()), ("seeded", ExtrapolationRule::default())] {
        let total = total_between(&beds_to_ppe(&data, &rule).unwrap(), from, to);
        let rel = (total - CONSUMPTION_TARGET_KITS).abs() / CONSUMPTION_TARGET_KITS;
        ok &= rel <= CONSUMPTION_REL_TOL;
        parts.push(format!("{name} {:.2}M kits ({:+.1}%)", total / 1e6, 100.0 * (total / CONSUMPTION_TARGET_KITS - 1.0)));
    }
    outcome(ok, parts.join(", "))
}

fn run_cli_grid(stage: &str, workers: &str, out: &Path) -> Result<(Vec<u8>, Duration), String> {
    let started = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_ppe-stock"))
        .env_remove("PPE_STOCK_CONFIG")
        .args(["grid", "--stage", stage, "--workers", workers, "-o", out.to_str().unwrap()])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    if !o.status.success() {
        return Err(format!("grid exited with {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
    }
    let summary = fs::read(out.join("summary.csv")).map_err(|e| e.to_string())?;
    Ok((summary, elapsed))
}

fn determinism_and_runtime() -> (Outcome, Outcome) {
    let dir = tempfile::tempdir().unwrap();
    let runs = [("one", "1", "a"), ("one", "8", "b"), ("two", "1", "c"), ("two", "8", "d")];
    let mut outputs = Vec::new();
    for (stage, workers, name) in runs {
        match run_cli_grid(stage, workers, &dir.path().join(name)) {
            Ok(r) => outputs.push(r),
            Err(e) => return (outcome(false, e.clone()), outcome(false, e)),
        }
    }
    let stage_one_same = outputs[0].0 == outputs[1].0;
    let stage_two_same = outputs[2].0 == outputs[3].0;
    let rows = |b: &[u8]| String::from_utf8_lossy(b).lines().count() - 1;
    let determinism = outcome(
        stage_one_same && stage_two_same,
        format!(
            "summary.csv for workers 1 vs 8: stage one {} ({} rows), stage two {} ({} rows)",
            if stage_one_same { "identical" } else { "DIFFERENT" },
            rows(&outputs[0].0),
            if stage_two_same { "identical" } else { "DIFFERENT" },
            rows(&outputs[2].0)
        ),
    );
    let serial = outputs[0].1;
    let runtime = outcome(
        serial < GRID_TIME_LIMIT && rows(&outputs[0].0) == 125,
        format!("stage-one grid, 125 scenarios, 1 worker: {:.1} s (limit {} s)", serial.as_secs_f64(), GRID_TIME_LIMIT.as_secs()),
    );
    (determinism, runtime)
}

fn main() {
    let mut gating_failures = 0;
    let mut report = |id: u32, name: &str, gating: bool, o: Outcome| {
        let tag = match (gating, o.passed) {
            (true, true) => "PASS",
            (true, false) => {
                gating_failures += 1;
                "FAIL"
            }
            (false, true) => "INFO pass",
            (false, false) => "INFO outside band",
        };
        println!("[{tag}] criterion {id:>2} {name}: {}", o.detail);
    };

    report(1, "analytic equilibrium", true, analytic_equilibrium());
    report(2, "oracle equivalence", true, oracle_equivalence());
    report(3, "best-response optimality", true, best_response_optimality());
    report(4, "gradient check", true, gradient_check());
    let grids = Grids::run();
    report(5, "feasibility and conservation", true, feasibility_and_conservation(&grids));
    report(6, "flattening and cost dominance", true, flattening(&grids));
    report(7, "directional reproduction", true, directional(&grids));
    report(8, "soft numeric bands (not gating)", false, soft_bands(&grids));
    report(9, "demand reconstruction", true, demand_sanity());
    let (determinism, runtime) = determinism_and_runtime();
    report(10, "determinism", true, determinism);
    report(11, "scale and runtime", true, runtime);

    if gating_failures > 0 {
        println!("acceptance: {gating_failures} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all gating criteria passed");
}
