//! Scenario harness: builds the regional game for one configuration, solves
//! it, and scores the equilibrium against the no-storage reference.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::time::Instant;

use crate::demand::{
    beds_to_ppe, clip_horizon, data_cutoff, synthesize_second_wave, BedOccupancyTable, ExtrapolationRule, SecondWaveSpec,
};
use crate::error::ScenarioError;
use crate::model::{aggregate_cost, stable_sum, DemandProfile, GameParams, StorageSpec};
use crate::nash::{solve_nash, EquilibriumResult, Game};
use crate::region::Region;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// From a stockpiling start date through the end of the second wave.
    One,
    /// Second wave only, starting at the data cutoff.
    Two,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::One => "one",
            Stage::Two => "two",
        })
    }
}

impl std::str::FromStr for Stage {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one" | "1" => Ok(Stage::One),
            "two" | "2" => Ok(Stage::Two),
            other => Err(ScenarioError::Invalid(format!("unknown stage {other:?} (expected one or two)"))),
        }
    }
}

/// Candidate stockpiling triggers, latest first.
pub fn standard_start_dates() -> [NaiveDate; 5] {
    [(3, 20), (3, 11), (2, 28), (2, 7), (1, 31)].map(|(m, d)| NaiveDate::from_ymd_opt(2020, m, d).expect("valid date"))
}

pub const STANDARD_MULTIPLIERS: [f64; 5] = [1.0, 5.0, 10.0, 15.0, 20.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub stage: Stage,
    /// Ignored for stage two, which always starts at the data cutoff.
    pub stockpile_start: NaiveDate,
    pub second_wave: SecondWaveSpec,
    pub storage_multiplier: f64,
    pub params: GameParams,
    pub extrapolation: ExtrapolationRule,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            stage: Stage::One,
            stockpile_start: NaiveDate::from_ymd_opt(2020, 2, 28).expect("valid date"),
            second_wave: SecondWaveSpec::default(),
            storage_multiplier: 5.0,
            params: GameParams::default(),
            extrapolation: ExtrapolationRule::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn start_date(&self) -> NaiveDate {
        match self.stage {
            Stage::One => self.stockpile_start,
            Stage::Two => data_cutoff(),
        }
    }

    pub fn end_date(&self) -> NaiveDate {
        self.second_wave.end_date()
    }

    /// File-name friendly identifier, unique within a grid.
    pub fn id(&self) -> String {
        format!(
            "stage-{}_start-{}_x{}_peak-{}",
            self.stage,
            self.start_date(),
            self.storage_multiplier,
            self.second_wave.peak_date
        )
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.params.validate()?;
        self.extrapolation.validate()?;
        self.second_wave.validate()?;
        if !(self.storage_multiplier.is_finite() && self.storage_multiplier > 0.0) {
            return Err(ScenarioError::Invalid(format!("storage multiplier must be positive, got {}", self.storage_multiplier)));
        }
        if self.start_date() > self.end_date() {
            return Err(ScenarioError::Invalid(format!(
                "empty horizon: start {} is after the end of the second wave {}",
                self.start_date(),
                self.end_date()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grade {
    DarkRed,
    Red,
    Amber,
    LightGreen,
    DarkGreen,
}

impl Grade {
    pub fn as_str(self) -> &'static str {
        match self {
            Grade::DarkRed => "dark-red",
            Grade::Red => "red",
            Grade::Amber => "amber",
            Grade::LightGreen => "light-green",
            Grade::DarkGreen => "dark-green",
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Buckets a saving fraction: a higher saving means a flatter order
/// profile and a lower supply challenge.
pub fn challenge_grade(saving: f64) -> Grade {
    match saving {
        s if s < 0.05 => Grade::DarkRed,
        s if s < 0.15 => Grade::Red,
        s if s < 0.25 => Grade::Amber,
        s if s < 0.35 => Grade::LightGreen,
        _ => Grade::DarkGreen,
    }
}

/// Cost of the no-storage profile where every player orders its demand.
pub fn reference_cost(demands: &[DemandProfile], params: &GameParams) -> Result<f64, ScenarioError> {
    let horizon = demands.first().map_or(0, DemandProfile::len);
    let mut daily = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let total = stable_sum(demands.iter().map(|d| d.daily_kits[t]));
        daily.push(aggregate_cost(total, params)?);
    }
    Ok(stable_sum(daily))
}

pub fn cost_saving(game_cost: f64, reference_cost: f64) -> Result<f64, ScenarioError> {
    if reference_cost > 0.0 {
        Ok(1.0 - game_cost / reference_cost)
    } else if game_cost <= 0.0 {
        Ok(0.0)
    } else {
        Err(ScenarioError::UndefinedSaving { game_cost })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub demands: Vec<DemandProfile>,
    pub capacities: Vec<StorageSpec>,
    pub equilibrium: EquilibriumResult,
    pub reference_cost: f64,
    pub game_cost: f64,
    pub saving: f64,
    pub grade: Grade,
    /// Wall-clock seconds; not part of the deterministic output.
    pub runtime_s: Option<f64>,
}

impl ScenarioResult {
    pub fn start_date(&self) -> NaiveDate {
        self.config.start_date()
    }

    /// Rebuilds the game this result was solved on.
    pub fn game(&self) -> Result<Game, ScenarioError> {
        Ok(Game::new(self.demands.clone(), self.capacities.clone(), self.config.params)?)
    }

    pub fn aggregate_demand(&self) -> Vec<f64> {
        let horizon = self.demands.first().map_or(0, DemandProfile::len);
        (0..horizon).map(|t| self.demands.iter().map(|d| d.daily_kits[t]).sum()).collect()
    }

    /// Daily reference and game costs with running totals and the
    /// cumulative saving to date.
    pub fn cumulative_costs(&self) -> Vec<CumulativePoint> {
        let params = &self.config.params;
        let demand = self.aggregate_demand();
        let terminal: f64 = params.terminal_weight
            * self.equilibrium.profile.schedules.iter().map(|s| s.final_state()).sum::<f64>();
        let mut cum_ref = 0.0;
        let mut cum_game = 0.0;
        let horizon = demand.len();
        (0..horizon)
            .map(|t| {
                let reference = params.quad_coeff * demand[t] * demand[t] + params.lin_coeff * demand[t];
                let q = self.equilibrium.aggregate_orders[t].max(0.0);
                let mut game = params.quad_coeff * q * q + params.lin_coeff * q;
                if t + 1 == horizon {
                    game += terminal;
                }
                cum_ref += reference;
                cum_game += game;
                CumulativePoint {
                    date: self.start_date() + chrono::Days::new(t as u64),
                    reference_cost: reference,
                    game_cost: game,
                    cumulative_reference: cum_ref,
                    cumulative_game: cum_game,
                    cumulative_saving: if cum_ref > 0.0 { 1.0 - cum_game / cum_ref } else { 0.0 },
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulativePoint {
    pub date: NaiveDate,
    pub reference_cost: f64,
    pub game_cost: f64,
    pub cumulative_reference: f64,
    pub cumulative_game: f64,
    pub cumulative_saving: f64,
}

/// Demand profiles (canonical region order) for one scenario: extrapolated
/// beds, the second wave appended, clipped to the scenario horizon.
pub fn scenario_demands(config: &ScenarioConfig, data: &BedOccupancyTable) -> Result<Vec<DemandProfile>, ScenarioError> {
    config.validate()?;
    let first_wave = beds_to_ppe(data, &config.extrapolation)?;
    first_wave
        .iter()
        .map(|p| {
            let full = synthesize_second_wave(p, &config.second_wave)?;
            Ok(clip_horizon(&full, config.start_date(), config.end_date())?)
        })
        .collect()
}

pub fn scenario_capacities(multiplier: f64) -> Result<Vec<StorageSpec>, ScenarioError> {
    Region::ALL
        .iter()
        .map(|r| Ok(StorageSpec::new(r.name(), r.base_storage_kits(), multiplier)?))
        .collect()
}

/// Runs one scenario end to end: demand, capacities, equilibrium from
/// empty stores, reference cost, saving and grade.
pub fn run_scenario(config: &ScenarioConfig, data: &BedOccupancyTable) -> Result<ScenarioResult, ScenarioError> {
    let started = Instant::now();
    let demands = scenario_demands(config, data)?;
    let capacities = scenario_capacities(config.storage_multiplier)?;
    let game = Game::new(demands, capacities, config.params)?;
    let equilibrium = solve_nash(&game)?;
    let reference = reference_cost(&game.demands, &config.params)?;
    let game_cost = stable_sum(equilibrium.per_player_costs.iter().copied());
    let saving = cost_saving(game_cost, reference)?;
    let Game { demands, capacities, .. } = game;
    Ok(ScenarioResult {
        config: *config,
        demands,
        capacities,
        equilibrium,
        reference_cost: reference,
        game_cost,
        saving,
        grade: challenge_grade(saving),
        runtime_s: Some(started.elapsed().as_secs_f64()),
    })
}

/// Axes of a scenario grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub stage: Stage,
    /// Only used by stage one.
    pub start_dates: Vec<NaiveDate>,
    pub multipliers: Vec<f64>,
    pub peak_dates: Vec<NaiveDate>,
}

impl GridSpec {
    /// 5 × 5 × 5 for stage one, 5 × 5 for stage two.
    pub fn standard(stage: Stage) -> Self {
        Self {
            stage,
            start_dates: standard_start_dates().to_vec(),
            multipliers: STANDARD_MULTIPLIERS.to_vec(),
            peak_dates: SecondWaveSpec::standard_peaks().to_vec(),
        }
    }

    /// Scenario configurations in canonical order: start date as listed,
    /// then multiplier, then peak date.
    pub fn configs(&self, base: &ScenarioConfig) -> Vec<ScenarioConfig> {
        let starts = match self.stage {
            Stage::One => self.start_dates.clone(),
            Stage::Two => vec![data_cutoff()],
        };
        let mut out = Vec::new();
        for &start in &starts {
            for &multiplier in &self.multipliers {
                for &peak in &self.peak_dates {
                    out.push(ScenarioConfig {
                        stage: self.stage,
                        stockpile_start: start,
                        second_wave: SecondWaveSpec { peak_date: peak, ..base.second_wave },
                        storage_multiplier: multiplier,
                        ..*base
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ScenarioOutcome {
    Completed(Box<ScenarioResult>),
    Failed { config: ScenarioConfig, error: String },
}

impl ScenarioOutcome {
    pub fn config(&self) -> &ScenarioConfig {
        match self {
            ScenarioOutcome::Completed(r) => &r.config,
            ScenarioOutcome::Failed { config, .. } => config,
        }
    }

    pub fn result(&self) -> Option<&ScenarioResult> {
        match self {
            ScenarioOutcome::Completed(r) => Some(r),
            ScenarioOutcome::Failed { .. } => None,
        }
    }
}

/// Runs every scenario of the grid on up to `workers` threads. Failures are
/// kept in place; the output order is canonical whatever the schedule.
pub fn run_grid(
    grid: &GridSpec,
    base: &ScenarioConfig,
    data: &BedOccupancyTable,
    workers: usize,
) -> Result<Vec<ScenarioOutcome>, ScenarioError> {
    let configs = grid.configs(base);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ScenarioError::Invalid(format!("could not start worker pool: {e}")))?;
    Ok(pool.install(|| {
        configs
            .par_iter()
            .map(|config| match run_scenario(config, data) {
                Ok(r) => ScenarioOutcome::Completed(Box::new(r)),
                Err(e) => ScenarioOutcome::Failed { config: *config, error: e.to_string() },
            })
            .collect()
    }))
}
