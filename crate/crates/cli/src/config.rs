//! Flat TOML configuration. Every key can also be given as a command-line
//! flag with underscores replaced by dashes; flags win over the file.

use chrono::NaiveDate;
use clap::Args;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use ppe_stock::demand::{ExtrapolationRule, FactorMode, SecondWaveSpec};
use ppe_stock::scenario::{standard_start_dates, GridSpec, ScenarioConfig, Stage, STANDARD_MULTIPLIERS};
use ppe_stock::{GameParams, VerifyOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub quad_coeff: f64,
    pub lin_coeff: f64,
    pub terminal_weight: f64,
    pub br_tolerance: f64,
    pub mse_threshold: f64,
    pub max_sweeps: usize,

    #[serde(deserialize_with = "dates::one")]
    pub cutover_date: NaiveDate,
    pub early_factor_min: f64,
    pub early_factor_max: f64,
    pub late_factor_min: f64,
    pub late_factor_max: f64,
    pub seed: u64,
    pub mode: FactorMode,

    #[serde(deserialize_with = "dates::one")]
    pub peak_date: NaiveDate,
    pub peak_scale: f64,
    pub rise_days: u32,
    pub fall_days: u32,

    pub stage: Stage,
    #[serde(deserialize_with = "dates::one")]
    pub stockpile_start: NaiveDate,
    pub multiplier: f64,

    #[serde(deserialize_with = "dates::many")]
    pub start_dates: Vec<NaiveDate>,
    pub multipliers: Vec<f64>,
    #[serde(deserialize_with = "dates::many")]
    pub peak_dates: Vec<NaiveDate>,
    pub workers: usize,

    /// Bed-occupancy CSV; the bundled snapshot when absent.
    pub input: Option<PathBuf>,

    pub verify_eps: f64,
    pub verify_deviations: usize,
    pub verify_seed: u64,
}

impl Default for CliConfig {
    fn default() -> Self {
        let params = GameParams::default();
        let rule = ExtrapolationRule::default();
        let wave = SecondWaveSpec::default();
        let scenario = ScenarioConfig::default();
        let verify = VerifyOptions::default();
        Self {
            quad_coeff: params.quad_coeff,
            lin_coeff: params.lin_coeff,
            terminal_weight: params.terminal_weight,
            br_tolerance: params.br_tolerance,
            mse_threshold: params.mse_threshold,
            max_sweeps: params.max_sweeps,
            cutover_date: rule.cutover_date,
            early_factor_min: rule.early_range.0,
            early_factor_max: rule.early_range.1,
            late_factor_min: rule.late_range.0,
            late_factor_max: rule.late_range.1,
            seed: rule.seed,
            mode: rule.mode,
            peak_date: wave.peak_date,
            peak_scale: wave.peak_scale,
            rise_days: wave.rise_days,
            fall_days: wave.fall_days,
            stage: scenario.stage,
            stockpile_start: scenario.stockpile_start,
            multiplier: scenario.storage_multiplier,
            start_dates: standard_start_dates().to_vec(),
            multipliers: STANDARD_MULTIPLIERS.to_vec(),
            peak_dates: SecondWaveSpec::standard_peaks().to_vec(),
            workers: 1,
            input: None,
            verify_eps: verify.eps,
            verify_deviations: verify.deviations,
            verify_seed: verify.seed,
        }
    }
}

/// Dates may be written as TOML date literals or as quoted strings.
mod dates {
    use chrono::NaiveDate;
    use serde::de::{Deserializer, Error};
    use serde::Deserialize;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Literal(toml::value::Datetime),
        Text(String),
    }

    fn parse<E: Error>(r: Repr) -> Result<NaiveDate, E> {
        let text = match r {
            Repr::Literal(d) if d.time.is_none() && d.offset.is_none() => d.to_string(),
            Repr::Literal(d) => return Err(E::custom(format!("expected a date without time, got {d}"))),
            Repr::Text(t) => t,
        };
        NaiveDate::parse_from_str(&text, "%Y-%m-%d").map_err(|e| E::custom(format!("invalid date {text:?}: {e}")))
    }

    pub fn one<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
        parse(Repr::deserialize(d)?)
    }

    pub fn many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<NaiveDate>, D::Error> {
        Vec::<Repr>::deserialize(d)?.into_iter().map(parse).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    pub fn params(&self) -> GameParams {
        GameParams {
            quad_coeff: self.quad_coeff,
            lin_coeff: self.lin_coeff,
            terminal_weight: self.terminal_weight,
            br_tolerance: self.br_tolerance,
            mse_threshold: self.mse_threshold,
            max_sweeps: self.max_sweeps,
        }
    }

    pub fn extrapolation(&self) -> ExtrapolationRule {
        ExtrapolationRule {
            cutover_date: self.cutover_date,
            early_range: (self.early_factor_min, self.early_factor_max),
            late_range: (self.late_factor_min, self.late_factor_max),
            seed: self.seed,
            mode: self.mode,
        }
    }

    pub fn second_wave(&self) -> SecondWaveSpec {
        SecondWaveSpec {
            peak_date: self.peak_date,
            peak_scale: self.peak_scale,
            rise_days: self.rise_days,
            fall_days: self.fall_days,
        }
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            stage: self.stage,
            stockpile_start: self.stockpile_start,
            second_wave: self.second_wave(),
            storage_multiplier: self.multiplier,
            params: self.params(),
            extrapolation: self.extrapolation(),
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            stage: self.stage,
            start_dates: self.start_dates.clone(),
            multipliers: self.multipliers.clone(),
            peak_dates: self.peak_dates.clone(),
        }
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions { eps: self.verify_eps, deviations: self.verify_deviations, seed: self.verify_seed }
    }
}

/// Overrides for configuration keys, shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
#[command(next_help_heading = "Configuration (flag = config-file key)")]
pub struct Overrides {
    /// Quadratic tariff coefficient a in C(Q) = aQ² + bQ [default: 8e-6]
    #[arg(long)]
    pub quad_coeff: Option<f64>,
    /// Linear tariff coefficient b [default: 0.01]
    #[arg(long)]
    pub lin_coeff: Option<f64>,
    /// Cost per kit left in store at the end of the horizon [default: 1]
    #[arg(long)]
    pub terminal_weight: Option<f64>,
    /// Relative optimality gap accepted for a best response [default: 1e-6]
    #[arg(long)]
    pub br_tolerance: Option<f64>,
    /// Inter-sweep MSE of orders (kits²) that stops the dynamics [default: 10]
    #[arg(long)]
    pub mse_threshold: Option<f64>,
    /// Sweep cap before giving up as not converged [default: 500]
    #[arg(long)]
    pub max_sweeps: Option<usize>,

    /// Last day converted with the early kits-per-bed range [default: 2020-04-02]
    #[arg(long)]
    pub cutover_date: Option<NaiveDate>,
    /// Early kits-per-bed range, lower end [default: 210]
    #[arg(long)]
    pub early_factor_min: Option<f64>,
    /// Early kits-per-bed range, upper end [default: 240]
    #[arg(long)]
    pub early_factor_max: Option<f64>,
    /// Late kits-per-bed range, lower end [default: 150]
    #[arg(long)]
    pub late_factor_min: Option<f64>,
    /// Late kits-per-bed range, upper end [default: 180]
    #[arg(long)]
    pub late_factor_max: Option<f64>,
    /// Seed of the kits-per-bed draws [default: 2020]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Kits-per-bed factor mode: seeded-uniform or midpoint [default: seeded-uniform]
    #[arg(long)]
    pub mode: Option<FactorMode>,

    /// Second-wave peak date (single scenario) [default: 2020-10-15]
    #[arg(long)]
    pub peak_date: Option<NaiveDate>,
    /// Second-wave peak as a fraction of the first-wave maximum [default: 0.75]
    #[arg(long)]
    pub peak_scale: Option<f64>,
    /// Days from second-wave onset to peak [default: 90]
    #[arg(long)]
    pub rise_days: Option<u32>,
    /// Days from second-wave peak back to zero; the horizon ends there [default: 100]
    #[arg(long)]
    pub fall_days: Option<u32>,

    /// Stage: one (stockpile start to end of second wave) or two (from 2020-08-01) [default: one]
    #[arg(long)]
    pub stage: Option<Stage>,
    /// Stockpiling start date for a stage-one scenario [default: 2020-02-28]
    #[arg(long = "start", visible_alias = "stockpile-start")]
    pub stockpile_start: Option<NaiveDate>,
    /// Storage multiplier on the regional base capacities [default: 5]
    #[arg(long)]
    pub multiplier: Option<f64>,

    /// Grid start dates, comma separated [default: 2020-03-20,2020-03-11,2020-02-28,2020-02-07,2020-01-31]
    #[arg(long, value_delimiter = ',')]
    pub start_dates: Option<Vec<NaiveDate>>,
    /// Grid storage multipliers, comma separated [default: 1,5,10,15,20]
    #[arg(long, value_delimiter = ',')]
    pub multipliers: Option<Vec<f64>>,
    /// Grid second-wave peaks, comma separated [default: the 15th of each month Oct 2020 to Feb 2021]
    #[arg(long, value_delimiter = ',')]
    pub peak_dates: Option<Vec<NaiveDate>>,
    /// Worker threads for the grid [default: 1]
    #[arg(long)]
    pub workers: Option<usize>,

    /// Bed-occupancy CSV (date,region,beds) [default: bundled snapshot]
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// Relative utility gain a deviation may achieve in verify [default: 1e-6]
    #[arg(long = "eps", visible_alias = "verify-eps")]
    pub verify_eps: Option<f64>,
    /// Random deviations per player in verify [default: 1000]
    #[arg(long)]
    pub verify_deviations: Option<usize>,
    /// Seed of the verify deviations [default: 24301]
    #[arg(long)]
    pub verify_seed: Option<u64>,
}

impl Overrides {
    pub fn apply(self, config: &mut CliConfig) {
        macro_rules! set {
            ($($field:ident),* $(,)?) => {
                $(if let Some(v) = self.$field { config.$field = v; })*
            };
        }
        set!(
            quad_coeff,
            lin_coeff,
            terminal_weight,
            br_tolerance,
            mse_threshold,
            max_sweeps,
            cutover_date,
            early_factor_min,
            early_factor_max,
            late_factor_min,
            late_factor_max,
            seed,
            mode,
            peak_date,
            peak_scale,
            rise_days,
            fall_days,
            stage,
            stockpile_start,
            multiplier,
            start_dates,
            multipliers,
            peak_dates,
            workers,
            verify_eps,
            verify_deviations,
            verify_seed,
        );
        if self.input.is_some() {
            config.input = self.input;
        }
    }
}
