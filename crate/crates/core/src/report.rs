//! Report artifacts: a versioned JSON document per run, a summary table,
//! and per-scenario time series and cumulative-saving series as CSV.

use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::ReportError;
use crate::scenario::{GridSpec, ScenarioConfig, ScenarioOutcome, ScenarioResult};

pub const SCHEMA_VERSION: u32 = 1;

pub const SUMMARY_HEADER: [&str; 12] = [
    "stage",
    "stockpile_start",
    "multiplier",
    "peak_date",
    "saving",
    "grade",
    "converged",
    "sweeps",
    "final_mse",
    "game_cost",
    "reference_cost",
    "runtime_s",
];

pub const AGGREGATE_REGION: &str = "__aggregate__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    /// Configuration the run was started from.
    pub base_config: ScenarioConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub results: Vec<ScenarioOutcome>,
}

impl ReportDocument {
    pub fn new(base_config: ScenarioConfig, grid: Option<GridSpec>, results: Vec<ScenarioOutcome>) -> Self {
        Self { schema_version: SCHEMA_VERSION, base_config, grid, results }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Drops wall-clock timings so repeated runs produce identical files.
pub fn clear_timings(outcomes: &mut [ScenarioOutcome]) {
    for o in outcomes {
        if let ScenarioOutcome::Completed(r) = o {
            r.runtime_s = None;
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, ReportError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

pub fn write_json(document: &ReportDocument, path: &Path) -> Result<(), ReportError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, document)
        .map_err(|source| ReportError::Json { path: path.to_path_buf(), source })?;
    out.write_all(b"\n").map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

/// Parses a report, checking the schema version before the body.
pub fn load_report(path: &Path) -> Result<ReportDocument, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let json_err = |source| ReportError::Json { path: path.to_path_buf(), source };
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(json_err)?;
    let found = raw.get("schema_version").and_then(serde_json::Value::as_u64).unwrap_or(0);
    if found != u64::from(SCHEMA_VERSION) {
        return Err(ReportError::SchemaVersion { found: found.try_into().unwrap_or(u32::MAX), expected: SCHEMA_VERSION });
    }
    serde_json::from_str(&text).map_err(json_err)
}

fn summary_row(outcome: &ScenarioOutcome) -> Vec<String> {
    let c = outcome.config();
    let mut row = vec![
        c.stage.to_string(),
        c.start_date().to_string(),
        c.storage_multiplier.to_string(),
        c.second_wave.peak_date.to_string(),
    ];
    match outcome {
        ScenarioOutcome::Completed(r) => row.extend([
            r.saving.to_string(),
            r.grade.to_string(),
            r.equilibrium.converged.to_string(),
            r.equilibrium.sweeps_used.to_string(),
            r.equilibrium.final_mse.to_string(),
            r.game_cost.to_string(),
            r.reference_cost.to_string(),
            r.runtime_s.map(|s| format!("{s:.3}")).unwrap_or_default(),
        ]),
        ScenarioOutcome::Failed { .. } => {
            row.extend(["".into(), "failed".into(), "false".into()]);
            row.extend(std::iter::repeat_n(String::new(), 5));
        }
    }
    row
}

pub fn write_summary_csv(outcomes: &[ScenarioOutcome], out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for o in outcomes {
        w.write_record(summary_row(o))?;
    }
    w.flush()?;
    Ok(())
}

/// Per-day demand, order and end-of-day stock for every region, followed
/// by the aggregate row for that date.
pub fn write_timeseries_csv(result: &ScenarioResult, out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "region", "demand_kits", "order_kits", "stored_kits"])?;
    let schedules = &result.equilibrium.profile.schedules;
    let horizon = result.demands.first().map_or(0, |d| d.len());
    for t in 0..horizon {
        let date = result.demands[0].date_at(t).to_string();
        let (mut demand, mut order, mut stored) = (0.0, 0.0, 0.0);
        for (profile, schedule) in result.demands.iter().zip(schedules) {
            // Adding zero turns -0 into 0 in the output.
            let d = profile.daily_kits[t] + 0.0;
            let q = schedule.orders[t] + 0.0;
            let s = schedule.states[t + 1] + 0.0;
            demand += d;
            order += q;
            stored += s;
            w.write_record([date.clone(), profile.region.clone(), d.to_string(), q.to_string(), s.to_string()])?;
        }
        w.write_record([date, AGGREGATE_REGION.into(), demand.to_string(), order.to_string(), stored.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cumulative_csv(result: &ScenarioResult, out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "date",
        "reference_cost",
        "game_cost",
        "cumulative_reference",
        "cumulative_game",
        "cumulative_saving",
    ])?;
    for p in result.cumulative_costs() {
        w.write_record([
            p.date.to_string(),
            p.reference_cost.to_string(),
            p.game_cost.to_string(),
            p.cumulative_reference.to_string(),
            p.cumulative_game.to_string(),
            p.cumulative_saving.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_csv_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<(), csv::Error>) -> Result<(), ReportError> {
    let mut out = create(path)?;
    f(&mut out).map_err(csv_err(path))?;
    out.flush().map_err(io_err(path))
}

/// Writes the report into `destination` and returns the paths written.
///
/// JSON produces `report.json`. CSV produces `summary.csv` plus
/// `timeseries/<id>.csv` and `cumulative/<id>.csv` per completed scenario.
pub fn emit_report(
    document: &ReportDocument,
    format: ReportFormat,
    destination: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(destination).map_err(io_err(destination))?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Json => {
            let path = destination.join("report.json");
            write_json(document, &path)?;
            written.push(path);
        }
        ReportFormat::Csv => {
            let path = destination.join("summary.csv");
            write_csv_file(&path, |w| write_summary_csv(&document.results, w))?;
            written.push(path);
            for result in document.results.iter().filter_map(ScenarioOutcome::result) {
                let id = result.config.id();
                let path = destination.join("timeseries").join(format!("{id}.csv"));
                write_csv_file(&path, |w| write_timeseries_csv(result, w))?;
                written.push(path);
                let path = destination.join("cumulative").join(format!("{id}.csv"));
                write_csv_file(&path, |w| write_cumulative_csv(result, w))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
