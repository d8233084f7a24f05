//! `ppe-stock`: demand generation, single scenarios, scenario grids and
//! equilibrium verification from the command line.

mod config;

use clap::{Parser, Subcommand};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use config::{CliConfig, Overrides};
use ppe_stock::demand::{beds_to_ppe, bundled_bed_occupancy, load_bed_occupancy, synthesize_second_wave, write_demand_csv, BedOccupancyTable};
use ppe_stock::report::{clear_timings, emit_report, load_report, ReportDocument, ReportFormat};
use ppe_stock::scenario::{run_grid, run_scenario, ScenarioOutcome, Stage};
use ppe_stock::{verify_equilibrium, DemandError, ModelError, ScenarioError};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;
const EXIT_VERIFY: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "ppe-stock", version, about = "PPE storage-scheduling game: demand profiles, Nash equilibria and scenario grids")]
#[command(after_long_help = "Every configuration flag has a key of the same name (dashes become underscores) \
in the TOML config file. Flags override file values, and file values override the defaults shown.\n\n\
Exit codes: 0 success, 2 usage or configuration error, 3 data or I/O error, \
4 solver did not converge, 5 verification failed.")]
struct Cli {
    /// Flat TOML file with configuration keys
    #[arg(long, global = true, env = "PPE_STOCK_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert bed occupancy into per-region daily PPE demand including the second wave
    GenDemand {
        /// Output CSV (date,region,kits); standard output when absent
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Solve one scenario and write its report
    Solve {
        /// Output directory for report.json, summary.csv and the series
        #[arg(short, long)]
        output: PathBuf,
        /// Record wall-clock runtimes in the report
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the stage-one (125) or stage-two (25) scenario grid
    Grid {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Re-check every schedule and equilibrium in a report
    Verify {
        /// report.json written by solve or grid
        report: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }
}

fn demand_exit(e: &DemandError) -> u8 {
    match e {
        DemandError::Config(_) | DemandError::EmptyHorizon { .. } | DemandError::UnknownRegionName(_) => EXIT_USAGE,
        DemandError::Model(m) => model_exit(m),
        _ => EXIT_DATA,
    }
}

fn model_exit(e: &ModelError) -> u8 {
    match e {
        ModelError::InvalidParam { .. } => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match &e {
            ScenarioError::Invalid(_) => EXIT_USAGE,
            ScenarioError::Demand(d) => demand_exit(d),
            ScenarioError::Model(m) => model_exit(m),
            ScenarioError::Solver(ppe_stock::SolverError::Model(m)) => model_exit(m),
            _ => EXIT_DATA,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<DemandError> for Failure {
    fn from(e: DemandError) -> Self {
        Self { code: demand_exit(&e), message: e.to_string() }
    }
}

impl From<ppe_stock::ReportError> for Failure {
    fn from(e: ppe_stock::ReportError) -> Self {
        Failure::data(e.to_string())
    }
}

fn resolve_config(path: Option<&Path>, overrides: Overrides) -> Result<CliConfig, Failure> {
    let mut config = match path {
        Some(p) => CliConfig::load(p).map_err(|e| Failure::usage(e.to_string()))?,
        None => CliConfig::default(),
    };
    overrides.apply(&mut config);
    Ok(config)
}

fn load_data(config: &CliConfig) -> Result<BedOccupancyTable, Failure> {
    let table = match &config.input {
        None => bundled_bed_occupancy(),
        Some(path) => {
            let file = File::open(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            load_bed_occupancy(io::BufReader::new(file)).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?
        }
    };
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    Ok(table)
}

fn cmd_gen_demand(config: &CliConfig, output: Option<&Path>) -> Result<(), Failure> {
    let data = load_data(config)?;
    let rule = config.extrapolation();
    let wave = config.second_wave();
    let profiles = beds_to_ppe(&data, &rule)?
        .iter()
        .map(|p| synthesize_second_wave(p, &wave))
        .collect::<Result<Vec<_>, _>>()?;
    let write = |out: &mut dyn Write| write_demand_csv(&profiles, out);
    match output {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Failure::data(format!("{}: {e}", parent.display())))?;
            }
            let file = File::create(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            let mut out = BufWriter::new(file);
            write(&mut out).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            out.flush().map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        }
        None => write(&mut io::stdout().lock()).map_err(|e| Failure::data(e.to_string()))?,
    }
    Ok(())
}

fn write_reports(document: &ReportDocument, output: &Path) -> Result<(), Failure> {
    emit_report(document, ReportFormat::Json, output)?;
    emit_report(document, ReportFormat::Csv, output)?;
    Ok(())
}

fn cmd_solve(config: &CliConfig, output: &Path, timings: bool) -> Result<(), Failure> {
    let scenario = config.scenario();
    scenario.validate()?;
    let data = load_data(config)?;
    let result = run_scenario(&scenario, &data)?;
    let mut results = vec![ScenarioOutcome::Completed(Box::new(result))];
    if !timings {
        clear_timings(&mut results);
    }
    let document = ReportDocument::new(scenario, None, results);
    write_reports(&document, output)?;
    let r = document.results[0].result().expect("completed");
    println!(
        "saving={:.4} grade={} sweeps={} converged={} final_mse={:.3}",
        r.saving, r.grade, r.equilibrium.sweeps_used, r.equilibrium.converged, r.equilibrium.final_mse
    );
    if r.equilibrium.converged {
        Ok(())
    } else {
        Err(Failure { code: EXIT_NOT_CONVERGED, message: "best-response dynamics did not converge".into() })
    }
}

fn print_grade_matrix(config: &CliConfig, outcomes: &[ScenarioOutcome]) {
    let peaks = &config.peak_dates;
    let cell = |o: &ScenarioOutcome| match o {
        ScenarioOutcome::Completed(r) => format!("{} {:>5.1}%", r.grade, 100.0 * r.saving),
        ScenarioOutcome::Failed { .. } => "failed".to_string(),
    };
    let block = peaks.len() * config.multipliers.len();
    for chunk in outcomes.chunks(block.max(1)) {
        let first = chunk[0].config();
        match first.stage {
            Stage::One => println!("stockpile start {}", first.start_date()),
            Stage::Two => println!("stage two from {}", first.start_date()),
        }
        print!("{:>10}", "storage");
        for p in peaks {
            print!("  {:>18}", p.to_string());
        }
        println!();
        for row in chunk.chunks(peaks.len().max(1)) {
            print!("{:>10}", format!("x{}", row[0].config().storage_multiplier));
            for o in row {
                print!("  {:>18}", cell(o));
            }
            println!();
        }
        println!();
    }
}

fn cmd_grid(config: &CliConfig, output: &Path, timings: bool) -> Result<(), Failure> {
    let base = config.scenario();
    base.params.validate().map_err(|e| Failure::usage(e.to_string()))?;
    base.extrapolation.validate()?;
    if config.workers == 0 {
        return Err(Failure::usage("workers must be at least 1"));
    }
    let data = load_data(config)?;
    let grid = config.grid();
    let mut outcomes = run_grid(&grid, &base, &data, config.workers)?;
    if !timings {
        clear_timings(&mut outcomes);
    }
    let document = ReportDocument::new(base, Some(grid), outcomes);
    write_reports(&document, output)?;
    print_grade_matrix(config, &document.results);

    let mut unconverged = 0;
    for o in &document.results {
        match o {
            ScenarioOutcome::Completed(r) if !r.equilibrium.converged => {
                eprintln!("not converged: {}", r.config.id());
                unconverged += 1;
            }
            ScenarioOutcome::Failed { config, error } => {
                eprintln!("failed: {}: {error}", config.id());
                unconverged += 1;
            }
            _ => {}
        }
    }
    if unconverged == 0 {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_NOT_CONVERGED,
            message: format!("{unconverged} of {} scenarios did not converge", document.results.len()),
        })
    }
}

fn verify_outcome(outcome: &ScenarioOutcome, config: &CliConfig) -> Vec<String> {
    let result = match outcome {
        ScenarioOutcome::Completed(r) => r,
        ScenarioOutcome::Failed { error, .. } => return vec![format!("scenario failed: {error}")],
    };
    let game = match result.game() {
        Ok(g) => g,
        Err(e) => return vec![format!("inconsistent game: {e}")],
    };
    let report = verify_equilibrium(&result.equilibrium, &game, &config.verify_options());
    let mut failures = report.failures;
    if failures.is_empty() {
        let aggregate = result.equilibrium.profile.aggregate_orders();
        let drift = aggregate
            .iter()
            .zip(&result.equilibrium.aggregate_orders)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if aggregate.len() != result.equilibrium.aggregate_orders.len() || drift > ppe_stock::model::FEASIBILITY_TOL {
            failures.push(format!("aggregate orders disagree with the schedules by {drift:.3e} kits"));
        }
        let costs = game.player_costs(&result.equilibrium.profile);
        for ((stored, actual), d) in result.equilibrium.per_player_costs.iter().zip(&costs).zip(&game.demands) {
            if (stored - actual).abs() > 1e-9 * actual.abs().max(1.0) {
                failures.push(format!("{}: reported cost {stored} differs from recomputed {actual}", d.region));
            }
        }
    }
    failures
}

fn cmd_verify(config: &CliConfig, report: &Path) -> Result<(), Failure> {
    let document = load_report(report)?;
    let mut failed = 0;
    for outcome in &document.results {
        let id = outcome.config().id();
        let failures = verify_outcome(outcome, config);
        if failures.is_empty() {
            println!("PASS {id}");
        } else {
            failed += 1;
            println!("FAIL {id}");
            for f in failures {
                println!("  {f}");
            }
        }
    }
    if failed == 0 {
        println!("all {} scenarios verified", document.results.len());
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: format!("{failed} of {} scenarios failed verification", document.results.len()),
        })
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::GenDemand { output, overrides } => {
            let config = resolve_config(config_path, overrides)?;
            cmd_gen_demand(&config, output.as_deref())
        }
        Command::Solve { output, timings, overrides } => {
            let config = resolve_config(config_path, overrides)?;
            cmd_solve(&config, &output, timings)
        }
        Command::Grid { output, timings, overrides } => {
            let config = resolve_config(config_path, overrides)?;
            cmd_grid(&config, &output, timings)
        }
        Command::Verify { report, overrides } => {
            let config = resolve_config(config_path, overrides)?;
            cmd_verify(&config, &report)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
