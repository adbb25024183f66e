//! Command-line surface.
//!
//! Subcommands compose through files: `simulate → calibrate → trend →
//! census` is the canonical pipeline, `sweep`/`compare` branch off it, and
//! `report` runs the whole analysis in one shot. Exit codes: 0 success,
//! 1 usage error, 2 data error. Diagnostics go to stderr; data goes to the
//! requested files or stdout.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::calibration::DEFAULT_SIGMA_NU_SQUARED;
use crate::compare::{trend_census, LabeledTrends};
use crate::io::{
    group_trend_records, load_dataset, read_series_csv, read_trend_records_csv,
    write_calibration_fits_csv, write_json_pretty, write_reference_csv, write_series_csv,
    write_sweep_csv, write_trend_records_csv, write_triplets_csv, DataError, DatasetPaths,
    RunConfig, TrendRecord,
};
use crate::report::{
    compare_pair, render_agreement_text, render_breakdown_text, render_census_csv,
    render_censuses_text, run_pipeline, write_deltas_csv, write_report, ComparisonDoc,
    ReportFormat,
};
use crate::series::YearMonth;
use crate::synth::{generate_network, SpikeSpec, SynthSpec};
use crate::trend::{classify, fit_trend, start_date_sweep, TrendError};

#[derive(Debug, Parser)]
#[command(
    name = "nh3trend",
    version,
    about = "Uncertainty-aware trend analysis for two-tier ammonia monitoring networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic two-tier network with recorded ground truth
    Simulate(SimulateArgs),
    /// Fit monthly calibrations, correct the area network, fill gaps
    Calibrate(CalibrateArgs),
    /// Fit per-station trends over a series file
    Trend(TrendArgs),
    /// Refit one station's trend from every possible start month
    Sweep(SweepArgs),
    /// Count trend signs and significance in a trend file
    Census(CensusArgs),
    /// Cross-tabulate two trend files station by station
    Compare(CompareArgs),
    /// Run the full analysis and write the report artifacts
    Report(ReportArgs),
}

/// Flags shared by every inference-running subcommand.
#[derive(Debug, Clone, Copy, Args)]
struct InferenceArgs {
    /// Significance threshold
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Measurement-error variance added for calibrated values
    #[arg(long = "sigma-nu", default_value_t = DEFAULT_SIGMA_NU_SQUARED)]
    sigma_nu: f64,
    /// Imputation variance added on top for gap-filled values
    #[arg(long = "sigma-tau", default_value_t = 0.0)]
    sigma_tau: f64,
    /// Classify with error-adjusted p-values (default)
    #[arg(long, overrides_with = "naive")]
    adjusted: bool,
    /// Classify with naive p-values
    #[arg(long, overrides_with = "adjusted")]
    naive: bool,
}

impl InferenceArgs {
    fn use_adjusted(&self) -> bool {
        !self.naive
    }

    fn config(&self) -> RunConfig {
        RunConfig {
            alpha: self.alpha,
            sigma_nu_squared: self.sigma_nu,
            sigma_tau_squared: self.sigma_tau,
            ..RunConfig::default()
        }
    }
}

fn parse_spike(text: &str) -> Result<SpikeSpec, String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err("expected STATION,MONTH,MAGNITUDE (0-based indices)".to_string());
    }
    Ok(SpikeSpec {
        station: parts[0].trim().parse().map_err(|e| format!("station: {e}"))?,
        month: parts[1].trim().parse().map_err(|e| format!("month: {e}"))?,
        magnitude: parts[2].trim().parse().map_err(|e| format!("magnitude: {e}"))?,
    })
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Directory for reference.csv, triplets.csv, man_raw.csv, ground_truth.json
    #[arg(long)]
    out: PathBuf,
    /// Generator seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Reference stations
    #[arg(long = "n-reference", default_value_t = 6)]
    n_reference: usize,
    /// Area stations
    #[arg(long = "n-area", default_value_t = 294)]
    n_area: usize,
    /// Months generated
    #[arg(long = "n-months", default_value_t = 156)]
    n_months: usize,
    /// First calendar month (YYYY-MM)
    #[arg(long, default_value = "2005-01")]
    start: YearMonth,
    /// Probability an area station-month is missing
    #[arg(long = "missing-rate", default_value_t = 0.05)]
    missing_rate: f64,
    /// Plant a spike: STATION,MONTH,MAGNITUDE (0-based indices)
    #[arg(long, value_parser = parse_spike)]
    spike: Option<SpikeSpec>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Reference series CSV
    #[arg(long)]
    reference: PathBuf,
    /// Co-located sampler triplet CSV
    #[arg(long)]
    triplets: PathBuf,
    /// Raw area-network series CSV
    #[arg(long)]
    raw: PathBuf,
    /// Directory for calibration_fits.csv, calibrated.csv,
    /// calibrated_imputed.csv, error_model.json
    #[arg(long)]
    out: PathBuf,
    /// Predictive-interval probability level
    #[arg(long, default_value_t = 0.90)]
    level: f64,
    /// Minimum usable co-located stations per month
    #[arg(long = "min-stations", default_value_t = 3)]
    min_stations: usize,
}

#[derive(Debug, Args)]
struct TrendArgs {
    /// Station series CSV to analyze
    #[arg(long)]
    input: PathBuf,
    /// Output trend records CSV
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    inference: InferenceArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Station series CSV to analyze
    #[arg(long)]
    input: PathBuf,
    /// Station id to sweep
    #[arg(long)]
    station: String,
    /// Output sweep CSV
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    inference: InferenceArgs,
}

#[derive(Debug, Args)]
struct CensusArgs {
    /// Trend records CSV
    #[arg(long)]
    trends: PathBuf,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format
    #[arg(long, default_value = "text", value_parser = ["text", "csv"])]
    format: String,
    #[command(flatten)]
    inference: InferenceArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// First trend records CSV
    #[arg(long)]
    a: PathBuf,
    /// Second trend records CSV
    #[arg(long)]
    b: PathBuf,
    /// Directory for comparison.json and deltas.csv
    #[arg(long)]
    out: PathBuf,
    /// Significance threshold
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Reference series CSV
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Co-located sampler triplet CSV
    #[arg(long)]
    triplets: Option<PathBuf>,
    /// Raw area-network series CSV
    #[arg(long)]
    raw: Option<PathBuf>,
    /// Pre-computed calibrated series CSV
    #[arg(long)]
    calibrated: Option<PathBuf>,
    /// Pre-computed gap-filled series CSV
    #[arg(long)]
    imputed: Option<PathBuf>,
    /// Directory for report files and deltas.csv
    #[arg(long)]
    out: PathBuf,
    /// Write only this report format (default: json, text, and csv)
    #[arg(long, value_parser = ["json", "text", "csv"])]
    format: Option<String>,
    /// Predictive-interval probability level
    #[arg(long, default_value_t = 0.90)]
    level: f64,
    /// Minimum usable co-located stations per month
    #[arg(long = "min-stations", default_value_t = 3)]
    min_stations: usize,
    /// Minimum observed months for a yearly aggregate
    #[arg(long = "min-months-yearly", default_value_t = 6)]
    min_months_yearly: usize,
    /// Seed recorded in the configuration
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    inference: InferenceArgs,
}

/// Parse and run one invocation; returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            return 1;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<(), DataError> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Calibrate(args) => calibrate(args),
        Command::Trend(args) => trend(args),
        Command::Sweep(args) => sweep(args),
        Command::Census(args) => census(args),
        Command::Compare(args) => compare(args),
        Command::Report(args) => report(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<(), DataError> {
    let spec = SynthSpec {
        n_reference_stations: args.n_reference,
        n_area_stations: args.n_area,
        n_months: args.n_months,
        start: args.start,
        missing_rate: args.missing_rate,
        spike: args.spike,
        seed: args.seed,
        ..SynthSpec::default()
    };
    let net = generate_network(&spec).map_err(|e| {
        DataError::InvalidConfig(match e {
            crate::synth::SynthError::InvalidSpec(msg) => msg,
            _ => "synthetic generation failed",
        })
    })?;
    std::fs::create_dir_all(&args.out)?;
    write_reference_csv(args.out.join("reference.csv"), &net.reference)?;
    write_triplets_csv(args.out.join("triplets.csv"), &net.observations)?;
    write_series_csv(args.out.join("man_raw.csv"), &net.raw_area)?;
    write_json_pretty(args.out.join("ground_truth.json"), &net.ground_truth)?;
    eprintln!(
        "simulated {} reference + {} area stations over {} months (seed {}) into {}",
        spec.n_reference_stations,
        spec.n_area_stations,
        spec.n_months,
        spec.seed,
        args.out.display()
    );
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<(), DataError> {
    let bundle = load_dataset(&DatasetPaths {
        reference: Some(args.reference),
        triplets: Some(args.triplets),
        man_raw: Some(args.raw),
        ..DatasetPaths::default()
    })?;
    let config = RunConfig {
        level: args.level,
        min_stations: args.min_stations,
        ..RunConfig::default()
    };
    let art = run_pipeline(&bundle, &config)?;
    for w in &art.warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(&args.out)?;
    write_calibration_fits_csv(args.out.join("calibration_fits.csv"), &art.calibration_fits)?;
    write_series_csv(args.out.join("calibrated.csv"), &art.calibrated)?;
    write_series_csv(
        args.out.join("calibrated_imputed.csv"),
        &art.calibrated_imputed,
    )?;
    match &art.error_model {
        Some(model) => write_json_pretty(args.out.join("error_model.json"), model)?,
        None => eprintln!("warning: no error model (too few calibrated pairs)"),
    }
    eprintln!(
        "calibrated {} months, {} stations into {}",
        art.calibration_fits.len(),
        art.calibrated.len(),
        args.out.display()
    );
    Ok(())
}

fn trend(args: TrendArgs) -> Result<(), DataError> {
    let series_set = read_series_csv(&args.input)?;
    let config = args.inference.config();
    let mut records = Vec::new();
    for series in &series_set {
        match fit_trend(series, config.extra_variance(series.provenance)) {
            Ok(fit) => {
                let class = classify(&fit, config.alpha, args.inference.use_adjusted());
                records.push(TrendRecord::from_fit(
                    series.station_id.clone(),
                    series.provenance,
                    &fit,
                    class,
                ));
            }
            Err(TrendError::InsufficientData { needed, got }) => eprintln!(
                "warning: station {}: trend skipped, {got} of {needed} needed months",
                series.station_id
            ),
            Err(e) => return Err(e.into()),
        }
    }
    write_trend_records_csv(&args.out, &records)?;
    eprintln!(
        "fitted {} of {} stations into {}",
        records.len(),
        series_set.len(),
        args.out.display()
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), DataError> {
    let series_set = read_series_csv(&args.input)?;
    let series = series_set
        .iter()
        .find(|s| s.station_id == args.station)
        .ok_or_else(|| DataError::UnknownStation(args.station.clone()))?;
    let config = args.inference.config();
    let entries = start_date_sweep(
        series,
        config.extra_variance(series.provenance),
        config.alpha,
        args.inference.use_adjusted(),
    )?;
    write_sweep_csv(&args.out, &series.station_id, &entries)?;
    eprintln!(
        "swept {} start months of station {} into {}",
        entries.len(),
        series.station_id,
        args.out.display()
    );
    Ok(())
}

fn census(args: CensusArgs) -> Result<(), DataError> {
    let records = read_trend_records_csv(&args.trends)?;
    let grouped = group_trend_records(&records);
    let mut censuses = Vec::new();
    for labeled in grouped.values() {
        let mut census = trend_census(labeled, args.inference.alpha, args.inference.use_adjusted())?;
        census.alpha = crate::report::round_sig(census.alpha, 6);
        censuses.push(census);
    }
    if censuses.is_empty() {
        return Err(DataError::NoInput);
    }
    let rendered = match args.format.as_str() {
        "csv" => render_census_csv(&censuses),
        _ => render_censuses_text(&censuses),
    };
    match &args.out {
        Some(path) => std::fs::write(path, rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn single_group(path: &std::path::Path) -> Result<LabeledTrends<f64>, DataError> {
    let records = read_trend_records_csv(path)?;
    let grouped = group_trend_records(&records);
    match grouped.len() {
        0 => Err(DataError::NoInput),
        1 => Ok(grouped.into_values().next().expect("one group")),
        _ => Err(DataError::InvalidConfig(
            "trend file mixes provenances; split it before comparing",
        )),
    }
}

fn compare(args: CompareArgs) -> Result<(), DataError> {
    let la = single_group(&args.a)?;
    let lb = single_group(&args.b)?;
    let pair = compare_pair(&la, &lb, args.alpha)?
        .ok_or(DataError::Compare(crate::compare::CompareError::NoCommonStations))?;
    std::fs::create_dir_all(&args.out)?;
    write_json_pretty(args.out.join("comparison.json"), &ComparisonDoc::from(&pair))?;
    write_deltas_csv(
        args.out.join("deltas.csv"),
        &[(la.label, lb.label, pair.deltas.clone())],
    )?;
    print!("{}", render_agreement_text(&pair.agreement));
    print!("{}", render_breakdown_text(&pair.breakdown));
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), DataError> {
    let bundle = load_dataset(&DatasetPaths {
        reference: args.reference,
        triplets: args.triplets,
        man_raw: args.raw,
        calibrated: args.calibrated,
        calibrated_imputed: args.imputed,
    })?;
    let config = RunConfig {
        level: args.level,
        min_stations: args.min_stations,
        min_months_yearly: args.min_months_yearly,
        seed: args.seed,
        ..args.inference.config()
    };
    let art = run_pipeline(&bundle, &config)?;
    for w in &art.warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(&args.out)?;
    let formats: &[(ReportFormat, &str)] = match args.format.as_deref() {
        Some("json") => &[(ReportFormat::Json, "report.json")],
        Some("text") => &[(ReportFormat::Text, "report.txt")],
        Some("csv") => &[(ReportFormat::Csv, "census.csv")],
        _ => &[
            (ReportFormat::Json, "report.json"),
            (ReportFormat::Text, "report.txt"),
            (ReportFormat::Csv, "census.csv"),
        ],
    };
    for (format, name) in formats {
        write_report(&art.report, *format, args.out.join(name))?;
    }
    write_deltas_csv(args.out.join("deltas.csv"), &art.deltas)?;
    eprintln!("report written to {}", args.out.display());
    Ok(())
}
