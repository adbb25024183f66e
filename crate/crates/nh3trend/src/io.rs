//! File formats, run configuration, and dataset assembly.
//!
//! Everything on disk is UTF-8 CSV with a mandatory header row and decimal
//! points (units are µg/m³ throughout), plus JSON sidecars for structured
//! artifacts. Column contracts:
//!
//! * reference series — `station_id,year,month,value`
//! * sampler triplets — `station_id,year,month,s1,s2,s3`
//! * station series — `station_id,year,month,value,provenance`
//! * trend records — `station_id,provenance,n_used,theta0,theta1,se_naive,se_adjusted,p_naive,p_adjusted,class`
//!
//! Empty numeric cells mean *missing*, never zero. Writers emit every slot
//! of every series (gaps as empty cells), stations sorted by id, months
//! ascending, values in shortest round-trip decimal form — so a write/read
//! cycle is lossless for values, gaps, and provenance, and byte output is a
//! pure function of the data. This module is `f64`-only: file payloads are
//! part of its contract.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{
    CalibrationError, CalibrationFit, MonthObservations, StationMonthObs,
    DEFAULT_SIGMA_NU_SQUARED,
};
use crate::compare::{LabeledTrends, StationTrend};
use crate::series::{Granularity, Provenance, SeriesError, StationSeries, YearMonth};
use crate::synth::SynthNetwork;
use crate::trend::{SweepEntry, SweepOutcome, TrendClass, TrendFit};

/// Errors raised while reading, validating, or writing data files.
#[derive(Debug, Error)]
pub enum DataError {
    /// Underlying I/O failure.
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    /// A cell or row could not be parsed; line 1 is the header, 0 means
    /// the problem concerns the whole file.
    #[error("{path}:{line}: column '{column}': {message}")]
    ParseError {
        /// Offending file.
        path: String,
        /// 1-based line number.
        line: u64,
        /// Column name (or `-` when structural).
        column: String,
        /// What went wrong.
        message: String,
    },
    /// Two rows claim the same key.
    #[error("{path}: duplicate row for station {station_id} ({key})")]
    DuplicateKey {
        /// Offending file.
        path: String,
        /// Station whose key repeats.
        station_id: String,
        /// Human-readable key (e.g. the period).
        key: String,
    },
    /// Series files that must describe the same network cover different
    /// month ranges.
    #[error("time axis mismatch: {left} covers {left_axis} but {right} covers {right_axis}")]
    AxisMismatch {
        /// First file (slot name).
        left: String,
        /// Its month range.
        left_axis: String,
        /// Second file (slot name).
        right: String,
        /// Its month range.
        right_axis: String,
    },
    /// No input file contained any data.
    #[error("no input data")]
    NoInput,
    /// A requested station id is absent from the input.
    #[error("station {0} not found in input")]
    UnknownStation(String),
    /// A run-configuration invariant is violated.
    #[error("invalid run configuration: {0}")]
    InvalidConfig(&'static str),
    /// JSON (de)serialization failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    /// Loaded observations violate a domain invariant.
    #[error(transparent)]
    Observations(#[from] CalibrationError),
    /// Loaded series violate a structural invariant.
    #[error(transparent)]
    Series(#[from] SeriesError),
    /// Trend estimation failed while assembling results.
    #[error(transparent)]
    Trend(#[from] crate::trend::TrendError),
    /// Cross-dataset comparison failed while assembling results.
    #[error(transparent)]
    Compare(#[from] crate::compare::CompareError),
}

/// Analysis-wide knobs with their standard defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Significance threshold for trend classification.
    pub alpha: f64,
    /// Probability level for calibration predictive intervals.
    pub level: f64,
    /// Measurement-error variance σ²_ν added when analyzing calibrated
    /// values (the pooled default is documented at
    /// [`DEFAULT_SIGMA_NU_SQUARED`]).
    pub sigma_nu_squared: f64,
    /// Imputation variance σ²_τ added on top of σ²_ν for gap-filled values.
    pub sigma_tau_squared: f64,
    /// Minimum usable co-located stations per calibration month.
    pub min_stations: usize,
    /// Minimum observed months for a yearly aggregate to count.
    pub min_months_yearly: usize,
    /// Seed for everything pseudo-random.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 0.05,
            level: 0.90,
            sigma_nu_squared: DEFAULT_SIGMA_NU_SQUARED,
            sigma_tau_squared: 0.0,
            min_stations: 3,
            min_months_yearly: 6,
            seed: 42,
        }
    }
}

impl RunConfig {
    /// Check the numeric invariants.
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DataError::InvalidConfig("alpha must lie in (0, 1)"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(DataError::InvalidConfig("level must lie in (0, 1)"));
        }
        if !(self.sigma_nu_squared >= 0.0) || !self.sigma_nu_squared.is_finite() {
            return Err(DataError::InvalidConfig("sigma_nu_squared must be ≥ 0"));
        }
        if !(self.sigma_tau_squared >= 0.0) || !self.sigma_tau_squared.is_finite() {
            return Err(DataError::InvalidConfig("sigma_tau_squared must be ≥ 0"));
        }
        Ok(())
    }

    /// Extra response variance a dataset of the given provenance carries
    /// into trend inference: raw values none, calibrated values σ²_ν,
    /// gap-filled values σ²_ν + σ²_τ.
    pub fn extra_variance(&self, provenance: Provenance) -> f64 {
        match provenance {
            Provenance::Raw => 0.0,
            Provenance::Calibrated => self.sigma_nu_squared,
            Provenance::CalibratedImputed => self.sigma_nu_squared + self.sigma_tau_squared,
        }
    }
}

/// Where the input files of one dataset live. Any subset may be present;
/// at least one file must contain data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetPaths {
    /// Reference analyzer series (`station_id,year,month,value`).
    pub reference: Option<PathBuf>,
    /// Co-located sampler triplets (`station_id,year,month,s1,s2,s3`).
    pub triplets: Option<PathBuf>,
    /// Raw area-network series file.
    pub man_raw: Option<PathBuf>,
    /// Calibrated area-network series file.
    pub calibrated: Option<PathBuf>,
    /// Gap-filled calibrated series file.
    pub calibrated_imputed: Option<PathBuf>,
}

/// Provenance-of-load bookkeeping for a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    /// Slot name → source path.
    pub source_paths: BTreeMap<String, String>,
    /// Slot name → data rows read.
    pub row_counts: BTreeMap<String, usize>,
    /// First month of the common axis.
    pub period_start: YearMonth,
    /// Last month of the common axis.
    pub period_end: YearMonth,
}

/// One dataset, normalized onto a single monthly axis.
///
/// Every series in every slot spans `period_start..=period_end`; months a
/// file did not mention are explicit gaps. The raw, calibrated, and
/// gap-filled slots must come from files covering identical month ranges
/// (they describe the same network), while reference/triplet files may
/// extend the axis freely.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    /// Reference analyzer series (empty if no file given).
    pub reference: Vec<StationSeries<f64>>,
    /// Raw area-network series (empty if no file given).
    pub man_raw: Vec<StationSeries<f64>>,
    /// Calibrated series, when supplied.
    pub calibrated: Option<Vec<StationSeries<f64>>>,
    /// Gap-filled calibrated series, when supplied.
    pub calibrated_imputed: Option<Vec<StationSeries<f64>>>,
    /// Monthly co-located observations (reference joined onto triplets).
    pub observations: Vec<MonthObservations<f64>>,
    /// Load bookkeeping.
    pub metadata: BundleMetadata,
}

impl DatasetBundle {
    /// Assemble a bundle directly from a generated network, as if its
    /// files had been written and reloaded (no disk involved).
    pub fn from_network(net: &SynthNetwork) -> Self {
        let (start, len) = match net.reference.first().or_else(|| net.raw_area.first()) {
            Some(s) => (s.start, s.len()),
            None => (YearMonth::new(2005, 1), 1),
        };
        let mut row_counts = BTreeMap::new();
        row_counts.insert(
            "reference".to_string(),
            net.reference.iter().map(|s| s.len()).sum(),
        );
        row_counts.insert(
            "triplets".to_string(),
            net.observations.iter().map(|m| m.stations.len()).sum(),
        );
        row_counts.insert(
            "man_raw".to_string(),
            net.raw_area.iter().map(|s| s.len()).sum(),
        );
        DatasetBundle {
            reference: net.reference.clone(),
            man_raw: net.raw_area.clone(),
            calibrated: None,
            calibrated_imputed: None,
            observations: net.observations.clone(),
            metadata: BundleMetadata {
                source_paths: BTreeMap::new(),
                row_counts,
                period_start: start,
                period_end: start.offset(len as i64 - 1),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// CSV plumbing
// ---------------------------------------------------------------------------

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn csv_error(path: &Path, err: csv::Error) -> DataError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => DataError::Io(e),
        other => DataError::ParseError {
            path: path_str(path),
            line,
            column: "-".to_string(),
            message: format!("{other:?}"),
        },
    }
}

fn cell_error(path: &Path, line: u64, column: &str, message: impl Into<String>) -> DataError {
    DataError::ParseError {
        path: path_str(path),
        line,
        column: column.to_string(),
        message: message.into(),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>, DataError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn column_indexes<const N: usize>(
    path: &Path,
    rdr: &mut csv::Reader<File>,
    names: [&'static str; N],
) -> Result<[usize; N], DataError> {
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut out = [0usize; N];
    for (slot, name) in out.iter_mut().zip(names) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| cell_error(path, 1, name, "required column missing from header"))?;
    }
    Ok(out)
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn get_field<'r>(
    path: &Path,
    rec: &'r csv::StringRecord,
    line: u64,
    idx: usize,
    column: &str,
) -> Result<&'r str, DataError> {
    rec.get(idx)
        .ok_or_else(|| cell_error(path, line, column, "field missing from row"))
}

fn parse_cell<T: std::str::FromStr>(
    path: &Path,
    line: u64,
    column: &str,
    text: &str,
) -> Result<T, DataError>
where
    T::Err: std::fmt::Display,
{
    text.parse::<T>()
        .map_err(|e| cell_error(path, line, column, format!("cannot parse '{text}': {e}")))
}

fn parse_month_cells(
    path: &Path,
    line: u64,
    year_text: &str,
    month_text: &str,
) -> Result<YearMonth, DataError> {
    let year: i32 = parse_cell(path, line, "year", year_text)?;
    let month: u8 = parse_cell(path, line, "month", month_text)?;
    if !(1..=12).contains(&month) {
        return Err(cell_error(
            path,
            line,
            "month",
            format!("month {month} outside 1..=12"),
        ));
    }
    Ok(YearMonth::new(year, month))
}

fn parse_value(
    path: &Path,
    line: u64,
    column: &str,
    text: &str,
) -> Result<Option<f64>, DataError> {
    if text.is_empty() {
        return Ok(None);
    }
    let v: f64 = parse_cell(path, line, column, text)?;
    if !v.is_finite() {
        return Err(cell_error(path, line, column, "value must be finite"));
    }
    Ok(Some(v))
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

type MonthMap = BTreeMap<YearMonth, Option<f64>>;

fn axis_label(axis: Option<(YearMonth, YearMonth)>) -> String {
    match axis {
        Some((lo, hi)) => format!("{lo}..{hi}"),
        None => "(empty)".to_string(),
    }
}

fn widen(axis: &mut Option<(YearMonth, YearMonth)>, ym: YearMonth) {
    *axis = Some(match *axis {
        None => (ym, ym),
        Some((lo, hi)) => (lo.min(ym), hi.max(ym)),
    });
}

struct ReferenceFile {
    stations: BTreeMap<String, MonthMap>,
    rows: usize,
    axis: Option<(YearMonth, YearMonth)>,
}

fn parse_reference_file(path: &Path) -> Result<ReferenceFile, DataError> {
    let mut rdr = open_reader(path)?;
    let [c_id, c_year, c_month, c_value] =
        column_indexes(path, &mut rdr, ["station_id", "year", "month", "value"])?;
    let mut out = ReferenceFile {
        stations: BTreeMap::new(),
        rows: 0,
        axis: None,
    };
    for result in rdr.records() {
        let rec = result.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let id = get_field(path, &rec, line, c_id, "station_id")?.to_string();
        if id.is_empty() {
            return Err(cell_error(path, line, "station_id", "must be non-empty"));
        }
        let ym = parse_month_cells(
            path,
            line,
            get_field(path, &rec, line, c_year, "year")?,
            get_field(path, &rec, line, c_month, "month")?,
        )?;
        let value = parse_value(path, line, "value", get_field(path, &rec, line, c_value, "value")?)?;
        if out
            .stations
            .entry(id.clone())
            .or_default()
            .insert(ym, value)
            .is_some()
        {
            return Err(DataError::DuplicateKey {
                path: path_str(path),
                station_id: id,
                key: ym.to_string(),
            });
        }
        widen(&mut out.axis, ym);
        out.rows += 1;
    }
    Ok(out)
}

struct SeriesFile {
    stations: BTreeMap<String, (Provenance, MonthMap)>,
    rows: usize,
    axis: Option<(YearMonth, YearMonth)>,
}

fn parse_series_file(path: &Path) -> Result<SeriesFile, DataError> {
    let mut rdr = open_reader(path)?;
    let [c_id, c_year, c_month, c_value, c_prov] = column_indexes(
        path,
        &mut rdr,
        ["station_id", "year", "month", "value", "provenance"],
    )?;
    let mut out = SeriesFile {
        stations: BTreeMap::new(),
        rows: 0,
        axis: None,
    };
    for result in rdr.records() {
        let rec = result.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let id = get_field(path, &rec, line, c_id, "station_id")?.to_string();
        if id.is_empty() {
            return Err(cell_error(path, line, "station_id", "must be non-empty"));
        }
        let ym = parse_month_cells(
            path,
            line,
            get_field(path, &rec, line, c_year, "year")?,
            get_field(path, &rec, line, c_month, "month")?,
        )?;
        let value = parse_value(path, line, "value", get_field(path, &rec, line, c_value, "value")?)?;
        let prov_text = get_field(path, &rec, line, c_prov, "provenance")?;
        let prov: Provenance = prov_text
            .parse()
            .map_err(|_| cell_error(path, line, "provenance", format!("unknown label '{prov_text}'")))?;
        let entry = out.stations.entry(id.clone()).or_insert((prov, MonthMap::new()));
        if entry.0 != prov {
            return Err(cell_error(
                path,
                line,
                "provenance",
                format!("station {id} mixes '{}' and '{prov}'", entry.0),
            ));
        }
        if entry.1.insert(ym, value).is_some() {
            return Err(DataError::DuplicateKey {
                path: path_str(path),
                station_id: id,
                key: ym.to_string(),
            });
        }
        widen(&mut out.axis, ym);
        out.rows += 1;
    }
    Ok(out)
}

struct TripletsFile {
    months: BTreeMap<YearMonth, BTreeMap<String, [Option<f64>; 3]>>,
    rows: usize,
    axis: Option<(YearMonth, YearMonth)>,
}

fn parse_triplets_file(path: &Path) -> Result<TripletsFile, DataError> {
    let mut rdr = open_reader(path)?;
    let [c_id, c_year, c_month, c_s1, c_s2, c_s3] = column_indexes(
        path,
        &mut rdr,
        ["station_id", "year", "month", "s1", "s2", "s3"],
    )?;
    let mut out = TripletsFile {
        months: BTreeMap::new(),
        rows: 0,
        axis: None,
    };
    for result in rdr.records() {
        let rec = result.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let id = get_field(path, &rec, line, c_id, "station_id")?.to_string();
        if id.is_empty() {
            return Err(cell_error(path, line, "station_id", "must be non-empty"));
        }
        let ym = parse_month_cells(
            path,
            line,
            get_field(path, &rec, line, c_year, "year")?,
            get_field(path, &rec, line, c_month, "month")?,
        )?;
        let samplers = [
            parse_value(path, line, "s1", get_field(path, &rec, line, c_s1, "s1")?)?,
            parse_value(path, line, "s2", get_field(path, &rec, line, c_s2, "s2")?)?,
            parse_value(path, line, "s3", get_field(path, &rec, line, c_s3, "s3")?)?,
        ];
        if out
            .months
            .entry(ym)
            .or_default()
            .insert(id.clone(), samplers)
            .is_some()
        {
            return Err(DataError::DuplicateKey {
                path: path_str(path),
                station_id: id,
                key: ym.to_string(),
            });
        }
        widen(&mut out.axis, ym);
        out.rows += 1;
    }
    Ok(out)
}

fn expect_slot_provenance(
    path: &Path,
    file: &SeriesFile,
    expected: Provenance,
) -> Result<(), DataError> {
    for (id, (prov, _)) in &file.stations {
        if *prov != expected {
            return Err(cell_error(
                path,
                0,
                "provenance",
                format!("station {id} labeled '{prov}' in a slot requiring '{expected}'"),
            ));
        }
    }
    Ok(())
}

fn pad_to_axis(
    id: &str,
    provenance: Provenance,
    months: &MonthMap,
    start: YearMonth,
    len: usize,
) -> Result<StationSeries<f64>, SeriesError> {
    let values = (0..len)
        .map(|k| months.get(&start.offset(k as i64)).copied().flatten())
        .collect();
    StationSeries::new(id, Granularity::Monthly, start, values, provenance)
}

/// Read one station-series file on its own axis (each series padded to the
/// file's full month range), with no slot-provenance requirement.
pub fn read_series_csv(path: impl AsRef<Path>) -> Result<Vec<StationSeries<f64>>, DataError> {
    let path = path.as_ref();
    let file = parse_series_file(path)?;
    let (start, end) = file.axis.ok_or(DataError::NoInput)?;
    let len = (end.months_since(start) + 1) as usize;
    Ok(file
        .stations
        .iter()
        .map(|(id, (prov, months))| pad_to_axis(id, *prov, months, start, len))
        .collect::<Result<_, _>>()?)
}

/// Load and cross-validate one dataset from its CSV files.
///
/// Months are normalized to the common axis spanning everything any file
/// mentions; values absent from a file become explicit gaps. Reference
/// values are joined onto triplet rows by (station, month) to form the
/// monthly calibration observations.
pub fn load_dataset(paths: &DatasetPaths) -> Result<DatasetBundle, DataError> {
    let reference_file = paths
        .reference
        .as_deref()
        .map(parse_reference_file)
        .transpose()?;
    let triplets_file = paths
        .triplets
        .as_deref()
        .map(parse_triplets_file)
        .transpose()?;
    let man_raw_file = paths.man_raw.as_deref().map(parse_series_file).transpose()?;
    let calibrated_file = paths
        .calibrated
        .as_deref()
        .map(parse_series_file)
        .transpose()?;
    let imputed_file = paths
        .calibrated_imputed
        .as_deref()
        .map(parse_series_file)
        .transpose()?;

    if let (Some(p), Some(f)) = (&paths.man_raw, &man_raw_file) {
        expect_slot_provenance(p, f, Provenance::Raw)?;
    }
    if let (Some(p), Some(f)) = (&paths.calibrated, &calibrated_file) {
        expect_slot_provenance(p, f, Provenance::Calibrated)?;
    }
    if let (Some(p), Some(f)) = (&paths.calibrated_imputed, &imputed_file) {
        expect_slot_provenance(p, f, Provenance::CalibratedImputed)?;
    }

    // The raw/calibrated/gap-filled slots describe the same network and
    // must agree on the month range before any padding can hide gaps.
    let network_axes = [
        ("raw series", man_raw_file.as_ref().map(|f| f.axis)),
        ("calibrated series", calibrated_file.as_ref().map(|f| f.axis)),
        ("gap-filled series", imputed_file.as_ref().map(|f| f.axis)),
    ];
    let mut first: Option<(&str, Option<(YearMonth, YearMonth)>)> = None;
    for (name, axis) in network_axes.into_iter().flat_map(|(n, a)| a.map(|a| (n, a))) {
        match first {
            None => first = Some((name, axis)),
            Some((first_name, first_axis)) if first_axis != axis => {
                return Err(DataError::AxisMismatch {
                    left: first_name.to_string(),
                    left_axis: axis_label(first_axis),
                    right: name.to_string(),
                    right_axis: axis_label(axis),
                });
            }
            Some(_) => {}
        }
    }

    let mut axis: Option<(YearMonth, YearMonth)> = None;
    for file_axis in [
        reference_file.as_ref().and_then(|f| f.axis),
        triplets_file.as_ref().and_then(|f| f.axis),
        man_raw_file.as_ref().and_then(|f| f.axis),
        calibrated_file.as_ref().and_then(|f| f.axis),
        imputed_file.as_ref().and_then(|f| f.axis),
    ]
    .into_iter()
    .flatten()
    {
        widen(&mut axis, file_axis.0);
        widen(&mut axis, file_axis.1);
    }
    let (start, end) = axis.ok_or(DataError::NoInput)?;
    let len = (end.months_since(start) + 1) as usize;

    let pad_set = |file: &SeriesFile| -> Result<Vec<StationSeries<f64>>, SeriesError> {
        file.stations
            .iter()
            .map(|(id, (prov, months))| pad_to_axis(id, *prov, months, start, len))
            .collect()
    };

    let reference = match &reference_file {
        Some(f) => f
            .stations
            .iter()
            .map(|(id, months)| pad_to_axis(id, Provenance::Raw, months, start, len))
            .collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    let man_raw = match &man_raw_file {
        Some(f) => pad_set(f)?,
        None => Vec::new(),
    };
    let calibrated = calibrated_file.as_ref().map(&pad_set).transpose()?;
    let calibrated_imputed = imputed_file.as_ref().map(&pad_set).transpose()?;

    let observations = match &triplets_file {
        Some(f) => f
            .months
            .iter()
            .map(|(&month, stations)| {
                let entries = stations
                    .iter()
                    .map(|(id, samplers)| StationMonthObs {
                        station_id: id.clone(),
                        samplers: *samplers,
                        reference: reference_file
                            .as_ref()
                            .and_then(|rf| rf.stations.get(id))
                            .and_then(|months| months.get(&month))
                            .copied()
                            .flatten(),
                    })
                    .collect();
                MonthObservations::new(month, entries)
            })
            .collect::<Result<_, _>>()?,
        None => Vec::new(),
    };

    let mut source_paths = BTreeMap::new();
    let mut row_counts = BTreeMap::new();
    let mut note = |slot: &str, path: &Option<PathBuf>, rows: Option<usize>| {
        if let (Some(p), Some(r)) = (path, rows) {
            source_paths.insert(slot.to_string(), path_str(p));
            row_counts.insert(slot.to_string(), r);
        }
    };
    note("reference", &paths.reference, reference_file.as_ref().map(|f| f.rows));
    note("triplets", &paths.triplets, triplets_file.as_ref().map(|f| f.rows));
    note("man_raw", &paths.man_raw, man_raw_file.as_ref().map(|f| f.rows));
    note("calibrated", &paths.calibrated, calibrated_file.as_ref().map(|f| f.rows));
    note(
        "calibrated_imputed",
        &paths.calibrated_imputed,
        imputed_file.as_ref().map(|f| f.rows),
    );

    Ok(DatasetBundle {
        reference,
        man_raw,
        calibrated,
        calibrated_imputed,
        observations,
        metadata: BundleMetadata {
            source_paths,
            row_counts,
            period_start: start,
            period_end: end,
        },
    })
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

fn open_writer(path: &Path) -> Result<csv::Writer<File>, DataError> {
    csv::WriterBuilder::new()
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn sorted_by_id<T>(items: &[T], id: impl Fn(&T) -> &str) -> Vec<&T> {
    let mut refs: Vec<&T> = items.iter().collect();
    refs.sort_by(|a, b| id(a).cmp(id(b)));
    refs
}

/// Write reference analyzer series (`station_id,year,month,value`).
pub fn write_reference_csv(
    path: impl AsRef<Path>,
    series: &[StationSeries<f64>],
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut wtr = open_writer(path)?;
    wtr.write_record(["station_id", "year", "month", "value"])
        .map_err(|e| csv_error(path, e))?;
    for s in sorted_by_id(series, |s| &s.station_id) {
        for (k, v) in s.values.iter().enumerate() {
            let ym = s.period_at(k);
            wtr.write_record([
                s.station_id.as_str(),
                &ym.year().to_string(),
                &ym.month().to_string(),
                &fmt_value(*v),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Write station series with provenance
/// (`station_id,year,month,value,provenance`).
pub fn write_series_csv(
    path: impl AsRef<Path>,
    series: &[StationSeries<f64>],
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut wtr = open_writer(path)?;
    wtr.write_record(["station_id", "year", "month", "value", "provenance"])
        .map_err(|e| csv_error(path, e))?;
    for s in sorted_by_id(series, |s| &s.station_id) {
        for (k, v) in s.values.iter().enumerate() {
            let ym = s.period_at(k);
            wtr.write_record([
                s.station_id.as_str(),
                &ym.year().to_string(),
                &ym.month().to_string(),
                &fmt_value(*v),
                s.provenance.as_str(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Write co-located sampler triplets (`station_id,year,month,s1,s2,s3`).
/// Reference values live in the reference series file, joined back on load.
pub fn write_triplets_csv(
    path: impl AsRef<Path>,
    observations: &[MonthObservations<f64>],
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut wtr = open_writer(path)?;
    wtr.write_record(["station_id", "year", "month", "s1", "s2", "s3"])
        .map_err(|e| csv_error(path, e))?;
    let mut months: Vec<&MonthObservations<f64>> = observations.iter().collect();
    months.sort_by_key(|m| m.month);
    for m in months {
        for st in sorted_by_id(&m.stations, |s| &s.station_id) {
            wtr.write_record([
                st.station_id.as_str(),
                &m.month.year().to_string(),
                &m.month.month().to_string(),
                &fmt_value(st.samplers[0]),
                &fmt_value(st.samplers[1]),
                &fmt_value(st.samplers[2]),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Write per-month calibration coefficients
/// (`year,month,a_hat,b_hat,n_stations,residual_variance`).
pub fn write_calibration_fits_csv(
    path: impl AsRef<Path>,
    fits: &BTreeMap<YearMonth, CalibrationFit<f64>>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut wtr = open_writer(path)?;
    wtr.write_record([
        "year",
        "month",
        "a_hat",
        "b_hat",
        "n_stations",
        "residual_variance",
    ])
    .map_err(|e| csv_error(path, e))?;
    for (ym, fit) in fits {
        wtr.write_record([
            ym.year().to_string(),
            ym.month().to_string(),
            fit.a_hat.to_string(),
            fit.b_hat.to_string(),
            fit.n_stations.to_string(),
            fit.ols.residual_variance.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    wtr.flush()?;
    Ok(())
}

/// One row of a per-station trend file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRecord {
    /// Station the fit belongs to.
    pub station_id: String,
    /// Which dataset the series came from.
    pub provenance: Provenance,
    /// Months used in the fit.
    pub n_used: usize,
    /// Intercept θ₀.
    pub theta0: f64,
    /// Slope θ₁ (µg/m³ per month).
    pub theta1: f64,
    /// Naive slope standard error.
    pub se_naive: f64,
    /// Error-inflated slope standard error.
    pub se_adjusted: f64,
    /// Naive two-sided p-value.
    pub p_naive: f64,
    /// Error-inflated two-sided p-value.
    pub p_adjusted: f64,
    /// Sign/significance classification.
    pub class: TrendClass,
}

impl TrendRecord {
    /// Flatten a fit into a file row.
    pub fn from_fit(
        station_id: impl Into<String>,
        provenance: Provenance,
        fit: &TrendFit<f64>,
        class: TrendClass,
    ) -> Self {
        TrendRecord {
            station_id: station_id.into(),
            provenance,
            n_used: fit.n_used,
            theta0: fit.theta0,
            theta1: fit.theta1,
            se_naive: fit.se_naive,
            se_adjusted: fit.se_adjusted,
            p_naive: fit.p_naive,
            p_adjusted: fit.p_adjusted,
            class,
        }
    }
}

/// Write per-station trend records, sorted by (station, provenance).
pub fn write_trend_records_csv(
    path: impl AsRef<Path>,
    records: &[TrendRecord],
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut sorted: Vec<&TrendRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.station_id, a.provenance.as_str()).cmp(&(&b.station_id, b.provenance.as_str()))
    });
    let mut wtr = open_writer(path)?;
    for rec in sorted {
        wtr.serialize(rec).map_err(|e| csv_error(path, e))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read a per-station trend file; duplicate (station, provenance) rows are
/// rejected.
pub fn read_trend_records_csv(path: impl AsRef<Path>) -> Result<Vec<TrendRecord>, DataError> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for result in rdr.deserialize::<TrendRecord>() {
        let rec = result.map_err(|e| csv_error(path, e))?;
        if !seen.insert((rec.station_id.clone(), rec.provenance)) {
            return Err(DataError::DuplicateKey {
                path: path_str(path),
                station_id: rec.station_id,
                key: format!("provenance {}", rec.provenance),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Group trend rows by provenance into comparison-ready containers.
pub fn group_trend_records(records: &[TrendRecord]) -> BTreeMap<Provenance, LabeledTrends<f64>> {
    let mut out: BTreeMap<Provenance, LabeledTrends<f64>> = BTreeMap::new();
    for rec in records {
        out.entry(rec.provenance)
            .or_insert_with(|| LabeledTrends::new(rec.provenance))
            .trends
            .insert(
                rec.station_id.clone(),
                StationTrend {
                    theta1: rec.theta1,
                    p_naive: rec.p_naive,
                    p_adjusted: rec.p_adjusted,
                },
            );
    }
    out
}

/// Write a start-date sweep
/// (`station_id,start_index,start_year,start_month,n_used,theta1,p_naive,p_adjusted,class`);
/// under-filled suffixes keep their rows with empty numeric cells and class
/// `insufficient_data`.
pub fn write_sweep_csv(
    path: impl AsRef<Path>,
    station_id: &str,
    entries: &[SweepEntry<f64>],
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut wtr = open_writer(path)?;
    wtr.write_record([
        "station_id",
        "start_index",
        "start_year",
        "start_month",
        "n_used",
        "theta1",
        "p_naive",
        "p_adjusted",
        "class",
    ])
    .map_err(|e| csv_error(path, e))?;
    for entry in entries {
        let (n_used, theta1, p_naive, p_adjusted, class) = match &entry.outcome {
            SweepOutcome::Fitted { fit, class } => (
                fit.n_used.to_string(),
                fit.theta1.to_string(),
                fit.p_naive.to_string(),
                fit.p_adjusted.to_string(),
                class.as_str().to_string(),
            ),
            SweepOutcome::InsufficientData { n_present } => (
                n_present.to_string(),
                String::new(),
                String::new(),
                String::new(),
                "insufficient_data".to_string(),
            ),
        };
        wtr.write_record([
            station_id.to_string(),
            entry.start_index.to_string(),
            entry.start_period.year().to_string(),
            entry.start_period.month().to_string(),
            n_used,
            theta1,
            p_naive,
            p_adjusted,
            class,
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Serialize any artifact as pretty-printed JSON with a trailing newline.
pub fn write_json_pretty<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), DataError> {
    let mut file = File::create(path.as_ref())?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Read a JSON artifact back.
pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, DataError> {
    let file = File::open(path.as_ref())?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
