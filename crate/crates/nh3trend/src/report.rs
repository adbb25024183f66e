//! Analysis assembly and report emission.
//!
//! [`run_pipeline`] drives one dataset through the full analysis —
//! monthly calibration, correction, gap filling, per-station trend fits on
//! every processing stage, censuses, significance-drop accounting, and the
//! cross-stage comparison tables — and returns both the machine artifacts
//! (fits, series, trend rows, deltas) and an [`AnalysisReport`].
//!
//! Reports are the *presentation* plane: every float in them is rounded to
//! 6 significant digits (data files keep full precision), key order is
//! fixed, and no clock or environment leaks in, so a report is a pure,
//! byte-stable function of its inputs in all three formats.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_dataset, fit_error_model, fit_month, CalibrationError, CalibrationFit,
    CalibrationWarning, ErrorModel, ErrorPair, MonthObservations,
};
use crate::compare::{
    conditional_breakdown, pairwise_agreement, significance_drop_report, trend_census,
    trend_delta, AgreementTable, CompareError, ConditionalBreakdown, LabeledTrends,
    SignificanceDrop, TrendCensus, TrendDelta,
};
use crate::io::{write_json_pretty, BundleMetadata, DataError, DatasetBundle, RunConfig, TrendRecord};
use crate::series::{Provenance, StationSeries, YearMonth};
use crate::synth::impute_gaps_stub;
use crate::trend::{classify, fit_trend, TrendError, TrendFit};

/// Round to `digits` significant digits (reports use 6).
///
/// Zero and non-finite values pass through unchanged; the result is the
/// nearest representable `f64` to the rounded decimal.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(digits - 1 - magnitude);
    (x * factor).round() / factor
}

fn r6(x: f64) -> f64 {
    round_sig(x, 6)
}

fn fmt6(x: f64) -> String {
    r6(x).to_string()
}

/// Condensed view of the monthly calibration stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    /// Months with a usable fit.
    pub months_fitted: usize,
    /// Months skipped for too few usable stations.
    pub months_skipped: Vec<YearMonth>,
    /// Mean fitted intercept â across months.
    pub mean_a_hat: f64,
    /// Mean fitted slope b̂ across months.
    pub mean_b_hat: f64,
    /// Mean usable stations per fitted month.
    pub mean_n_stations: f64,
}

/// Order statistics of one pair's per-station slope differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    /// The compared stages (a, b); deltas are b − a.
    pub labels: (Provenance, Provenance),
    /// Stations compared.
    pub n: usize,
    /// Smallest difference.
    pub min: f64,
    /// Median difference.
    pub median: f64,
    /// Mean difference.
    pub mean: f64,
    /// Largest difference.
    pub max: f64,
}

/// Which stations each comparison actually covered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCoverage {
    /// The compared stages (a, b).
    pub labels: (Provenance, Provenance),
    /// Non-degenerate stations present in both.
    pub n_common: usize,
    /// Common stations excluded for a zero slope in either fit.
    pub degenerate_excluded: usize,
    /// Stations fitted only in the first dataset.
    pub only_in_a: Vec<String>,
    /// Stations fitted only in the second dataset.
    pub only_in_b: Vec<String>,
}

/// The full analysis in presentation form (floats at 6 significant digits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    /// Knobs the analysis ran with.
    pub config: RunConfig,
    /// Where the data came from and what it covered.
    pub metadata: BundleMetadata,
    /// Calibration stage summary, when observations were available.
    pub calibration: Option<CalibrationSummary>,
    /// Pooled error model, when enough calibrated pairs existed.
    pub error_model: Option<ErrorModel<f64>>,
    /// Sign/significance censuses: naive p for every stage, plus the
    /// adjusted-p census for stages carrying extra variance.
    pub censuses: Vec<TrendCensus<f64>>,
    /// Naive → adjusted significance loss per stage with extra variance.
    pub significance_drops: Vec<SignificanceDrop<f64>>,
    /// Pairwise sign/significance agreement tables.
    pub agreements: Vec<AgreementTable<f64>>,
    /// Agreement broken down by joint significance.
    pub breakdowns: Vec<ConditionalBreakdown<f64>>,
    /// Slope-difference order statistics per pair.
    pub delta_summaries: Vec<DeltaSummary>,
    /// Station coverage bookkeeping per pair.
    pub reconciliation: Vec<PairCoverage>,
}

/// Everything [`run_pipeline`] produces.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineArtifacts {
    /// The presentation-plane report.
    pub report: AnalysisReport,
    /// Per-month calibration fits (full precision).
    pub calibration_fits: BTreeMap<YearMonth, CalibrationFit<f64>>,
    /// Pooled error model (full precision; the report holds a rounded copy).
    pub error_model: Option<ErrorModel<f64>>,
    /// Calibrated series (full precision).
    pub calibrated: Vec<StationSeries<f64>>,
    /// Gap-filled calibrated series (full precision).
    pub calibrated_imputed: Vec<StationSeries<f64>>,
    /// Per-station trend rows across all stages (full precision).
    pub trend_records: Vec<TrendRecord>,
    /// Full sorted slope-difference lists per compared pair.
    pub deltas: Vec<(Provenance, Provenance, Vec<TrendDelta<f64>>)>,
    /// Human-readable notes about skipped months/stations.
    pub warnings: Vec<String>,
}

/// One pairwise dataset comparison, ready for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOutputs {
    /// Sign and significance cross-tables (alpha rounded).
    pub agreement: AgreementTable<f64>,
    /// Sign tables conditioned on joint significance (alpha rounded).
    pub breakdown: ConditionalBreakdown<f64>,
    /// Per-station slope differences, ascending in the first dataset's slope.
    pub deltas: Vec<TrendDelta<f64>>,
    /// Order statistics of the differences (rounded).
    pub summary: DeltaSummary,
    /// Which stations the comparison covered.
    pub coverage: PairCoverage,
}

/// JSON document for a standalone pairwise comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonDoc {
    /// Sign and significance cross-tables.
    pub agreement: AgreementTable<f64>,
    /// Sign tables conditioned on joint significance.
    pub breakdown: ConditionalBreakdown<f64>,
    /// Order statistics of the slope differences.
    pub delta_summary: DeltaSummary,
    /// Station coverage bookkeeping.
    pub coverage: PairCoverage,
}

impl From<&PairOutputs> for ComparisonDoc {
    fn from(p: &PairOutputs) -> Self {
        ComparisonDoc {
            agreement: p.agreement.clone(),
            breakdown: p.breakdown.clone(),
            delta_summary: p.summary.clone(),
            coverage: p.coverage.clone(),
        }
    }
}

/// Compare two labeled trend sets; `Ok(None)` when they share no stations.
pub fn compare_pair(
    la: &LabeledTrends<f64>,
    lb: &LabeledTrends<f64>,
    alpha: f64,
) -> Result<Option<PairOutputs>, CompareError> {
    let (agreement, breakdown, deltas) = match (
        pairwise_agreement(la, lb, alpha),
        conditional_breakdown(la, lb, alpha),
        trend_delta(la, lb),
    ) {
        (Ok(x), Ok(y), Ok(z)) => (x, y, z),
        (Err(CompareError::NoCommonStations), _, _)
        | (_, Err(CompareError::NoCommonStations), _)
        | (_, _, Err(CompareError::NoCommonStations)) => return Ok(None),
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return Err(e),
    };
    let mut agreement = agreement;
    agreement.alpha = r6(agreement.alpha);
    let mut breakdown = breakdown;
    breakdown.alpha = r6(breakdown.alpha);

    let values: Vec<f64> = deltas.iter().map(|d| d.delta).collect();
    let mut sorted = values.clone();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("finite deltas"));
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let summary = DeltaSummary {
        labels: (la.label, lb.label),
        n,
        min: r6(sorted[0]),
        median: r6(median),
        mean: r6(values.iter().sum::<f64>() / n as f64),
        max: r6(sorted[n - 1]),
    };
    let coverage = PairCoverage {
        labels: (la.label, lb.label),
        n_common: breakdown.n_common,
        degenerate_excluded: breakdown.degenerate_excluded,
        only_in_a: la
            .trends
            .keys()
            .filter(|id| !lb.trends.contains_key(*id))
            .cloned()
            .collect(),
        only_in_b: lb
            .trends
            .keys()
            .filter(|id| !la.trends.contains_key(*id))
            .cloned()
            .collect(),
    };
    Ok(Some(PairOutputs {
        agreement,
        breakdown,
        deltas,
        summary,
        coverage,
    }))
}

fn warning_text(w: &CalibrationWarning<f64>) -> String {
    match w {
        CalibrationWarning::MissingCalibrationMonth { station_id, month } => {
            format!("station {station_id}: no calibration fit for {month}; value left missing")
        }
        CalibrationWarning::NonphysicalValue {
            station_id,
            month,
            value,
        } => format!("station {station_id}: calibrated value {value} < 0 at {month}"),
    }
}

struct StageFits {
    label: Provenance,
    fits: BTreeMap<String, TrendFit<f64>>,
}

/// Run the complete analysis over one dataset.
///
/// Stages degrade gracefully: months with too few usable co-located
/// stations are skipped (recorded in the summary), stations with too few
/// points are skipped (recorded in `warnings`), and comparison tables are
/// emitted only for stage pairs that share stations. Pre-supplied
/// calibrated / gap-filled slots in the bundle are used as-is; otherwise
/// they are computed from the raw slot.
pub fn run_pipeline(
    bundle: &DatasetBundle,
    config: &RunConfig,
) -> Result<PipelineArtifacts, DataError> {
    config.validate()?;
    let mut warnings = Vec::new();

    // Monthly inverse calibration.
    let mut calibration_fits = BTreeMap::new();
    let mut months_skipped = Vec::new();
    for obs in &bundle.observations {
        match fit_month(obs, config.min_stations, config.level) {
            Ok(fit) => {
                calibration_fits.insert(obs.month, fit);
            }
            Err(CalibrationError::InsufficientStations { month, .. }) => {
                months_skipped.push(month);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let calibration = if bundle.observations.is_empty() {
        None
    } else {
        let n = calibration_fits.len();
        let mean = |f: &dyn Fn(&CalibrationFit<f64>) -> f64| -> f64 {
            if n == 0 {
                0.0
            } else {
                calibration_fits.values().map(|fit| f(fit)).sum::<f64>() / n as f64
            }
        };
        Some(CalibrationSummary {
            months_fitted: n,
            months_skipped: months_skipped.clone(),
            mean_a_hat: r6(mean(&|f| f.a_hat)),
            mean_b_hat: r6(mean(&|f| f.b_hat)),
            mean_n_stations: r6(mean(&|f| f.n_stations as f64)),
        })
    };

    // Pooled error model from all co-located (corrected, reference) pairs.
    let obs_by_month: BTreeMap<YearMonth, &MonthObservations<f64>> =
        bundle.observations.iter().map(|o| (o.month, o)).collect();
    let mut pairs = Vec::new();
    for (month, fit) in &calibration_fits {
        if let Some(obs) = obs_by_month.get(month) {
            for st in &fit.stations {
                if let Some(reference) = obs
                    .stations
                    .iter()
                    .find(|o| o.station_id == st.station_id)
                    .and_then(|o| o.reference)
                {
                    pairs.push(ErrorPair {
                        x_c: st.x_c,
                        reference,
                    });
                }
            }
        }
    }
    let error_model = if pairs.len() >= 2 {
        match fit_error_model(&pairs) {
            Ok(m) => Some(m),
            Err(e) => {
                warnings.push(format!("error model not fitted: {e}"));
                None
            }
        }
    } else {
        None
    };

    // Correction and gap filling (unless the bundle already carries them).
    let calibrated = match &bundle.calibrated {
        Some(set) => set.clone(),
        None if !bundle.man_raw.is_empty() && !calibration_fits.is_empty() => {
            let (set, cal_warnings) = calibrate_dataset(&bundle.man_raw, &calibration_fits)?;
            warnings.extend(cal_warnings.iter().map(warning_text));
            set
        }
        None => Vec::new(),
    };
    let calibrated_imputed = match &bundle.calibrated_imputed {
        Some(set) => set.clone(),
        None => {
            let mut out = Vec::with_capacity(calibrated.len());
            for s in &calibrated {
                match impute_gaps_stub(s) {
                    Ok(filled) => out.push(filled),
                    Err(e) => warnings.push(format!(
                        "station {}: gap filling skipped: {e}",
                        s.station_id
                    )),
                }
            }
            out
        }
    };

    // Trend fits per stage.
    let mut stages = Vec::new();
    let mut trend_records = Vec::new();
    for (label, set) in [
        (Provenance::Raw, &bundle.man_raw),
        (Provenance::Calibrated, &calibrated),
        (Provenance::CalibratedImputed, &calibrated_imputed),
    ] {
        if set.is_empty() {
            continue;
        }
        let extra = config.extra_variance(label);
        let mut fits = BTreeMap::new();
        for series in set {
            match fit_trend(series, extra) {
                Ok(fit) => {
                    let class = classify(&fit, config.alpha, true);
                    trend_records.push(TrendRecord::from_fit(
                        series.station_id.clone(),
                        label,
                        &fit,
                        class,
                    ));
                    fits.insert(series.station_id.clone(), fit);
                }
                Err(TrendError::InsufficientData { needed, got }) => warnings.push(format!(
                    "station {} ({label}): trend skipped, {got} of {needed} needed months",
                    series.station_id
                )),
                Err(e) => return Err(e.into()),
            }
        }
        if !fits.is_empty() {
            stages.push(StageFits { label, fits });
        }
    }

    // Censuses and significance drops.
    let mut censuses = Vec::new();
    let mut significance_drops = Vec::new();
    for stage in &stages {
        let labeled = LabeledTrends::from_fits(
            stage.label,
            stage.fits.iter().map(|(id, fit)| (id.as_str(), fit)),
        );
        let mut census_naive = trend_census(&labeled, config.alpha, false)?;
        census_naive.alpha = r6(census_naive.alpha);
        censuses.push(census_naive);
        if config.extra_variance(stage.label) > 0.0 {
            let mut census_adj = trend_census(&labeled, config.alpha, true)?;
            census_adj.alpha = r6(census_adj.alpha);
            censuses.push(census_adj);
            let mut drop = significance_drop_report(&labeled, config.alpha)?;
            drop.alpha = r6(drop.alpha);
            drop.drop_fraction = r6(drop.drop_fraction);
            significance_drops.push(drop);
        }
    }

    // Pairwise comparisons between consecutive stages.
    let mut agreements = Vec::new();
    let mut breakdowns = Vec::new();
    let mut delta_summaries = Vec::new();
    let mut reconciliation = Vec::new();
    let mut deltas = Vec::new();
    for window in stages.windows(2) {
        let (a, b) = (&window[0], &window[1]);
        let la = LabeledTrends::from_fits(a.label, a.fits.iter().map(|(id, f)| (id.as_str(), f)));
        let lb = LabeledTrends::from_fits(b.label, b.fits.iter().map(|(id, f)| (id.as_str(), f)));
        match compare_pair(&la, &lb, config.alpha)? {
            Some(pair) => {
                agreements.push(pair.agreement);
                breakdowns.push(pair.breakdown);
                delta_summaries.push(pair.summary);
                reconciliation.push(pair.coverage);
                deltas.push((a.label, b.label, pair.deltas));
            }
            None => warnings.push(format!(
                "no common stations between {} and {}; comparison skipped",
                a.label, b.label
            )),
        }
    }

    let error_model_rounded = error_model.as_ref().map(|m| ErrorModel {
        c_hat: r6(m.c_hat),
        c_residual_variance: r6(m.c_residual_variance),
        pooled_nu_variance: r6(m.pooled_nu_variance),
        n_pairs: m.n_pairs,
    });

    Ok(PipelineArtifacts {
        report: AnalysisReport {
            config: *config,
            metadata: bundle.metadata.clone(),
            calibration,
            error_model: error_model_rounded,
            censuses,
            significance_drops,
            agreements,
            breakdowns,
            delta_summaries,
            reconciliation,
        },
        calibration_fits,
        error_model,
        calibrated,
        calibrated_imputed,
        trend_records,
        deltas,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Output format of [`write_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Structured report (schema shipped in `schemas/report.schema.json`).
    Json,
    /// Aligned human-readable tables.
    Text,
    /// Census rows only, one line per census.
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format '{other}'")),
        }
    }
}

/// Render censuses as text blocks (one per census).
pub fn render_censuses_text(censuses: &[TrendCensus<f64>]) -> String {
    let mut out = String::new();
    for (i, census) in censuses.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        census_block(&mut out, census);
    }
    out
}

fn census_block(out: &mut String, census: &TrendCensus<f64>) {
    let total = census.positive + census.negative + census.degenerate;
    out.push_str(&format!(
        "trend census — {}, {} p, alpha {} (n = {})\n",
        census.dataset_label,
        if census.adjusted { "adjusted" } else { "naive" },
        fmt6(census.alpha),
        total
    ));
    out.push_str(&format!("  + : {}\n", census.positive));
    out.push_str(&format!("  - : {}\n", census.negative));
    out.push_str(&format!("  +*: {}\n", census.positive_significant));
    out.push_str(&format!("  -*: {}\n", census.negative_significant));
    out.push_str(&format!("  0 : {}\n", census.degenerate));
}

fn matrix_block(
    out: &mut String,
    row_name: &str,
    col_name: &str,
    row_labels: [&str; 2],
    col_labels: [&str; 2],
    m: &[[usize; 2]; 2],
) {
    out.push_str(&format!(
        "  {:<12}{:>10}{:>10}\n",
        "",
        format!("{col_name} {}", col_labels[0]),
        format!("{col_name} {}", col_labels[1])
    ));
    for (i, row) in m.iter().enumerate() {
        out.push_str(&format!(
            "  {:<12}{:>10}{:>10}\n",
            format!("{row_name} {}", row_labels[i]),
            row[0],
            row[1]
        ));
    }
}

/// Render one agreement table pair (sign matrix + significance matrix).
pub fn render_agreement_text(agreement: &AgreementTable<f64>) -> String {
    let mut out = String::new();
    let (a, b) = (&agreement.labels.0, &agreement.labels.1);
    out.push_str(&format!(
        "sign agreement — {a} vs {b} (n = {}, degenerate excluded = {})\n",
        agreement.n_common, agreement.degenerate_excluded
    ));
    matrix_block(
        &mut out,
        a.as_str(),
        b.as_str(),
        ["-", "+"],
        ["-", "+"],
        &agreement.sign_counts,
    );
    out.push_str(&format!("significance agreement — {a} vs {b}\n"));
    matrix_block(
        &mut out,
        a.as_str(),
        b.as_str(),
        ["ns", "* "],
        ["ns", "* "],
        &agreement.significance_counts,
    );
    out
}

/// Render the four sign matrices of a joint-significance breakdown.
pub fn render_breakdown_text(breakdown: &ConditionalBreakdown<f64>) -> String {
    let mut out = String::new();
    let (a, b) = (&breakdown.labels.0, &breakdown.labels.1);
    out.push_str(&format!(
        "sign agreement by joint significance — {a} vs {b}\n"
    ));
    for (a_sig, a_name) in [(0usize, "ns"), (1, "* ")] {
        for (b_sig, b_name) in [(0usize, "ns"), (1, "* ")] {
            out.push_str(&format!("  [{a} {a_name} & {b} {b_name}]\n"));
            matrix_block(
                &mut out,
                a.as_str(),
                b.as_str(),
                ["-", "+"],
                ["-", "+"],
                &breakdown.tables[a_sig][b_sig],
            );
        }
    }
    out
}

/// Render the aligned-text form of a report.
pub fn render_text(report: &AnalysisReport) -> String {
    let mut out = String::new();
    out.push_str("ammonia trend analysis\n");
    out.push_str("======================\n\n");

    out.push_str("configuration\n");
    out.push_str(&format!("  alpha          {}\n", fmt6(report.config.alpha)));
    out.push_str(&format!("  level          {}\n", fmt6(report.config.level)));
    out.push_str(&format!(
        "  sigma_nu^2     {}\n",
        fmt6(report.config.sigma_nu_squared)
    ));
    out.push_str(&format!(
        "  sigma_tau^2    {}\n",
        fmt6(report.config.sigma_tau_squared)
    ));
    out.push_str(&format!("  min stations   {}\n", report.config.min_stations));
    out.push_str(&format!("  seed           {}\n", report.config.seed));
    out.push('\n');

    out.push_str("dataset\n");
    out.push_str(&format!(
        "  period         {}..{}\n",
        report.metadata.period_start, report.metadata.period_end
    ));
    for (slot, rows) in &report.metadata.row_counts {
        let path = report
            .metadata
            .source_paths
            .get(slot)
            .map(String::as_str)
            .unwrap_or("(in memory)");
        out.push_str(&format!("  {slot:<18} {rows} rows from {path}\n"));
    }
    out.push('\n');

    if let Some(cal) = &report.calibration {
        out.push_str("calibration\n");
        out.push_str(&format!("  months fitted  {}\n", cal.months_fitted));
        let skipped = if cal.months_skipped.is_empty() {
            "(none)".to_string()
        } else {
            cal.months_skipped
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        out.push_str(&format!("  months skipped {skipped}\n"));
        out.push_str(&format!("  mean a_hat     {}\n", fmt6(cal.mean_a_hat)));
        out.push_str(&format!("  mean b_hat     {}\n", fmt6(cal.mean_b_hat)));
        out.push_str(&format!(
            "  mean stations  {}\n",
            fmt6(cal.mean_n_stations)
        ));
        out.push('\n');
    }

    if let Some(m) = &report.error_model {
        out.push_str("pooled error model\n");
        out.push_str(&format!("  c_hat                {}\n", fmt6(m.c_hat)));
        out.push_str(&format!(
            "  c residual variance  {}\n",
            fmt6(m.c_residual_variance)
        ));
        out.push_str(&format!(
            "  pooled nu variance   {}\n",
            fmt6(m.pooled_nu_variance)
        ));
        out.push_str(&format!("  pairs                {}\n", m.n_pairs));
        out.push('\n');
    }

    for census in &report.censuses {
        census_block(&mut out, census);
        out.push('\n');
    }

    for drop in &report.significance_drops {
        out.push_str(&format!(
            "significance drop — {}: naive {} -> adjusted {} (drop fraction {}, n = {})\n\n",
            drop.dataset_label,
            drop.naive_count,
            drop.adjusted_count,
            fmt6(drop.drop_fraction),
            drop.n_stations
        ));
    }

    for agreement in &report.agreements {
        out.push_str(&render_agreement_text(agreement));
        out.push('\n');
    }

    for breakdown in &report.breakdowns {
        out.push_str(&render_breakdown_text(breakdown));
        out.push('\n');
    }

    for summary in &report.delta_summaries {
        let (a, b) = (&summary.labels.0, &summary.labels.1);
        out.push_str(&format!(
            "slope deltas — {b} minus {a} (n = {}): min {}, median {}, mean {}, max {}\n",
            summary.n,
            fmt6(summary.min),
            fmt6(summary.median),
            fmt6(summary.mean),
            fmt6(summary.max)
        ));
    }
    if !report.delta_summaries.is_empty() {
        out.push('\n');
    }

    if !report.reconciliation.is_empty() {
        out.push_str("reconciliation\n");
        for cov in &report.reconciliation {
            let (a, b) = (&cov.labels.0, &cov.labels.1);
            out.push_str(&format!(
                "  {a} vs {b}: common {}, degenerate excluded {}, only in {a}: {}, only in {b}: {}\n",
                cov.n_common,
                cov.degenerate_excluded,
                if cov.only_in_a.is_empty() {
                    "(none)".to_string()
                } else {
                    cov.only_in_a.join(" ")
                },
                if cov.only_in_b.is_empty() {
                    "(none)".to_string()
                } else {
                    cov.only_in_b.join(" ")
                },
            ));
        }
    }

    out
}

/// Render census rows as CSV.
pub fn render_census_csv(censuses: &[TrendCensus<f64>]) -> String {
    let mut out = String::from(
        "dataset,alpha,adjusted,n,positive,negative,positive_significant,negative_significant,degenerate\n",
    );
    for c in censuses {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            c.dataset_label,
            c.alpha,
            c.adjusted,
            c.positive + c.negative + c.degenerate,
            c.positive,
            c.negative,
            c.positive_significant,
            c.negative_significant,
            c.degenerate
        ));
    }
    out
}

/// Write a report in the chosen format. The report must contain at least
/// one census.
pub fn write_report(
    report: &AnalysisReport,
    format: ReportFormat,
    path: impl AsRef<std::path::Path>,
) -> Result<(), DataError> {
    if report.censuses.is_empty() {
        return Err(DataError::NoInput);
    }
    match format {
        ReportFormat::Json => write_json_pretty(path, report),
        ReportFormat::Text => Ok(std::fs::write(path, render_text(report))?),
        ReportFormat::Csv => Ok(std::fs::write(path, render_census_csv(&report.censuses))?),
    }
}

/// Write the plot-ready slope-difference file
/// (`pair,rank,station_id,theta1_a,theta1_b,delta`), values at 6
/// significant digits, ranks 1-based in ascending `theta1_a` order.
pub fn write_deltas_csv(
    path: impl AsRef<std::path::Path>,
    deltas: &[(Provenance, Provenance, Vec<TrendDelta<f64>>)],
) -> Result<(), DataError> {
    let mut out = String::from("pair,rank,station_id,theta1_a,theta1_b,delta\n");
    for (a, b, list) in deltas {
        for (rank, d) in list.iter().enumerate() {
            out.push_str(&format!(
                "{a}_vs_{b},{},{},{},{},{}\n",
                rank + 1,
                d.station_id,
                fmt6(d.theta1_a),
                fmt6(d.theta1_b),
                fmt6(d.delta)
            ));
        }
    }
    Ok(std::fs::write(path, out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compare::StationTrend;
    use crate::synth::{generate_network, SynthSpec};

    #[test]
    fn rounding_keeps_six_significant_digits() {
        assert_eq!(round_sig(1234567.0, 6), 1234570.0);
        assert_eq!(round_sig(0.000123456789, 6), 0.000123457);
        assert_eq!(round_sig(-0.000123456789, 6), -0.000123457);
        assert_eq!(round_sig(1.635, 6), 1.635);
        assert_eq!(round_sig(0.0, 6), 0.0);
        assert_eq!(round_sig(8.0, 6), 8.0);
        assert_eq!(round_sig(0.5158730158730159, 6), 0.515873);
    }

    fn hand_census() -> TrendCensus<f64> {
        let mut labeled = LabeledTrends::new(Provenance::Calibrated);
        for (id, theta1, p) in [("S1", 0.02, 0.01), ("S2", 0.01, 0.20), ("S3", -0.01, 0.30)] {
            labeled.trends.insert(
                id.to_string(),
                StationTrend {
                    theta1,
                    p_naive: p,
                    p_adjusted: p,
                },
            );
        }
        trend_census(&labeled, 0.05, false).unwrap()
    }

    #[test]
    fn census_text_block_matches_hand_example() {
        let mut out = String::new();
        census_block(&mut out, &hand_census());
        assert!(out.contains("+ : 2"), "{out}");
        assert!(out.contains("- : 1"), "{out}");
        assert!(out.contains("+*: 1"), "{out}");
        assert!(out.contains("-*: 0"), "{out}");
        assert!(out.contains("n = 3"), "{out}");
    }

    fn small_pipeline() -> PipelineArtifacts {
        let spec = SynthSpec {
            n_reference_stations: 4,
            n_area_stations: 16,
            n_months: 40,
            ..SynthSpec::default()
        };
        let net = generate_network(&spec).unwrap();
        let bundle = DatasetBundle::from_network(&net);
        run_pipeline(&bundle, &RunConfig::default()).unwrap()
    }

    #[test]
    fn pipeline_produces_all_stages() {
        let art = small_pipeline();
        assert_eq!(art.calibration_fits.len(), 40);
        assert_eq!(art.calibrated.len(), 16);
        assert_eq!(art.calibrated_imputed.len(), 16);
        // raw naive, calibrated naive+adjusted, imputed naive+adjusted.
        assert_eq!(art.report.censuses.len(), 5);
        assert_eq!(art.report.significance_drops.len(), 2);
        assert_eq!(art.report.agreements.len(), 2);
        assert_eq!(art.report.breakdowns.len(), 2);
        assert_eq!(art.report.delta_summaries.len(), 2);
        assert_eq!(art.report.reconciliation.len(), 2);
        assert!(art.report.calibration.is_some());
        assert!(art.report.error_model.is_some());
        // Three stages of trend records for every station.
        assert_eq!(art.trend_records.len(), 3 * 16);
        assert!(art
            .trend_records
            .iter()
            .all(|r| r.p_adjusted >= r.p_naive));
    }

    #[test]
    fn report_tables_reconcile() {
        let art = small_pipeline();
        for (agreement, breakdown) in art.report.agreements.iter().zip(&art.report.breakdowns) {
            let sign_total: usize = agreement.sign_counts.iter().flatten().sum();
            let sig_total: usize = agreement.significance_counts.iter().flatten().sum();
            let grand: usize = breakdown
                .tables
                .iter()
                .flatten()
                .flatten()
                .flatten()
                .sum();
            assert_eq!(sign_total, agreement.n_common);
            assert_eq!(sig_total, agreement.n_common);
            assert_eq!(grand, breakdown.n_common);
            assert_eq!(agreement.n_common, breakdown.n_common);
        }
        for cov in &art.report.reconciliation {
            assert!(cov.only_in_a.is_empty());
            assert!(cov.only_in_b.is_empty());
        }
    }

    #[test]
    fn report_bytes_are_deterministic_in_every_format() {
        let art = small_pipeline();
        let art2 = small_pipeline();
        assert_eq!(art.report, art2.report);

        let dir = tempfile::tempdir().unwrap();
        for (format, name) in [
            (ReportFormat::Json, "r.json"),
            (ReportFormat::Text, "r.txt"),
            (ReportFormat::Csv, "r.csv"),
        ] {
            let p1 = dir.path().join(format!("a_{name}"));
            let p2 = dir.path().join(format!("b_{name}"));
            write_report(&art.report, format, &p1).unwrap();
            write_report(&art2.report, format, &p2).unwrap();
            let b1 = std::fs::read(&p1).unwrap();
            assert_eq!(b1, std::fs::read(&p2).unwrap());
            assert!(!b1.is_empty());
        }
    }

    #[test]
    fn json_report_round_trips_through_serde() {
        let art = small_pipeline();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("report.json");
        write_report(&art.report, ReportFormat::Json, &p).unwrap();
        let back: AnalysisReport = crate::io::read_json(&p).unwrap();
        assert_eq!(back, art.report);
    }

    #[test]
    fn text_report_covers_every_section() {
        let art = small_pipeline();
        let text = render_text(&art.report);
        for needle in [
            "configuration",
            "dataset",
            "calibration",
            "pooled error model",
            "trend census — raw",
            "trend census — calibrated, adjusted",
            "significance drop — calibrated",
            "sign agreement — raw vs calibrated",
            "sign agreement by joint significance — calibrated vs calibrated_imputed",
            "slope deltas",
            "reconciliation",
        ] {
            assert!(text.contains(needle), "missing '{needle}' in:\n{text}");
        }
    }

    #[test]
    fn deltas_csv_is_ranked_and_rounded() {
        let art = small_pipeline();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("deltas.csv");
        write_deltas_csv(&p, &art.deltas).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "pair,rank,station_id,theta1_a,theta1_b,delta"
        );
        let first = lines.next().unwrap();
        assert!(first.starts_with("raw_vs_calibrated,1,"), "{first}");
        // 16 stations in each of two pairs, plus the header.
        assert_eq!(text.lines().count(), 1 + 2 * 16);
    }

    #[test]
    fn empty_report_is_rejected() {
        let art = small_pipeline();
        let empty = AnalysisReport {
            censuses: Vec::new(),
            ..art.report
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_report(&empty, ReportFormat::Json, dir.path().join("r.json")),
            Err(DataError::NoInput)
        ));
    }

    #[test]
    fn presupplied_stage_slots_are_respected() {
        let spec = SynthSpec {
            n_reference_stations: 3,
            n_area_stations: 6,
            n_months: 30,
            ..SynthSpec::default()
        };
        let net = generate_network(&spec).unwrap();
        let mut bundle = DatasetBundle::from_network(&net);
        let art = run_pipeline(&bundle, &RunConfig::default()).unwrap();
        // Feed the computed results back in as if loaded from files.
        bundle.calibrated = Some(art.calibrated.clone());
        bundle.calibrated_imputed = Some(art.calibrated_imputed.clone());
        let art2 = run_pipeline(&bundle, &RunConfig::default()).unwrap();
        assert_eq!(art.report, art2.report);
        assert_eq!(art.trend_records, art2.trend_records);
    }
}
