//! Uncertainty-aware calibration and trend analysis for two-tier ammonia
//! monitoring networks.
//!
//! The pipeline ingests monthly passive-sampler triplets co-located with
//! reference analyzers, fits a monthly inverse calibration (ratio response
//! regressed on the sampler mean), propagates calibration error into
//! predictive intervals and a pooled error model, and then asks the trend
//! questions: per-station least-squares trends, p-values inflated for the
//! measurement-error variance the calibration leaves behind, start-date
//! sensitivity sweeps, and cross-dataset census/agreement reports. A
//! seeded synthetic network generator with recorded ground truth makes the
//! whole chain verifiable end to end.
//!
//! The numeric core is generic over the scalar type via [`real::Real`]
//! (`f32` or `f64`); the aliases below fix `f64` as the pipeline precision.

pub mod calibration;
pub mod cli;
pub mod compare;
pub mod io;
pub mod real;
pub mod report;
pub mod series;
pub mod stats;
pub mod synth;
pub mod trend;

pub use real::Real;

/// Pipeline-precision station series (`f64`).
pub type StationSeries = series::StationSeries<f64>;
/// Pipeline-precision regression fit (`f64`).
pub type OlsFit = stats::OlsFit<f64>;
/// Pipeline-precision interval (`f64`).
pub type Interval = stats::Interval<f64>;
/// Pipeline-precision station-month observation (`f64`).
pub type StationMonthObs = calibration::StationMonthObs<f64>;
/// Pipeline-precision month of co-located observations (`f64`).
pub type MonthObservations = calibration::MonthObservations<f64>;
/// Pipeline-precision monthly calibration fit (`f64`).
pub type CalibrationFit = calibration::CalibrationFit<f64>;
/// Pipeline-precision pooled error model (`f64`).
pub type ErrorModel = calibration::ErrorModel<f64>;
/// Pipeline-precision trend fit (`f64`).
pub type TrendFit = trend::TrendFit<f64>;
/// Pipeline-precision start-date sweep entry (`f64`).
pub type SweepEntry = trend::SweepEntry<f64>;
/// Pipeline-precision trend census (`f64`).
pub type TrendCensus = compare::TrendCensus<f64>;
/// Pipeline-precision agreement table (`f64`).
pub type AgreementTable = compare::AgreementTable<f64>;
/// Pipeline-precision conditional breakdown (`f64`).
pub type ConditionalBreakdown = compare::ConditionalBreakdown<f64>;
