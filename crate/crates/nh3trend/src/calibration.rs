//! Monthly inverse calibration of passive-sampler triplets against
//! co-located reference analyzers, predictive intervals for the calibrated
//! values, and the pooled proportional error model.
//!
//! For each month the triplet means `x` of the co-located stations are
//! regressed against the ratio response `y = reference / x`, giving
//! coefficients `(â, b̂)`; a sampler value is then corrected as
//! `x_c = (â + b̂·x)·x`, which reproduces the reference exactly at the
//! fitted stations when the fit interpolates. Calibration error left over
//! after correction is summarized two ways: a proportional error band
//! `|reference − x_c| ≈ ĉ·x_c + ε` fitted through the origin, and a pooled
//! variance of the differences used to inflate trend standard errors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;
use crate::series::{Provenance, SeriesError, StationSeries, YearMonth};
use crate::stats::{ols_fit, prediction_interval, t_quantile, Interval, OlsFit, StatsError};

/// Pooled measurement-error variance (µg/m³)² shipped as the documented
/// default when no co-located reference data is available to estimate it.
pub const DEFAULT_SIGMA_NU_SQUARED: f64 = 1.635;

/// Errors from calibration fitting and application.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    /// Fewer usable co-located stations than the configured minimum.
    #[error("month {month}: {usable} usable station(s), need at least {needed}")]
    InsufficientStations {
        /// Month that failed to fit.
        month: YearMonth,
        /// Effective minimum (at least 2).
        needed: usize,
        /// Stations with a positive triplet mean and a reference value.
        usable: usize,
    },
    /// Error-model fitting needs at least two calibrated/reference pairs.
    #[error("error model needs at least {needed} pairs, got {got}")]
    InsufficientPairs {
        /// Required pair count.
        needed: usize,
        /// Supplied pair count.
        got: usize,
    },
    /// An observation violated a structural invariant (negative or
    /// non-finite reading, empty station list).
    #[error("invalid observations: {0}")]
    InvalidObservations(&'static str),
    /// Dataset calibration operates on monthly series only.
    #[error("station {station_id}: dataset calibration requires monthly granularity")]
    NotMonthly {
        /// Offending series.
        station_id: String,
    },
    /// Underlying regression failure (propagated).
    #[error(transparent)]
    Stats(#[from] StatsError),
    /// Underlying series construction failure (propagated).
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// One station's raw material for a calibration month: up to three passive
/// readings and the co-located reference value, any of which may be missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMonthObs<T> {
    /// Station identifier.
    pub station_id: String,
    /// The three passive readings (µg/m³ ≥ 0); missing samplers allowed.
    pub samplers: [Option<T>; 3],
    /// Co-located reference value (µg/m³ ≥ 0), if measured.
    pub reference: Option<T>,
}

impl<T: Real> StationMonthObs<T> {
    /// Mean of the available sampler readings; `None` when all three are
    /// missing.
    pub fn triplet_mean(&self) -> Option<T> {
        let present: Vec<T> = self.samplers.iter().flatten().copied().collect();
        if present.is_empty() {
            None
        } else {
            Some(present.iter().copied().sum::<T>() / T::from_count(present.len()))
        }
    }
}

/// All co-located observations for one calendar month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthObservations<T> {
    /// The calendar month.
    pub month: YearMonth,
    /// Station entries, in dataset order.
    pub stations: Vec<StationMonthObs<T>>,
}

impl<T: Real> MonthObservations<T> {
    /// Build a month of observations, rejecting empty station lists and
    /// negative or non-finite readings.
    pub fn new(
        month: YearMonth,
        stations: Vec<StationMonthObs<T>>,
    ) -> Result<Self, CalibrationError> {
        if stations.is_empty() {
            return Err(CalibrationError::InvalidObservations(
                "at least one station entry required",
            ));
        }
        for st in &stations {
            for v in st.samplers.iter().flatten().chain(st.reference.iter()) {
                if !v.is_finite() || *v < T::zero() {
                    return Err(CalibrationError::InvalidObservations(
                        "readings must be finite and ≥ 0",
                    ));
                }
            }
        }
        Ok(MonthObservations { month, stations })
    }
}

/// One station's calibrated result inside a [`CalibrationFit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedStation<T> {
    /// Station identifier.
    pub station_id: String,
    /// Triplet mean fed into the regression (µg/m³ > 0).
    pub x: T,
    /// Calibrated value `(â + b̂·x)·x` (µg/m³).
    pub x_c: T,
    /// Predictive interval for the reference value at this station;
    /// `None` when the fit has fewer than three stations.
    pub interval: Option<Interval<T>>,
}

/// One month's fitted calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit<T> {
    /// The calendar month.
    pub month: YearMonth,
    /// Ratio-model intercept â (dimensionless).
    pub a_hat: T,
    /// Ratio-model slope b̂ (per µg/m³).
    pub b_hat: T,
    /// Stations used in the regression.
    pub n_stations: usize,
    /// The underlying regression of `y = reference/x` on `x`.
    pub ols: OlsFit<T>,
    /// Per-station calibrated values, in input order.
    pub stations: Vec<CalibratedStation<T>>,
    /// Stations excluded because their triplet mean was exactly zero
    /// (ratio response undefined).
    pub excluded_zero_mean: Vec<String>,
}

/// Correct a sampler value with fitted coefficients: `x_c = (â + b̂·x)·x`.
///
/// Total on finite input; the result may be negative (flagged downstream,
/// never clamped, so trend fits stay unbiased).
pub fn apply_calibration<T: Real>(a_hat: T, b_hat: T, x: T) -> T {
    (a_hat + b_hat * x) * x
}

/// Fit one month's calibration on the stations with a positive triplet mean
/// and a reference value.
///
/// `min_stations` is clamped up to 2 (a regression needs two points; fits on
/// fewer stations carry no information). Stations whose triplet mean is
/// exactly zero are excluded and recorded in `excluded_zero_mean`, after
/// which the count requirement is re-checked. Per-station predictive
/// intervals at `level` are attached when the fit has at least three
/// stations.
pub fn fit_month<T: Real>(
    obs: &MonthObservations<T>,
    min_stations: usize,
    level: T,
) -> Result<CalibrationFit<T>, CalibrationError> {
    let needed = min_stations.max(2);

    let mut ids: Vec<&str> = Vec::new();
    let mut xs: Vec<T> = Vec::new();
    let mut refs: Vec<T> = Vec::new();
    let mut excluded_zero_mean: Vec<String> = Vec::new();
    for st in &obs.stations {
        let (Some(x), Some(r)) = (st.triplet_mean(), st.reference) else {
            continue;
        };
        if x == T::zero() {
            excluded_zero_mean.push(st.station_id.clone());
            continue;
        }
        ids.push(&st.station_id);
        xs.push(x);
        refs.push(r);
    }

    if xs.len() < needed {
        return Err(CalibrationError::InsufficientStations {
            month: obs.month,
            needed,
            usable: xs.len(),
        });
    }

    let ys: Vec<T> = refs.iter().zip(&xs).map(|(&r, &x)| r / x).collect();
    let ols = ols_fit(&xs, &ys)?;
    let (a_hat, b_hat) = (ols.intercept, ols.slope);

    let mut fit = CalibrationFit {
        month: obs.month,
        a_hat,
        b_hat,
        n_stations: xs.len(),
        ols,
        stations: Vec::with_capacity(xs.len()),
        excluded_zero_mean,
    };
    for (id, &x) in ids.iter().zip(&xs) {
        let x_c = apply_calibration(a_hat, b_hat, x);
        let interval = if fit.n_stations >= 3 {
            Some(calibrated_interval(&fit, x, level)?)
        } else {
            None
        };
        fit.stations.push(CalibratedStation {
            station_id: (*id).to_string(),
            x,
            x_c,
            interval,
        });
    }
    Ok(fit)
}

/// Predictive interval for the reference value implied by sampler value `x`.
///
/// The ratio response `y` gets a classical prediction interval at `x0 = x`;
/// both endpoints are then multiplied by `x` (reference = y·x with x known).
/// Contains the point estimate `x_c`. Requires a fit on ≥ 3 stations and
/// `x > 0`.
pub fn calibrated_interval<T: Real>(
    fit: &CalibrationFit<T>,
    x: T,
    level: T,
) -> Result<Interval<T>, CalibrationError> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(CalibrationError::Stats(StatsError::DomainError(
            "calibrated interval requires x > 0",
        )));
    }
    let ratio_iv = prediction_interval(&fit.ols, x, level)?;
    Ok(Interval {
        lower: ratio_iv.lower * x,
        upper: ratio_iv.upper * x,
        level,
    })
}

/// A calibrated value paired with the reference it should reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPair<T> {
    /// Calibrated sampler value (µg/m³).
    pub x_c: T,
    /// Co-located reference value (µg/m³).
    pub reference: T,
}

/// Pooled calibration-error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel<T> {
    /// Proportional error slope ĉ of `|reference − x_c| = c·x_c + ε`
    /// fitted through the origin (dimensionless).
    pub c_hat: T,
    /// Residual variance of that origin regression, denominator
    /// `n_pairs − 1` (one fitted parameter).
    pub c_residual_variance: T,
    /// Pooled variance of `(reference − x_c)` over all pairs, denominator
    /// `n_pairs − 1`; the σ̂²_ν used to inflate trend standard errors.
    pub pooled_nu_variance: T,
    /// Number of pairs pooled.
    pub n_pairs: usize,
}

impl<T: Real> ErrorModel<T> {
    /// Upper error bound at `x_c`: the `level` quantile of the absolute
    /// calibration error, `ĉ·x_c + t_{level, n−1}·sqrt(c_residual_variance)`.
    ///
    /// A model with zero residual variance returns the proportional term
    /// alone.
    pub fn band(&self, x_c: T, level: T) -> Result<T, CalibrationError> {
        if !(level > T::zero() && level < T::one()) {
            return Err(CalibrationError::Stats(StatsError::DomainError(
                "level must lie strictly inside (0, 1)",
            )));
        }
        let q = t_quantile(level, T::from_count(self.n_pairs - 1))?;
        Ok(self.c_hat * x_c + q * self.c_residual_variance.sqrt())
    }
}

/// Pool calibrated/reference pairs into an [`ErrorModel`].
///
/// `c_hat = Σ(|reference − x_c|·x_c) / Σ(x_c²)` — no-intercept least
/// squares. Needs ≥ 2 pairs with not-all-zero `x_c`.
pub fn fit_error_model<T: Real>(pairs: &[ErrorPair<T>]) -> Result<ErrorModel<T>, CalibrationError> {
    if pairs.len() < 2 {
        return Err(CalibrationError::InsufficientPairs {
            needed: 2,
            got: pairs.len(),
        });
    }
    if pairs
        .iter()
        .any(|p| !p.x_c.is_finite() || !p.reference.is_finite())
    {
        return Err(CalibrationError::Stats(StatsError::DomainError(
            "pairs must be finite",
        )));
    }

    let n = pairs.len();
    let nf = T::from_count(n);
    let mut sxx = T::zero();
    let mut sdx = T::zero();
    for p in pairs {
        let d = (p.reference - p.x_c).abs();
        sxx += p.x_c * p.x_c;
        sdx += d * p.x_c;
    }
    if sxx <= T::zero() {
        return Err(CalibrationError::Stats(StatsError::DegenerateInput(
            "calibrated values are all zero",
        )));
    }
    let c_hat = sdx / sxx;

    let mut rss = T::zero();
    let mut dsq = T::zero();
    let mut diff_sum = T::zero();
    for p in pairs {
        let d = (p.reference - p.x_c).abs();
        let r = d - c_hat * p.x_c;
        rss += r * r;
        dsq += d * d;
        diff_sum += p.reference - p.x_c;
    }
    // Same exact-fit snap policy as the core regression: residuals at
    // 1e-12 relative are an exact proportional law.
    let snap = T::c(1e-12) * T::c(1e-12) * dsq;
    let c_residual_variance = if rss <= snap {
        T::zero()
    } else {
        rss / T::from_count(n - 1)
    };

    let diff_mean = diff_sum / nf;
    let mut ss = T::zero();
    for p in pairs {
        let d = (p.reference - p.x_c) - diff_mean;
        ss += d * d;
    }
    let pooled_nu_variance = ss / T::from_count(n - 1);

    Ok(ErrorModel {
        c_hat,
        c_residual_variance,
        pooled_nu_variance,
        n_pairs: n,
    })
}

/// Warnings emitted while calibrating a dataset; values they describe are
/// left missing (no fit) or flagged (nonphysical), never silently altered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CalibrationWarning<T> {
    /// A month with data had no calibration fit; the value was set missing.
    MissingCalibrationMonth {
        /// Affected station.
        station_id: String,
        /// Month without a fit.
        month: YearMonth,
    },
    /// Calibration produced a negative concentration; kept as-is.
    NonphysicalValue {
        /// Affected station.
        station_id: String,
        /// Month of the value.
        month: YearMonth,
        /// The negative calibrated value.
        value: T,
    },
}

/// Apply monthly calibration fits to a raw monthly network.
///
/// Every non-missing value `x` in month `m` becomes
/// `apply_calibration(â_m, b̂_m, x)`; months without a fit become missing
/// (with a [`CalibrationWarning::MissingCalibrationMonth`]); negative
/// results are kept but flagged. Provenance moves to `calibrated`.
#[allow(clippy::type_complexity)]
pub fn calibrate_dataset<T: Real>(
    raw: &[StationSeries<T>],
    fits: &BTreeMap<YearMonth, CalibrationFit<T>>,
) -> Result<(Vec<StationSeries<T>>, Vec<CalibrationWarning<T>>), CalibrationError> {
    let mut out = Vec::with_capacity(raw.len());
    let mut warnings = Vec::new();
    for series in raw {
        if series.granularity != crate::series::Granularity::Monthly {
            return Err(CalibrationError::NotMonthly {
                station_id: series.station_id.clone(),
            });
        }
        let mut values = Vec::with_capacity(series.len());
        for (i, v) in series.values.iter().enumerate() {
            let month = series.period_at(i);
            let Some(x) = *v else {
                values.push(None);
                continue;
            };
            match fits.get(&month) {
                None => {
                    warnings.push(CalibrationWarning::MissingCalibrationMonth {
                        station_id: series.station_id.clone(),
                        month,
                    });
                    values.push(None);
                }
                Some(fit) => {
                    let x_c = apply_calibration(fit.a_hat, fit.b_hat, x);
                    if x_c < T::zero() {
                        warnings.push(CalibrationWarning::NonphysicalValue {
                            station_id: series.station_id.clone(),
                            month,
                            value: x_c,
                        });
                    }
                    values.push(Some(x_c));
                }
            }
        }
        out.push(StationSeries::new(
            series.station_id.clone(),
            series.granularity,
            series.start,
            values,
            Provenance::Calibrated,
        )?);
    }
    Ok((out, warnings))
}
