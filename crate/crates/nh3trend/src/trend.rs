//! Per-station trend regression with measurement-error-aware p-values,
//! significance classification, start-date sensitivity sweeps, and yearly
//! aggregation.
//!
//! The trend model is plain least squares of concentration on the 1-based
//! time index. Two inference tracks share the same coefficient estimates:
//! the *naive* track uses the regression's own residual variance σ̂²_ε,
//! while the *adjusted* track inflates it with the measurement-error
//! variance the calibration leaves behind (σ²_ν, plus any imputation
//! variance σ²_τ supplied by the caller), so
//! `se_adjusted = sqrt((σ̂²_ε + extra_variance)/sxx)`. Adjusted p-values are
//! therefore never smaller than naive ones.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;
use crate::series::{Granularity, SeriesError, StationSeries, YearMonth};
use crate::stats::{ols_fit, two_sided_p, StatsError};

/// Errors from trend fitting and aggregation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrendError {
    /// Fewer than three non-missing points to regress on.
    #[error("trend fit needs at least {needed} non-missing values, got {got}")]
    InsufficientData {
        /// Required count.
        needed: usize,
        /// Available count.
        got: usize,
    },
    /// Start-date sweeps need room for at least one 3-point suffix plus the
    /// 12-month stop rule.
    #[error("start-date sweep needs a series of length ≥ {needed}, got {got}")]
    SeriesTooShort {
        /// Required axis length.
        needed: usize,
        /// Actual axis length.
        got: usize,
    },
    /// Operation defined for one granularity only.
    #[error("expected {expected} series, got {got}")]
    WrongGranularity {
        /// Required granularity.
        expected: Granularity,
        /// Supplied granularity.
        got: Granularity,
    },
    /// Underlying regression failure (propagated; unreachable for the
    /// integer time index, guarded anyway).
    #[error(transparent)]
    Stats(#[from] StatsError),
    /// Underlying series construction failure (propagated).
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// A fitted station trend with naive and error-inflated inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendFit<T> {
    /// Intercept θ₀ (µg/m³ at time index 0).
    pub theta0: T,
    /// Slope θ₁ (µg/m³ per time step). Identical in both tracks.
    pub theta1: T,
    /// Non-missing points used.
    pub n_used: usize,
    /// Regression residual variance σ̂²_ε.
    pub residual_variance: T,
    /// Additive measurement-error variance (σ²_ν, optionally + σ²_τ).
    pub extra_variance: T,
    /// `sqrt(σ̂²_ε / sxx)`.
    pub se_naive: T,
    /// `sqrt((σ̂²_ε + extra_variance) / sxx)` — never below `se_naive`.
    pub se_adjusted: T,
    /// θ₁ / se_naive (±∞ when the fit is exact with nonzero slope).
    pub t_naive: T,
    /// θ₁ / se_adjusted.
    pub t_adjusted: T,
    /// Two-sided p-value of the naive track, df = n_used − 2.
    pub p_naive: T,
    /// Two-sided p-value of the adjusted track, df = n_used − 2;
    /// ≥ `p_naive` always.
    pub p_adjusted: T,
    /// True when the naive t-statistic hit a zero denominator
    /// (exact-fit residual variance).
    pub degenerate: bool,
}

/// Significance classification of a trend at a chosen threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendClass {
    /// θ₁ > 0 and p < α.
    PositiveSignificant,
    /// θ₁ > 0 and p ≥ α.
    PositiveNotSignificant,
    /// θ₁ < 0 and p < α.
    NegativeSignificant,
    /// θ₁ < 0 and p ≥ α.
    NegativeNotSignificant,
    /// θ₁ exactly 0 — no direction to classify.
    ZeroDegenerate,
}

impl TrendClass {
    /// Canonical snake_case label used in CSV columns and reports.
    pub fn as_str(self) -> &'static str {
        match self {
            TrendClass::PositiveSignificant => "positive_significant",
            TrendClass::PositiveNotSignificant => "positive_not_significant",
            TrendClass::NegativeSignificant => "negative_significant",
            TrendClass::NegativeNotSignificant => "negative_not_significant",
            TrendClass::ZeroDegenerate => "zero_degenerate",
        }
    }

    /// True for the two `*Significant` variants.
    pub fn is_significant(self) -> bool {
        matches!(
            self,
            TrendClass::PositiveSignificant | TrendClass::NegativeSignificant
        )
    }
}

impl std::fmt::Display for TrendClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrendClass {
    type Err = SeriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive_significant" => Ok(TrendClass::PositiveSignificant),
            "positive_not_significant" => Ok(TrendClass::PositiveNotSignificant),
            "negative_significant" => Ok(TrendClass::NegativeSignificant),
            "negative_not_significant" => Ok(TrendClass::NegativeNotSignificant),
            "zero_degenerate" => Ok(TrendClass::ZeroDegenerate),
            _ => Err(SeriesError::BadToken {
                kind: "trend class",
                text: s.to_string(),
            }),
        }
    }
}

/// Fit the trend of one series.
///
/// The predictor is the 1-based position on the series axis of each
/// non-missing value (missing values are dropped pairwise, keeping their
/// neighbors' indexes). Needs ≥ 3 points. `extra_variance` must be a
/// finite value ≥ 0.
///
/// Degenerate exact fits follow the zero-denominator policy: zero slope
/// with zero residual variance reports p = 1; nonzero slope with zero
/// residual variance reports p = 0 (t = ±∞); both set the `degenerate`
/// flag.
pub fn fit_trend<T: Real>(
    series: &StationSeries<T>,
    extra_variance: T,
) -> Result<TrendFit<T>, TrendError> {
    if !extra_variance.is_finite() || extra_variance < T::zero() {
        return Err(TrendError::Stats(StatsError::DomainError(
            "extra variance must be finite and ≥ 0",
        )));
    }
    let mut xs: Vec<T> = Vec::new();
    let mut ys: Vec<T> = Vec::new();
    for (i, v) in series.iter_present() {
        xs.push(T::from_count(i + 1));
        ys.push(v);
    }
    if xs.len() < 3 {
        return Err(TrendError::InsufficientData {
            needed: 3,
            got: xs.len(),
        });
    }
    let ols = ols_fit(&xs, &ys)?;
    let n_used = ols.n;
    let df = T::from_count(n_used - 2);
    let theta1 = ols.slope;
    let rv = ols.residual_variance;

    let se_naive = ols.se_slope;
    let se_adjusted = ((rv + extra_variance) / ols.sxx).sqrt();

    let degenerate = rv == T::zero();
    let (t_naive, p_naive) = if degenerate {
        if theta1 == T::zero() {
            (T::zero(), T::one())
        } else {
            (
                if theta1 > T::zero() {
                    T::infinity()
                } else {
                    T::neg_infinity()
                },
                T::zero(),
            )
        }
    } else {
        let t = theta1 / se_naive;
        (t, two_sided_p(t, df)?)
    };

    let (t_adjusted, p_adjusted) = if se_adjusted == T::zero() {
        // Only reachable when rv = 0 and extra_variance = 0.
        (t_naive, p_naive)
    } else {
        let t = theta1 / se_adjusted;
        // Inflated variance can only raise the p-value; the max guards the
        // identity against last-ulp continued-fraction noise and makes the
        // extra_variance = 0 track bit-identical to the naive one.
        (t, two_sided_p(t, df)?.max(p_naive))
    };

    Ok(TrendFit {
        theta0: ols.intercept,
        theta1,
        n_used,
        residual_variance: rv,
        extra_variance,
        se_naive,
        se_adjusted,
        t_naive,
        t_adjusted,
        p_naive,
        p_adjusted,
        degenerate,
    })
}

/// Classify a fitted trend at threshold `alpha`, using the adjusted or the
/// naive p-value.
///
/// A slope of exactly 0 has no direction and classifies as
/// [`TrendClass::ZeroDegenerate`]; otherwise the class combines
/// `sign(θ₁)` with `p < alpha` (strict).
pub fn classify<T: Real>(fit: &TrendFit<T>, alpha: T, use_adjusted: bool) -> TrendClass {
    if fit.theta1 == T::zero() {
        return TrendClass::ZeroDegenerate;
    }
    let p = if use_adjusted {
        fit.p_adjusted
    } else {
        fit.p_naive
    };
    let significant = p < alpha;
    match (fit.theta1 > T::zero(), significant) {
        (true, true) => TrendClass::PositiveSignificant,
        (true, false) => TrendClass::PositiveNotSignificant,
        (false, true) => TrendClass::NegativeSignificant,
        (false, false) => TrendClass::NegativeNotSignificant,
    }
}

/// One entry of a start-date sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry<T> {
    /// 1-based start position of the suffix on the original axis.
    pub start_index: usize,
    /// Calendar period of that start position.
    pub start_period: YearMonth,
    /// Fit result or an insufficient-data marker (alignment preserved).
    pub outcome: SweepOutcome<T>,
}

/// Outcome of one sweep suffix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepOutcome<T> {
    /// The suffix supported a fit.
    Fitted {
        /// The suffix trend fit.
        fit: TrendFit<T>,
        /// Its classification at the sweep's alpha.
        class: TrendClass,
    },
    /// Fewer than three non-missing points in the suffix.
    InsufficientData {
        /// Non-missing points available.
        n_present: usize,
    },
}

/// Refit the trend from every candidate start date.
///
/// Entry `i` (1-based, `i = 1 … N−12`) fits the suffix that starts at
/// position `i`; the stop rule keeps at least 13 months in the final
/// suffix. Suffixes with < 3 non-missing points yield
/// [`SweepOutcome::InsufficientData`] markers rather than being omitted, so
/// entry positions always align with start dates. Needs `N ≥ 15`.
///
/// Entry 1 is exactly the full-series [`fit_trend`].
pub fn start_date_sweep<T: Real>(
    series: &StationSeries<T>,
    extra_variance: T,
    alpha: T,
    use_adjusted: bool,
) -> Result<Vec<SweepEntry<T>>, TrendError> {
    let n = series.len();
    if n < 15 {
        return Err(TrendError::SeriesTooShort { needed: 15, got: n });
    }
    let mut entries = Vec::with_capacity(n - 12);
    for i in 1..=(n - 12) {
        let suffix = StationSeries::new(
            series.station_id.clone(),
            series.granularity,
            series.period_at(i - 1),
            series.values[i - 1..].to_vec(),
            series.provenance,
        )?;
        let outcome = match fit_trend(&suffix, extra_variance) {
            Ok(fit) => SweepOutcome::Fitted {
                class: classify(&fit, alpha, use_adjusted),
                fit,
            },
            Err(TrendError::InsufficientData { got, .. }) => {
                SweepOutcome::InsufficientData { n_present: got }
            }
            Err(e) => return Err(e),
        };
        entries.push(SweepEntry {
            start_index: i,
            start_period: series.period_at(i - 1),
            outcome,
        });
    }
    Ok(entries)
}

/// Collapse a monthly series to yearly means.
///
/// Each calendar year touched by the axis yields one slot: the mean of its
/// non-missing months when at least `min_months` of them are present
/// (threshold clamped up to 1), otherwise missing. The result starts at
/// January of the first year and keeps station id and provenance.
pub fn aggregate_yearly<T: Real>(
    series: &StationSeries<T>,
    min_months: usize,
) -> Result<StationSeries<T>, TrendError> {
    if series.granularity != Granularity::Monthly {
        return Err(TrendError::WrongGranularity {
            expected: Granularity::Monthly,
            got: series.granularity,
        });
    }
    let needed = min_months.max(1);
    let first_year = series.start.year();
    let last_year = series.period_at(series.len() - 1).year();
    let n_years = (last_year - first_year + 1) as usize;

    let mut sums: Vec<T> = vec![T::zero(); n_years];
    let mut counts: Vec<usize> = vec![0; n_years];
    for (i, v) in series.iter_present() {
        let year = series.period_at(i).year();
        let slot = (year - first_year) as usize;
        sums[slot] += v;
        counts[slot] += 1;
    }
    let values: Vec<Option<T>> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| {
            if c >= needed {
                Some(s / T::from_count(c))
            } else {
                None
            }
        })
        .collect();
    Ok(StationSeries::new(
        series.station_id.clone(),
        Granularity::Yearly,
        YearMonth::new(first_year, 1),
        values,
        series.provenance,
    )?)
}
