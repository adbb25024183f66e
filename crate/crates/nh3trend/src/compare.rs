//! Cross-dataset trend accounting: census of trend signs and significance,
//! pairwise sign/significance agreement between two datasets, the
//! conditional sign breakdown per significance cell, per-station coefficient
//! deltas, and the naive-vs-adjusted significance drop.
//!
//! Everything here is counting over per-station trend summaries keyed by
//! station id; `BTreeMap` keys make every result independent of input
//! order. Agreement and breakdown tables classify with the *naive* p-value
//! (they mirror the published raw-vs-calibrated comparison, which predates
//! the error adjustment); the census takes an explicit flag, and the
//! significance-drop report contrasts the two tracks directly.
//!
//! Notation used in the table docs: a capital `P` is a **not**-significant
//! trend, a lowercase `p` is a significant one (p < α).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;
use crate::series::Provenance;
use crate::trend::TrendFit;

/// Errors from cross-dataset accounting.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompareError {
    /// A census or drop report over zero stations is meaningless.
    #[error("no trend fits supplied")]
    EmptyInput,
    /// Pairwise tables need at least one station present in both datasets.
    #[error("the two datasets share no station ids")]
    NoCommonStations,
}

/// The slice of a trend fit the accounting needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationTrend<T> {
    /// Slope θ₁ (µg/m³ per time step).
    pub theta1: T,
    /// Naive two-sided p-value.
    pub p_naive: T,
    /// Error-inflated two-sided p-value.
    pub p_adjusted: T,
}

impl<T: Real> From<&TrendFit<T>> for StationTrend<T> {
    fn from(fit: &TrendFit<T>) -> Self {
        StationTrend {
            theta1: fit.theta1,
            p_naive: fit.p_naive,
            p_adjusted: fit.p_adjusted,
        }
    }
}

/// A dataset's per-station trends, tagged with the dataset's provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTrends<T> {
    /// Which processing stage produced the dataset.
    pub label: Provenance,
    /// Per-station trend summaries, keyed by station id.
    pub trends: BTreeMap<String, StationTrend<T>>,
}

impl<T: Real> LabeledTrends<T> {
    /// Empty container for `label`.
    pub fn new(label: Provenance) -> Self {
        LabeledTrends {
            label,
            trends: BTreeMap::new(),
        }
    }

    /// Collect full fits into the summary map.
    pub fn from_fits<'a, I>(label: Provenance, fits: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a TrendFit<T>)>,
        T: 'a,
    {
        LabeledTrends {
            label,
            trends: fits
                .into_iter()
                .map(|(id, fit)| (id.to_string(), StationTrend::from(fit)))
                .collect(),
        }
    }
}

/// Census of one dataset's trends: sign counts with their significant
/// subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCensus<T> {
    /// Dataset the census describes.
    pub dataset_label: Provenance,
    /// Stations with θ₁ > 0.
    pub positive: usize,
    /// Stations with θ₁ < 0.
    pub negative: usize,
    /// Subset of `positive` with p < α.
    pub positive_significant: usize,
    /// Subset of `negative` with p < α.
    pub negative_significant: usize,
    /// Stations with θ₁ exactly 0, counted separately from both signs.
    pub degenerate: usize,
    /// Significance threshold used.
    pub alpha: T,
    /// True when the adjusted p-value was compared against α.
    pub adjusted: bool,
}

/// Count one dataset's trends by sign and significance.
///
/// Significant counts are subsets of the sign counts;
/// `positive + negative + degenerate` equals the station total.
pub fn trend_census<T: Real>(
    fits: &LabeledTrends<T>,
    alpha: T,
    adjusted: bool,
) -> Result<TrendCensus<T>, CompareError> {
    if fits.trends.is_empty() {
        return Err(CompareError::EmptyInput);
    }
    let mut census = TrendCensus {
        dataset_label: fits.label,
        positive: 0,
        negative: 0,
        positive_significant: 0,
        negative_significant: 0,
        degenerate: 0,
        alpha,
        adjusted,
    };
    for st in fits.trends.values() {
        if st.theta1 == T::zero() {
            census.degenerate += 1;
            continue;
        }
        let p = if adjusted { st.p_adjusted } else { st.p_naive };
        let significant = p < alpha;
        if st.theta1 > T::zero() {
            census.positive += 1;
            if significant {
                census.positive_significant += 1;
            }
        } else {
            census.negative += 1;
            if significant {
                census.negative_significant += 1;
            }
        }
    }
    Ok(census)
}

/// Pairwise agreement between two datasets' trends on their common stations.
///
/// Both 2×2 tables are indexed `[a][b]`. For `sign_counts` the index is
/// 0 = negative, 1 = positive; for `significance_counts` it is
/// 0 = not significant (`P`), 1 = significant (`p`, naive p < α). Stations
/// with θ₁ exactly 0 in either dataset have no sign half-axis and are
/// excluded from *both* tables (so the two tables always total the same
/// `n_common`); their number is recorded in `degenerate_excluded`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable<T> {
    /// Labels of datasets (a, b), in order.
    pub labels: (Provenance, Provenance),
    /// `sign_counts[a][b]`, 0 = negative, 1 = positive.
    pub sign_counts: [[usize; 2]; 2],
    /// `significance_counts[a][b]`, 0 = not significant, 1 = significant.
    pub significance_counts: [[usize; 2]; 2],
    /// Stations counted (common stations minus degenerate exclusions).
    pub n_common: usize,
    /// Common stations excluded because θ₁ = 0 exactly in either dataset.
    pub degenerate_excluded: usize,
    /// Significance threshold used (naive p-values).
    pub alpha: T,
}

fn common_stations<'a, T: Real>(
    a: &'a LabeledTrends<T>,
    b: &'a LabeledTrends<T>,
) -> Vec<(&'a String, &'a StationTrend<T>, &'a StationTrend<T>)> {
    a.trends
        .iter()
        .filter_map(|(id, sa)| b.trends.get(id).map(|sb| (id, sa, sb)))
        .collect()
}

/// Cross-tabulate two datasets' trend signs and significances.
pub fn pairwise_agreement<T: Real>(
    fits_a: &LabeledTrends<T>,
    fits_b: &LabeledTrends<T>,
    alpha: T,
) -> Result<AgreementTable<T>, CompareError> {
    let common = common_stations(fits_a, fits_b);
    if common.is_empty() {
        return Err(CompareError::NoCommonStations);
    }
    let mut table = AgreementTable {
        labels: (fits_a.label, fits_b.label),
        sign_counts: [[0; 2]; 2],
        significance_counts: [[0; 2]; 2],
        n_common: 0,
        degenerate_excluded: 0,
        alpha,
    };
    for (_, sa, sb) in common {
        if sa.theta1 == T::zero() || sb.theta1 == T::zero() {
            table.degenerate_excluded += 1;
            continue;
        }
        let si = (sa.theta1 > T::zero()) as usize;
        let sj = (sb.theta1 > T::zero()) as usize;
        let pi = (sa.p_naive < alpha) as usize;
        let pj = (sb.p_naive < alpha) as usize;
        table.sign_counts[si][sj] += 1;
        table.significance_counts[pi][pj] += 1;
        table.n_common += 1;
    }
    Ok(table)
}

/// Sign agreement split by significance cell.
///
/// `tables[a_sig][b_sig]` is the 2×2 sign table (indexed like
/// [`AgreementTable::sign_counts`]) of the stations in that significance
/// cell: `tables[0][0]` is the both-not-significant (`PP`) cell,
/// `tables[1][0]` the a-significant/b-not (`pP`) cell, and so on. Cell
/// totals reconcile with [`AgreementTable::significance_counts`]
/// entry-by-entry, and the grand total is `n_common`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalBreakdown<T> {
    /// Labels of datasets (a, b), in order.
    pub labels: (Provenance, Provenance),
    /// `tables[a_sig][b_sig][a_sign][b_sign]`.
    pub tables: [[[[usize; 2]; 2]; 2]; 2],
    /// Stations counted (common stations minus degenerate exclusions).
    pub n_common: usize,
    /// Common stations excluded because θ₁ = 0 exactly in either dataset.
    pub degenerate_excluded: usize,
    /// Significance threshold used (naive p-values).
    pub alpha: T,
}

/// Cross-tabulate trend signs conditioned on the significance cell.
pub fn conditional_breakdown<T: Real>(
    fits_a: &LabeledTrends<T>,
    fits_b: &LabeledTrends<T>,
    alpha: T,
) -> Result<ConditionalBreakdown<T>, CompareError> {
    let common = common_stations(fits_a, fits_b);
    if common.is_empty() {
        return Err(CompareError::NoCommonStations);
    }
    let mut breakdown = ConditionalBreakdown {
        labels: (fits_a.label, fits_b.label),
        tables: [[[[0; 2]; 2]; 2]; 2],
        n_common: 0,
        degenerate_excluded: 0,
        alpha,
    };
    for (_, sa, sb) in common {
        if sa.theta1 == T::zero() || sb.theta1 == T::zero() {
            breakdown.degenerate_excluded += 1;
            continue;
        }
        let si = (sa.theta1 > T::zero()) as usize;
        let sj = (sb.theta1 > T::zero()) as usize;
        let pi = (sa.p_naive < alpha) as usize;
        let pj = (sb.p_naive < alpha) as usize;
        breakdown.tables[pi][pj][si][sj] += 1;
        breakdown.n_common += 1;
    }
    Ok(breakdown)
}

/// One station's coefficient movement between two datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendDelta<T> {
    /// Station id.
    pub station_id: String,
    /// θ₁ in dataset a.
    pub theta1_a: T,
    /// θ₁ in dataset b.
    pub theta1_b: T,
    /// `theta1_b − theta1_a`.
    pub delta: T,
}

/// Station-by-station differences of trend coefficients, sorted by the
/// first dataset's θ₁ ascending (ties broken by station id).
pub fn trend_delta<T: Real>(
    fits_a: &LabeledTrends<T>,
    fits_b: &LabeledTrends<T>,
) -> Result<Vec<TrendDelta<T>>, CompareError> {
    let common = common_stations(fits_a, fits_b);
    if common.is_empty() {
        return Err(CompareError::NoCommonStations);
    }
    let mut deltas: Vec<TrendDelta<T>> = common
        .into_iter()
        .map(|(id, sa, sb)| TrendDelta {
            station_id: id.clone(),
            theta1_a: sa.theta1,
            theta1_b: sb.theta1,
            delta: sb.theta1 - sa.theta1,
        })
        .collect();
    deltas.sort_by(|x, y| {
        x.theta1_a
            .partial_cmp(&y.theta1_a)
            .expect("finite trend coefficients")
            .then_with(|| x.station_id.cmp(&y.station_id))
    });
    Ok(deltas)
}

/// Naive-vs-adjusted significant trend counts for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceDrop<T> {
    /// Dataset the report describes.
    pub dataset_label: Provenance,
    /// Stations with naive p < α.
    pub naive_count: usize,
    /// Stations with adjusted p < α (never exceeds `naive_count`).
    pub adjusted_count: usize,
    /// `(naive − adjusted) / naive`; defined as 0 when `naive_count` is 0.
    pub drop_fraction: T,
    /// Significance threshold used.
    pub alpha: T,
    /// Stations examined.
    pub n_stations: usize,
}

/// Count how many significant trends survive the error adjustment.
///
/// Informative when the fits carried a positive extra variance; with
/// `extra_variance = 0` the two tracks coincide and the drop is 0.
pub fn significance_drop_report<T: Real>(
    fits: &LabeledTrends<T>,
    alpha: T,
) -> Result<SignificanceDrop<T>, CompareError> {
    if fits.trends.is_empty() {
        return Err(CompareError::EmptyInput);
    }
    let naive_count = fits
        .trends
        .values()
        .filter(|st| st.p_naive < alpha)
        .count();
    let adjusted_count = fits
        .trends
        .values()
        .filter(|st| st.p_adjusted < alpha)
        .count();
    let drop_fraction = if naive_count == 0 {
        T::zero()
    } else {
        T::from_count(naive_count - adjusted_count) / T::from_count(naive_count)
    };
    Ok(SignificanceDrop {
        dataset_label: fits.label,
        naive_count,
        adjusted_count,
        drop_fraction,
        alpha,
        n_stations: fits.trends.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn st(theta1: f64, p: f64) -> StationTrend<f64> {
        StationTrend {
            theta1,
            p_naive: p,
            p_adjusted: p,
        }
    }

    fn labeled(label: Provenance, entries: &[(&str, f64, f64)]) -> LabeledTrends<f64> {
        LabeledTrends {
            label,
            trends: entries
                .iter()
                .map(|(id, theta1, p)| (id.to_string(), st(*theta1, *p)))
                .collect(),
        }
    }

    #[test]
    fn census_hand_count() {
        let fits = labeled(
            Provenance::Raw,
            &[("s1", 0.4, 0.01), ("s2", -0.3, 0.2), ("s3", 0.1, 0.3)],
        );
        let census = trend_census(&fits, 0.05, false).unwrap();
        assert_eq!(census.positive, 2);
        assert_eq!(census.negative, 1);
        assert_eq!(census.positive_significant, 1);
        assert_eq!(census.negative_significant, 0);
        assert_eq!(census.degenerate, 0);
        assert_eq!(census.dataset_label, Provenance::Raw);
        assert!(!census.adjusted);
        // Invariants from the definition.
        assert!(census.positive_significant <= census.positive);
        assert_eq!(census.positive + census.negative + census.degenerate, 3);
    }

    #[test]
    fn census_counts_degenerates_separately() {
        let fits = labeled(
            Provenance::Calibrated,
            &[("s1", 0.0, 1.0), ("s2", 0.0, 1.0)],
        );
        let census = trend_census(&fits, 0.05, false).unwrap();
        assert_eq!(
            (census.positive, census.negative, census.degenerate),
            (0, 0, 2)
        );
        assert_eq!(census.positive_significant + census.negative_significant, 0);
    }

    #[test]
    fn census_respects_adjusted_flag() {
        let mut fits = LabeledTrends::new(Provenance::Calibrated);
        fits.trends.insert(
            "s1".into(),
            StationTrend {
                theta1: 0.2,
                p_naive: 0.01,
                p_adjusted: 0.3,
            },
        );
        let naive = trend_census(&fits, 0.05, false).unwrap();
        let adjusted = trend_census(&fits, 0.05, true).unwrap();
        assert_eq!(naive.positive_significant, 1);
        assert_eq!(adjusted.positive_significant, 0);
        assert_eq!(adjusted.positive, 1, "sign counting is unaffected");
    }

    #[test]
    fn census_rejects_empty() {
        let fits = LabeledTrends::<f64>::new(Provenance::Raw);
        assert_eq!(
            trend_census(&fits, 0.05, false).unwrap_err(),
            CompareError::EmptyInput
        );
    }

    #[test]
    fn agreement_identity_has_no_off_diagonal_mass() {
        let fits = labeled(
            Provenance::Raw,
            &[
                ("s1", 0.4, 0.01),
                ("s2", -0.3, 0.2),
                ("s3", 0.1, 0.3),
                ("s4", -0.2, 0.02),
            ],
        );
        let t = pairwise_agreement(&fits, &fits, 0.05).unwrap();
        assert_eq!(t.sign_counts[0][1], 0);
        assert_eq!(t.sign_counts[1][0], 0);
        assert_eq!(t.significance_counts[0][1], 0);
        assert_eq!(t.significance_counts[1][0], 0);
        assert_eq!(t.n_common, 4);
        assert_eq!(t.sign_counts[0][0] + t.sign_counts[1][1], 4);
    }

    #[test]
    fn agreement_hand_built_flips() {
        // s2 flips sign (stays not significant), s3 flips significance
        // (stays positive); s1, s4 agree everywhere.
        let a = labeled(
            Provenance::Raw,
            &[
                ("s1", 0.5, 0.01),
                ("s2", -0.1, 0.3),
                ("s3", 0.2, 0.2),
                ("s4", -0.4, 0.02),
            ],
        );
        let b = labeled(
            Provenance::Calibrated,
            &[
                ("s1", 0.6, 0.01),
                ("s2", 0.1, 0.3),
                ("s3", 0.2, 0.01),
                ("s4", -0.5, 0.02),
            ],
        );
        let t = pairwise_agreement(&a, &b, 0.05).unwrap();
        assert_eq!(t.labels, (Provenance::Raw, Provenance::Calibrated));
        // sign table rows are a, columns are b; 0 = negative, 1 = positive.
        assert_eq!(t.sign_counts[0][1], 1, "(−,+) flip");
        assert_eq!(t.sign_counts[1][0], 0);
        assert_eq!(t.sign_counts[0][0], 1);
        assert_eq!(t.sign_counts[1][1], 2);
        // significance table: 0 = not significant (P), 1 = significant (p).
        assert_eq!(t.significance_counts[0][1], 1, "(P,p) flip");
        assert_eq!(t.significance_counts[1][0], 0);
        assert_eq!(t.significance_counts[0][0], 1);
        assert_eq!(t.significance_counts[1][1], 2);
    }

    #[test]
    fn agreement_requires_common_stations_and_excludes_degenerates() {
        let a = labeled(Provenance::Raw, &[("s1", 0.5, 0.01)]);
        let b = labeled(Provenance::Calibrated, &[("s2", 0.5, 0.01)]);
        assert_eq!(
            pairwise_agreement(&a, &b, 0.05).unwrap_err(),
            CompareError::NoCommonStations
        );

        let a = labeled(Provenance::Raw, &[("s1", 0.5, 0.01), ("s2", 0.0, 1.0)]);
        let b = labeled(
            Provenance::Calibrated,
            &[("s1", 0.5, 0.01), ("s2", 0.3, 0.2)],
        );
        let t = pairwise_agreement(&a, &b, 0.05).unwrap();
        assert_eq!(t.n_common, 1);
        assert_eq!(t.degenerate_excluded, 1);
        let sign_total: usize = t.sign_counts.iter().flatten().sum();
        let sig_total: usize = t.significance_counts.iter().flatten().sum();
        assert_eq!(sign_total, 1);
        assert_eq!(sig_total, 1);
    }

    #[test]
    fn breakdown_identity_all_not_significant() {
        let fits = labeled(
            Provenance::Raw,
            &[("s1", 0.4, 0.5), ("s2", -0.3, 0.2), ("s3", 0.1, 0.3)],
        );
        let bd = conditional_breakdown(&fits, &fits, 0.05).unwrap();
        // Only the PP table is populated, and only on its diagonal.
        let pp = bd.tables[0][0];
        assert_eq!(pp[0][0] + pp[1][1], 3);
        assert_eq!(pp[0][1] + pp[1][0], 0);
        let rest: usize = bd.tables[0][1]
            .iter()
            .chain(bd.tables[1][0].iter())
            .chain(bd.tables[1][1].iter())
            .flatten()
            .sum();
        assert_eq!(rest, 0);
    }

    #[test]
    fn breakdown_places_mixed_station_in_expected_cell() {
        // a significant positive, b not-significant negative → pP table,
        // (+,−) cell.
        let a = labeled(Provenance::Raw, &[("s1", 0.5, 0.01)]);
        let b = labeled(Provenance::Calibrated, &[("s1", -0.2, 0.4)]);
        let bd = conditional_breakdown(&a, &b, 0.05).unwrap();
        assert_eq!(bd.tables[1][0][1][0], 1);
        let grand: usize = bd.tables.iter().flatten().flatten().flatten().sum();
        assert_eq!(grand, 1);
    }

    #[test]
    fn deltas_identity_and_shift() {
        let a = labeled(
            Provenance::Raw,
            &[("s1", 0.5, 0.01), ("s2", -0.1, 0.3), ("s3", 0.2, 0.2)],
        );
        let same = trend_delta(&a, &a).unwrap();
        assert!(same.iter().all(|d| d.delta == 0.0));

        let shifted = LabeledTrends {
            label: Provenance::Calibrated,
            trends: a
                .trends
                .iter()
                .map(|(id, s)| {
                    (
                        id.clone(),
                        StationTrend {
                            theta1: s.theta1 + 0.01,
                            ..*s
                        },
                    )
                })
                .collect(),
        };
        let deltas = trend_delta(&a, &shifted).unwrap();
        for d in &deltas {
            approx::assert_relative_eq!(d.delta, 0.01, max_relative = 1e-12);
        }
        // Sorted by theta1_a ascending: s2 (−0.1), s3 (0.2), s1 (0.5).
        let order: Vec<&str> = deltas.iter().map(|d| d.station_id.as_str()).collect();
        assert_eq!(order, vec!["s2", "s3", "s1"]);
    }

    #[test]
    fn delta_ties_break_by_station_id() {
        let a = labeled(Provenance::Raw, &[("zz", 0.1, 0.5), ("aa", 0.1, 0.5)]);
        let b = labeled(Provenance::Calibrated, &[("zz", 0.2, 0.5), ("aa", 0.0, 0.5)]);
        let deltas = trend_delta(&a, &b).unwrap();
        let order: Vec<&str> = deltas.iter().map(|d| d.station_id.as_str()).collect();
        assert_eq!(order, vec!["aa", "zz"]);
    }

    #[test]
    fn drop_report_counts_and_edge_cases() {
        let mut fits = LabeledTrends::new(Provenance::Calibrated);
        for (id, pn, pa) in [
            ("s1", 0.01, 0.04),
            ("s2", 0.02, 0.2),
            ("s3", 0.3, 0.5),
            ("s4", 0.04, 0.3),
        ] {
            fits.trends.insert(
                id.into(),
                StationTrend {
                    theta1: 0.1,
                    p_naive: pn,
                    p_adjusted: pa,
                },
            );
        }
        let rep = significance_drop_report(&fits, 0.05).unwrap();
        assert_eq!(rep.naive_count, 3);
        assert_eq!(rep.adjusted_count, 1);
        approx::assert_relative_eq!(rep.drop_fraction, 2.0 / 3.0, max_relative = 1e-12);
        assert_eq!(rep.n_stations, 4);

        // extra_variance = 0 ⇒ both tracks equal ⇒ zero drop.
        let same = labeled(Provenance::Raw, &[("s1", 0.01, 0.01), ("s2", 0.3, 0.3)]);
        let rep = significance_drop_report(&same, 0.05).unwrap();
        assert_eq!(rep.naive_count, rep.adjusted_count);
        assert_eq!(rep.drop_fraction, 0.0);

        // Nothing significant ⇒ drop defined as 0.
        let none = labeled(Provenance::Raw, &[("s1", 0.1, 0.9)]);
        assert_eq!(significance_drop_report(&none, 0.05).unwrap().drop_fraction, 0.0);

        let empty = LabeledTrends::<f64>::new(Provenance::Raw);
        assert_eq!(
            significance_drop_report(&empty, 0.05).unwrap_err(),
            CompareError::EmptyInput
        );
    }

    proptest! {
        /// Breakdown cell totals reconcile with the agreement table
        /// entry-by-entry, and both account for every common station.
        #[test]
        fn breakdown_reconciles_with_agreement(
            entries in proptest::collection::vec(
                (-1.0f64..1.0, 0.0f64..1.0, -1.0f64..1.0, 0.0f64..1.0),
                1..60,
            ),
            alpha in 0.01f64..0.2,
        ) {
            let mut a = LabeledTrends::new(Provenance::Raw);
            let mut b = LabeledTrends::new(Provenance::Calibrated);
            for (i, (ta, pa, tb, pb)) in entries.iter().enumerate() {
                let id = format!("s{i:03}");
                a.trends.insert(id.clone(), st(*ta, *pa));
                b.trends.insert(id, st(*tb, *pb));
            }
            let agreement = pairwise_agreement(&a, &b, alpha).unwrap();
            let breakdown = conditional_breakdown(&a, &b, alpha).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let cell: usize = breakdown.tables[i][j].iter().flatten().sum();
                    prop_assert_eq!(cell, agreement.significance_counts[i][j]);
                }
            }
            let grand: usize = breakdown.tables.iter().flatten().flatten().flatten().sum();
            prop_assert_eq!(grand, agreement.n_common);
            prop_assert_eq!(grand + agreement.degenerate_excluded, entries.len());

            // Deltas equal a direct subtraction oracle.
            let deltas = trend_delta(&a, &b).unwrap();
            for d in &deltas {
                let oracle = b.trends[&d.station_id].theta1 - a.trends[&d.station_id].theta1;
                prop_assert_eq!(d.delta, oracle);
            }
            prop_assert!(deltas.windows(2).all(|w| w[0].theta1_a <= w[1].theta1_a));
        }
    }
}
