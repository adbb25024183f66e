//! Synthetic two-tier monitoring network with recorded ground truth — the
//! verification oracle for the whole pipeline.
//!
//! The generator builds a small set of reference stations (each carrying a
//! sampler triplet alongside its analyzer) and a large area network of
//! sampler-only stations. Every station's latent concentration follows
//! `baseline + trend·t + seasonal·sin(2πt/12) + noise`, and sampler readings
//! are constructed so that the monthly calibration model is the *generating*
//! truth: the triplet base value `x` solves `reference = (a(t) + b(t)·x)·x`,
//! then each of the three readings gets independent sampler noise. True
//! trends, coefficient cycles, gap locations, and any injected spike are
//! returned as ground truth.
//!
//! Randomness comes from one ChaCha12 generator seeded from `seed`, split
//! into one independent stream per station (reference stations take streams
//! `0‥n_ref`, area stations the following ones), so generation is
//! order-independent and parallelizable by station. Within a station's
//! stream the draw order per month is fixed: observation noise, gap
//! uniform (area only), then the three sampler noises. This module is
//! deliberately `f64`-only: sampled values are part of its contract.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{CalibrationError, MonthObservations, StationMonthObs};
use crate::real::Real;
use crate::series::{Granularity, Provenance, SeriesError, StationSeries, YearMonth};

/// Name of the pseudo-random algorithm pinned into ground truth files.
pub const RNG_ALGORITHM: &str = "ChaCha12";
/// Version of the generator implementation pinned into ground truth files.
pub const RNG_VERSION: &str = "rand_chacha 0.9";

/// Errors from the synthetic generator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    /// The specification violates an invariant.
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(&'static str),
    /// A station or month index points outside the generated network.
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        /// What was being indexed.
        what: &'static str,
        /// The offending index.
        index: usize,
        /// The valid length.
        len: usize,
    },
    /// Gap filling needs at least one observed value.
    #[error("series has no observed values to impute from")]
    AllMissing,
    /// Gap filling is defined on monthly series.
    #[error("gap filling requires a monthly series")]
    NotMonthly,
    /// Underlying series construction failure (propagated).
    #[error(transparent)]
    Series(#[from] SeriesError),
    /// Underlying observation construction failure (propagated).
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

/// True per-station trend law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrendSpec {
    /// Every station gets exactly this slope (µg/m³ per month).
    Constant {
        /// The shared slope.
        slope: f64,
    },
    /// Each station draws its slope uniformly from `[min, max]`
    /// (the first draw on the station's stream).
    Uniform {
        /// Lower bound.
        min: f64,
        /// Upper bound (≥ `min`).
        max: f64,
    },
}

/// A slowly varying monthly coefficient:
/// `value(t) = mean + amplitude·sin(2πt/12)` on the 1-based month index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoeffCycle {
    /// Cycle mean.
    pub mean: f64,
    /// Cycle amplitude.
    pub amplitude: f64,
}

impl CoeffCycle {
    /// Coefficient value at 1-based month index `t`.
    pub fn value(&self, t: usize) -> f64 {
        self.mean + self.amplitude * (std::f64::consts::TAU * t as f64 / 12.0).sin()
    }
}

/// A single-month spike to plant in one area station's series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeSpec {
    /// Area-station index (0-based, generation order).
    pub station: usize,
    /// Month index (0-based slot on the series axis).
    pub month: usize,
    /// Replacement value (µg/m³).
    pub magnitude: f64,
}

/// Full parameterization of a synthetic network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Reference stations carrying analyzer + sampler triplet.
    pub n_reference_stations: usize,
    /// Sampler-only area stations.
    pub n_area_stations: usize,
    /// Months generated.
    pub n_months: usize,
    /// Calendar month of the first slot.
    pub start: YearMonth,
    /// Concentration floor of the latent law (µg/m³).
    pub baseline: f64,
    /// Per-station true trend law.
    pub trend: TrendSpec,
    /// Amplitude of the seasonal sinusoid (µg/m³).
    pub seasonal_amplitude: f64,
    /// SD of the latent observation noise (µg/m³).
    pub obs_noise_sd: f64,
    /// SD of each sampler reading's own noise (µg/m³).
    pub sampler_noise_sd: f64,
    /// Monthly calibration intercept cycle a(t).
    pub coeff_a: CoeffCycle,
    /// Monthly calibration slope cycle b(t).
    pub coeff_b: CoeffCycle,
    /// Probability that an area station-month is missing.
    pub missing_rate: f64,
    /// Optional planted spike.
    pub spike: Option<SpikeSpec>,
    /// Generator seed.
    pub seed: u64,
}

impl Default for SynthSpec {
    /// Paper-scale network: 6 reference stations, 294 area stations,
    /// 156 months from 2005-01.
    fn default() -> Self {
        SynthSpec {
            n_reference_stations: 6,
            n_area_stations: 294,
            n_months: 156,
            start: YearMonth::new(2005, 1),
            baseline: 8.0,
            trend: TrendSpec::Uniform {
                min: -0.02,
                max: 0.02,
            },
            seasonal_amplitude: 2.0,
            obs_noise_sd: 1.0,
            sampler_noise_sd: 0.5,
            coeff_a: CoeffCycle {
                mean: 0.9,
                amplitude: 0.05,
            },
            coeff_b: CoeffCycle {
                mean: 0.004,
                amplitude: 0.001,
            },
            missing_rate: 0.05,
            spike: None,
            seed: 42,
        }
    }
}

impl SynthSpec {
    /// Check the structural invariants.
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_reference_stations < 1 || self.n_area_stations < 1 || self.n_months < 1 {
            return Err(SynthError::InvalidSpec("all counts must be ≥ 1"));
        }
        if !(self.obs_noise_sd >= 0.0) || !(self.sampler_noise_sd >= 0.0) {
            return Err(SynthError::InvalidSpec("noise SDs must be ≥ 0"));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(SynthError::InvalidSpec("missing rate must lie in [0, 1)"));
        }
        if !self.baseline.is_finite() || !self.seasonal_amplitude.is_finite() {
            return Err(SynthError::InvalidSpec(
                "baseline and seasonal amplitude must be finite",
            ));
        }
        if let TrendSpec::Uniform { min, max } = self.trend {
            if !(min <= max) {
                return Err(SynthError::InvalidSpec("trend bounds must satisfy min ≤ max"));
            }
        }
        Ok(())
    }
}

/// Everything the generator knows that an estimator must recover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGroundTruth {
    /// Pseudo-random algorithm name (portability pin).
    pub rng_algorithm: String,
    /// Generator implementation version (portability pin).
    pub rng_version: String,
    /// True slope per reference station (generation order).
    pub reference_trends: Vec<f64>,
    /// True slope per area station (generation order).
    pub area_trends: Vec<f64>,
    /// a(t) per month, 1-based index order.
    pub coeff_a: Vec<f64>,
    /// b(t) per month, 1-based index order.
    pub coeff_b: Vec<f64>,
    /// `gap_mask[station][month]` = true where the area value was dropped.
    pub gap_mask: Vec<Vec<bool>>,
    /// The planted spike, if any.
    pub spike: Option<SpikeSpec>,
}

/// A generated network: the datasets an analysis would ingest, plus truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthNetwork {
    /// Reference analyzer series (complete, never gapped).
    pub reference: Vec<StationSeries<f64>>,
    /// Monthly co-located observations for calibration fitting.
    pub observations: Vec<MonthObservations<f64>>,
    /// Raw area-network series (triplet means, with gaps).
    pub raw_area: Vec<StationSeries<f64>>,
    /// The generator's ground truth.
    pub ground_truth: SynthGroundTruth,
}

/// Station id of reference station `i` (0-based): `R01`, `R02`, …
pub fn reference_station_id(i: usize) -> String {
    format!("R{:02}", i + 1)
}

/// Station id of area station `j` (0-based): `A001`, `A002`, …
pub fn area_station_id(j: usize) -> String {
    format!("A{:03}", j + 1)
}

/// Solve `reference = (a + b·x)·x` for the nonnegative sampler base value.
///
/// Uses the cancellation-stable root `x = 2R / (a + sqrt(a² + 4bR))`, which
/// degrades gracefully to `R/a` as `b → 0`.
fn sampler_base(reference: f64, a: f64, b: f64) -> Result<f64, SynthError> {
    let disc = a * a + 4.0 * b * reference;
    if !(a > 0.0) || disc < 0.0 {
        return Err(SynthError::InvalidSpec(
            "coefficient cycle cannot invert this reference value (need a > 0, a² + 4bR ≥ 0)",
        ));
    }
    Ok(2.0 * reference / (a + disc.sqrt()))
}

struct StationDraws {
    rng: ChaCha12Rng,
    obs_noise: Normal<f64>,
    sampler_noise: Normal<f64>,
}

impl StationDraws {
    fn new(spec: &SynthSpec, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream);
        StationDraws {
            rng,
            obs_noise: Normal::new(0.0, spec.obs_noise_sd).expect("validated SD"),
            sampler_noise: Normal::new(0.0, spec.sampler_noise_sd).expect("validated SD"),
        }
    }

    fn trend(&mut self, spec: &TrendSpec) -> f64 {
        match *spec {
            TrendSpec::Constant { slope } => slope,
            TrendSpec::Uniform { min, max } => min + (max - min) * self.rng.random::<f64>(),
        }
    }

    fn latent(&mut self, spec: &SynthSpec, trend: f64, t: usize) -> f64 {
        let seasonal =
            spec.seasonal_amplitude * (std::f64::consts::TAU * t as f64 / 12.0).sin();
        let noise = self.obs_noise.sample(&mut self.rng);
        (spec.baseline + trend * t as f64 + seasonal + noise).max(0.0)
    }

    fn triplet(&mut self, base: f64) -> [f64; 3] {
        // Fixed draw order; clamped at zero like every concentration.
        let mut out = [0.0; 3];
        for slot in &mut out {
            *slot = (base + self.sampler_noise.sample(&mut self.rng)).max(0.0);
        }
        out
    }
}

/// Generate a full synthetic network.
///
/// Deterministic in the spec (seed included): equal specs yield bit-equal
/// outputs regardless of host or evaluation order.
pub fn generate_network(spec: &SynthSpec) -> Result<SynthNetwork, SynthError> {
    spec.validate()?;

    let coeff_a: Vec<f64> = (1..=spec.n_months).map(|t| spec.coeff_a.value(t)).collect();
    let coeff_b: Vec<f64> = (1..=spec.n_months).map(|t| spec.coeff_b.value(t)).collect();

    // Reference stations: analyzer series plus co-located triplets.
    let mut reference = Vec::with_capacity(spec.n_reference_stations);
    let mut reference_trends = Vec::with_capacity(spec.n_reference_stations);
    let mut obs_entries: Vec<Vec<StationMonthObs<f64>>> =
        vec![Vec::with_capacity(spec.n_reference_stations); spec.n_months];
    for i in 0..spec.n_reference_stations {
        let id = reference_station_id(i);
        let mut draws = StationDraws::new(spec, i as u64);
        let trend = draws.trend(&spec.trend);
        reference_trends.push(trend);
        let mut values = Vec::with_capacity(spec.n_months);
        for t in 1..=spec.n_months {
            let r = draws.latent(spec, trend, t);
            let base = sampler_base(r, coeff_a[t - 1], coeff_b[t - 1])?;
            let readings = draws.triplet(base);
            values.push(Some(r));
            obs_entries[t - 1].push(StationMonthObs {
                station_id: id.clone(),
                samplers: [Some(readings[0]), Some(readings[1]), Some(readings[2])],
                reference: Some(r),
            });
        }
        reference.push(StationSeries::new(
            id,
            Granularity::Monthly,
            spec.start,
            values,
            Provenance::Raw,
        )?);
    }
    let observations: Vec<MonthObservations<f64>> = obs_entries
        .into_iter()
        .enumerate()
        .map(|(k, stations)| MonthObservations::new(spec.start.offset(k as i64), stations))
        .collect::<Result<_, _>>()?;

    // Area stations: sampler-only, gappy.
    let mut raw_area = Vec::with_capacity(spec.n_area_stations);
    let mut area_trends = Vec::with_capacity(spec.n_area_stations);
    let mut gap_mask = Vec::with_capacity(spec.n_area_stations);
    for j in 0..spec.n_area_stations {
        let mut draws = StationDraws::new(spec, (spec.n_reference_stations + j) as u64);
        let trend = draws.trend(&spec.trend);
        area_trends.push(trend);
        let mut values = Vec::with_capacity(spec.n_months);
        let mut gaps = Vec::with_capacity(spec.n_months);
        for t in 1..=spec.n_months {
            let r = draws.latent(spec, trend, t);
            let gap = draws.rng.random::<f64>() < spec.missing_rate;
            let base = sampler_base(r, coeff_a[t - 1], coeff_b[t - 1])?;
            let readings = draws.triplet(base);
            gaps.push(gap);
            values.push(if gap {
                None
            } else {
                Some((readings[0] + readings[1] + readings[2]) / 3.0)
            });
        }
        gap_mask.push(gaps);
        raw_area.push(StationSeries::new(
            area_station_id(j),
            Granularity::Monthly,
            spec.start,
            values,
            Provenance::Raw,
        )?);
    }

    if let Some(spike) = spec.spike {
        if spike.station >= raw_area.len() {
            return Err(SynthError::IndexOutOfRange {
                what: "spike station",
                index: spike.station,
                len: raw_area.len(),
            });
        }
        raw_area[spike.station] =
            inject_spike(&raw_area[spike.station], spike.month, spike.magnitude)?;
    }

    Ok(SynthNetwork {
        reference,
        observations,
        raw_area,
        ground_truth: SynthGroundTruth {
            rng_algorithm: RNG_ALGORITHM.to_string(),
            rng_version: RNG_VERSION.to_string(),
            reference_trends,
            area_trends,
            coeff_a,
            coeff_b,
            gap_mask,
            spike: spec.spike,
        },
    })
}

/// Replace the value at a 0-based month slot with `magnitude`.
///
/// Everything else — including missingness elsewhere — is untouched; a
/// missing slot becomes present with the spike value.
pub fn inject_spike<T: Real>(
    series: &StationSeries<T>,
    month: usize,
    magnitude: T,
) -> Result<StationSeries<T>, SynthError> {
    if month >= series.len() {
        return Err(SynthError::IndexOutOfRange {
            what: "month",
            index: month,
            len: series.len(),
        });
    }
    let mut out = series.clone();
    out.values[month] = Some(magnitude);
    Ok(out)
}

/// Trivial seasonal-mean gap filler (a stand-in for externally supplied
/// imputed datasets, here only so three-dataset comparisons can run).
///
/// Each missing month is filled with the mean of the same calendar month's
/// observed values across years; calendar months never observed fall back
/// to the overall series mean. Provenance becomes `calibrated_imputed`.
pub fn impute_gaps_stub<T: Real>(
    series: &StationSeries<T>,
) -> Result<StationSeries<T>, SynthError> {
    if series.granularity != Granularity::Monthly {
        return Err(SynthError::NotMonthly);
    }
    let mut month_sums = [T::zero(); 12];
    let mut month_counts = [0usize; 12];
    let mut total = T::zero();
    let mut n = 0usize;
    for (i, v) in series.iter_present() {
        let m = series.period_at(i).month() as usize - 1;
        month_sums[m] += v;
        month_counts[m] += 1;
        total += v;
        n += 1;
    }
    if n == 0 {
        return Err(SynthError::AllMissing);
    }
    let overall = total / T::from_count(n);
    let values: Vec<Option<T>> = series
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            Some(v.unwrap_or_else(|| {
                let m = series.period_at(i).month() as usize - 1;
                if month_counts[m] > 0 {
                    month_sums[m] / T::from_count(month_counts[m])
                } else {
                    overall
                }
            }))
        })
        .collect();
    Ok(StationSeries::new(
        series.station_id.clone(),
        series.granularity,
        series.start,
        values,
        Provenance::CalibratedImputed,
    )?)
}
