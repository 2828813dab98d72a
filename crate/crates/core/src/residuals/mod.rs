//! Prediction discrepancies for the event and the biomarker.
//!
//! * TTE: `pd` is the empirical predictive CDF at the event time; censored
//!   subjects draw their `pd` uniformly above the CDF at the censoring time.
//! * Longitudinal: `pd` ranks an observation among the replicates that are
//!   still event-free at its time (the survival-weighted ratio estimator).
//! * `pde` applies the same estimator after whitening observed and simulated
//!   vectors with the inverse Cholesky factor of the replicate covariance.

mod table;

pub use table::{read_residual_table, write_residual_table};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::normal_quantile;
use crate::simulator::{
    EventIndicator, Purpose, ReplicateSet, SeedSpec, SubjectData, SubjectReplicates,
};

/// Fraction of K below which an observation is flagged as poorly supported.
pub const LOW_SUPPORT_FRACTION: f64 = 0.05;
/// Ridge added to a covariance that fails to factorise, relative to its mean variance.
pub const RIDGE: f64 = 1e-8;

/// A probability pushed into [1/(2K), 1 − 1/(2K)] and its normal quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Normalised {
    pub p: f64,
    pub n: f64,
    pub clamped: bool,
}

pub fn clamp_and_normalise(p: f64, k: usize) -> Normalised {
    let lo = 0.5 / k as f64;
    let clamped_p = p.clamp(lo, 1.0 - lo);
    Normalised {
        p: clamped_p,
        n: normal_quantile(clamped_p),
        clamped: clamped_p != p,
    }
}

/// #{T_sim < t} / K.
pub fn empirical_cdf(event_times: &[f64], t: f64) -> f64 {
    event_times.iter().filter(|&&s| s < t).count() as f64 / event_times.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TteResidual {
    pub id: String,
    pub time: f64,
    pub indicator: EventIndicator,
    pub pd: f64,
    pub npd: f64,
    pub clamped: bool,
    pub imputed: bool,
    /// Clamped empirical CDF at the censoring time; the imputed pd never falls below it.
    pub imputation_lower_bound: Option<f64>,
}

/// pd of one event record against the uncensored replicate event times.
/// Censored records draw from `rng`.
pub fn compute_pd_tte<R: Rng>(
    id: &str,
    time: f64,
    indicator: EventIndicator,
    event_times: &[f64],
    rng: &mut R,
) -> Result<TteResidual> {
    let k = event_times.len();
    if k == 0 {
        return Err(Error::InvalidInput(
            "the TTE pd needs at least one replicate".into(),
        ));
    }
    let f = empirical_cdf(event_times, time);
    let (raw, lower) = match indicator {
        EventIndicator::Observed => (f, None),
        EventIndicator::Censored => {
            let u: f64 = rng.random();
            (f + (1.0 - f) * u, Some(clamp_and_normalise(f, k).p))
        }
    };
    let z = clamp_and_normalise(raw, k);
    Ok(TteResidual {
        id: id.to_string(),
        time,
        indicator,
        pd: z.p,
        npd: z.n,
        clamped: z.clamped,
        imputed: lower.is_some(),
        imputation_lower_bound: lower,
    })
}

/// Numerator and denominator of the survival-weighted ratio estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatioCount {
    /// Replicates that survive past t and fall strictly below y.
    pub below: usize,
    /// Replicates whose event time exceeds t.
    pub survivors: usize,
}

impl RatioCount {
    pub fn value(&self) -> Option<f64> {
        (self.survivors > 0).then(|| self.below as f64 / self.survivors as f64)
    }
}

/// Σ 1{sim < y}·1{T > t} and Σ 1{T > t} over paired simulated values and event times.
pub fn ratio_count(
    y: f64,
    t: f64,
    sims: impl IntoIterator<Item = f64>,
    event_times: &[f64],
) -> RatioCount {
    let mut count = RatioCount {
        below: 0,
        survivors: 0,
    };
    for (sim, &event) in sims.into_iter().zip(event_times) {
        if event > t {
            count.survivors += 1;
            if sim < y {
                count.below += 1;
            }
        }
    }
    count
}

/// Survival-weighted pd for every observation of one subject. `grid[j]` is
/// the planned-grid index of observation j.
pub fn compute_pd_longitudinal(
    observed: &SubjectData,
    grid: &[usize],
    replicates: &SubjectReplicates,
    n_planned: usize,
) -> Vec<RatioCount> {
    observed
        .observations
        .iter()
        .zip(grid)
        .map(|(&(t, y), &j)| {
            let column = replicates.values.iter().skip(j).step_by(n_planned).copied();
            ratio_count(y, t, column, &replicates.event_times)
        })
        .collect()
}

/// Replicate moments of one subject at its observed times.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// W = L⁻¹ for the Cholesky factor V = LLᵀ, so that W·V·Wᵀ = I.
    pub whitening: DMatrix<f64>,
    /// True when the covariance needed the ridge to factorise.
    pub regularised: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decorrelated {
    pub observed: DVector<f64>,
    /// K × n matrix of whitened replicate vectors.
    pub replicates: DMatrix<f64>,
    pub moments: MomentSummary,
}

/// Whitens the observed vector and every replicate with moments computed over
/// all K replicates, ignoring simulated event times. `sims` is K × n.
pub fn decorrelate(observed: &[f64], sims: &DMatrix<f64>, subject: &str) -> Result<Decorrelated> {
    let (k, n) = sims.shape();
    if n == 0 || n != observed.len() {
        return Err(Error::InvalidInput(format!(
            "subject {subject}: {} observations against {n} simulated columns",
            observed.len()
        )));
    }
    if k < 2 {
        return Err(Error::InvalidInput(
            "decorrelation needs at least two replicates".into(),
        ));
    }
    let mean = DVector::from_iterator(n, sims.column_iter().map(|c| c.sum() / k as f64));
    let mut centred = sims.clone();
    for (mut col, m) in centred.column_iter_mut().zip(mean.iter()) {
        col.add_scalar_mut(-m);
    }
    let covariance = (centred.transpose() * &centred) / (k as f64 - 1.0);
    let (factor, regularised) = match covariance.clone().cholesky() {
        Some(c) => (c, false),
        None => {
            let ridge = RIDGE * covariance.trace() / n as f64;
            let bumped = &covariance + DMatrix::identity(n, n) * ridge;
            match bumped.cholesky() {
                Some(c) => (c, true),
                None => {
                    return Err(Error::NotPositiveDefinite {
                        subject: subject.to_string(),
                    })
                }
            }
        }
    };
    let l = factor.l();
    let whitening = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::NotPositiveDefinite {
            subject: subject.to_string(),
        })?;
    let observed = &whitening * (DVector::from_column_slice(observed) - &mean);
    let replicates = centred * whitening.transpose();
    Ok(Decorrelated {
        observed,
        replicates,
        moments: MomentSummary {
            mean,
            covariance,
            whitening,
            regularised,
        },
    })
}

/// The ratio estimator applied to whitened values.
pub fn compute_pde(
    decorrelated: &Decorrelated,
    times: &[f64],
    event_times: &[f64],
) -> Vec<RatioCount> {
    times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let column = decorrelated.replicates.column(j);
            ratio_count(
                decorrelated.observed[j],
                t,
                column.iter().copied(),
                event_times,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Flags {
    pub clamped: bool,
    pub low_support: bool,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LongitudinalResidual {
    pub id: String,
    pub time: f64,
    pub value: f64,
    /// Absent when no replicate survives past `time`.
    pub pd: Option<f64>,
    pub npd: Option<f64>,
    pub pde: Option<f64>,
    pub npde: Option<f64>,
    pub survivor_count: usize,
    pub flags: Flags,
}

fn longitudinal_residual(
    id: &str,
    (t, y): (f64, f64),
    pd: RatioCount,
    pde: RatioCount,
    k: usize,
) -> LongitudinalResidual {
    let survivors = pd.survivors;
    let low_support = survivors < (LOW_SUPPORT_FRACTION * k as f64).ceil() as usize;
    let (pd, pde) = (
        pd.value().map(|p| clamp_and_normalise(p, k)),
        pde.value().map(|p| clamp_and_normalise(p, k)),
    );
    LongitudinalResidual {
        id: id.to_string(),
        time: t,
        value: y,
        pd: pd.map(|z| z.p),
        npd: pd.map(|z| z.n),
        pde: pde.map(|z| z.p),
        npde: pde.map(|z| z.n),
        survivor_count: survivors,
        flags: Flags {
            clamped: pd.is_some_and(|z| z.clamped) || pde.is_some_and(|z| z.clamped),
            low_support,
            excluded: survivors == 0,
        },
    }
}

/// All residuals of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualTable {
    pub k: usize,
    pub longitudinal: Vec<LongitudinalResidual>,
    pub tte: Vec<TteResidual>,
}

impl ResidualTable {
    /// npde of every observation with at least one surviving replicate.
    pub fn npde(&self) -> Vec<f64> {
        self.longitudinal.iter().filter_map(|r| r.npde).collect()
    }

    pub fn npd_longitudinal(&self) -> Vec<f64> {
        self.longitudinal.iter().filter_map(|r| r.npd).collect()
    }

    pub fn npd_tte(&self) -> Vec<f64> {
        self.tte.iter().map(|r| r.npd).collect()
    }

    pub fn pd_tte(&self) -> Vec<f64> {
        self.tte.iter().map(|r| r.pd).collect()
    }

    pub fn excluded(&self) -> usize {
        self.longitudinal
            .iter()
            .filter(|r| r.flags.excluded)
            .count()
    }
}

struct SubjectResiduals {
    longitudinal: Vec<LongitudinalResidual>,
    tte: TteResidual,
}

fn subject_residuals(
    index: usize,
    data: &SubjectData,
    replicates: &ReplicateSet,
    seed: &SeedSpec,
) -> Result<SubjectResiduals> {
    let k = replicates.k;
    let sims = &replicates.subjects[index];
    let n_planned = replicates.planned_times.len();
    let tte = compute_pd_tte(
        &data.id,
        data.event_time,
        data.event_indicator,
        &sims.event_times,
        &mut seed.stream(index, 0, Purpose::Imputation),
    )?;
    if data.observations.is_empty() {
        return Ok(SubjectResiduals {
            longitudinal: Vec::new(),
            tte,
        });
    }
    let grid = replicates.grid_indices(data)?;
    let pd = compute_pd_longitudinal(data, &grid, sims, n_planned);
    let matrix = DMatrix::from_fn(k, grid.len(), |r, j| sims.values[r * n_planned + grid[j]]);
    let observed: Vec<f64> = data.observations.iter().map(|o| o.1).collect();
    let times: Vec<f64> = data.observations.iter().map(|o| o.0).collect();
    let decorrelated = decorrelate(&observed, &matrix, &data.id)?;
    let pde = compute_pde(&decorrelated, &times, &sims.event_times);
    let longitudinal = data
        .observations
        .iter()
        .zip(pd.into_iter().zip(pde))
        .map(|(&obs, (pd, pde))| longitudinal_residual(&data.id, obs, pd, pde, k))
        .collect();
    Ok(SubjectResiduals { longitudinal, tte })
}

/// Residuals of every subject; `replicates.subjects[i]` must belong to `observed[i]`.
pub fn compute_residuals(
    observed: &[SubjectData],
    replicates: &ReplicateSet,
    seed: &SeedSpec,
) -> Result<ResidualTable> {
    if observed.len() != replicates.subjects.len() {
        return Err(Error::InvalidInput(format!(
            "{} subjects but replicates for {}",
            observed.len(),
            replicates.subjects.len()
        )));
    }
    let per_subject = observed
        .par_iter()
        .enumerate()
        .map(|(i, data)| subject_residuals(i, data, replicates, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut table = ResidualTable {
        k: replicates.k,
        longitudinal: Vec::new(),
        tte: Vec::new(),
    };
    for s in per_subject {
        table.longitudinal.extend(s.longitudinal);
        table.tte.push(s.tte);
    }
    Ok(table)
}
