//! Simulation of observed datasets and of predictive replicates.
//!
//! Each individual draws its parameters, its event time and its residual
//! errors from separate seeded streams, so a subject's simulated data do not
//! depend on how many other subjects, replicates or threads are involved.

mod io;
mod rng;

pub use io::{read_dataset, write_dataset, write_replicates};
pub use rng::{mix, Purpose, SeedSpec};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::psa_value;
use crate::model::{transform_parameter, CumulativeHazard, IndividualParameters, JointModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub n_subjects: usize,
    pub planned_times: Vec<f64>,
    pub study_end: f64,
}

impl StudyDesign {
    /// `n_times` equally spaced measurement days on [0, study_end].
    pub fn equally_spaced(n_subjects: usize, n_times: usize, study_end: f64) -> Self {
        let planned_times = if n_times == 1 {
            vec![0.0]
        } else {
            (0..n_times)
                .map(|i| study_end * i as f64 / (n_times - 1) as f64)
                .collect()
        };
        Self {
            n_subjects,
            planned_times,
            study_end,
        }
    }

    /// Nine visits over one year.
    pub fn standard(n_subjects: usize) -> Self {
        Self::equally_spaced(n_subjects, 9, 365.0)
    }

    /// Recovers the planned grid of an existing dataset as the union of its
    /// observation times.
    pub fn from_dataset(subjects: &[SubjectData], study_end: f64) -> Result<Self> {
        let mut times: Vec<f64> = subjects
            .iter()
            .flat_map(|s| s.observations.iter().map(|o| o.0))
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let design = Self {
            n_subjects: subjects.len(),
            planned_times: times,
            study_end,
        };
        design.validate()?;
        Ok(design)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::InvalidInput(
                "a design needs at least one subject".into(),
            ));
        }
        if self.planned_times.is_empty() {
            return Err(Error::InvalidInput(
                "a design needs at least one planned time".into(),
            ));
        }
        if self.planned_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(
                "planned times must be strictly increasing".into(),
            ));
        }
        let (first, last) = (self.planned_times[0], *self.planned_times.last().unwrap());
        if !(first >= 0.0 && last <= self.study_end) {
            return Err(Error::InvalidInput(format!(
                "planned times must lie within [0, {}]",
                self.study_end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventIndicator {
    Observed,
    Censored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectData {
    pub id: String,
    /// (time in days, PSA in ng/mL)
    pub observations: Vec<(f64, f64)>,
    pub event_time: f64,
    pub event_indicator: EventIndicator,
}

impl SubjectData {
    pub fn is_censored(&self) -> bool {
        self.event_indicator == EventIndicator::Censored
    }
}

/// The simulated event time of one individual, with and without administrative censoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventDraw {
    pub uncensored: f64,
    pub time: f64,
    pub indicator: EventIndicator,
}

/// Censors `uncensored` at `study_end`.
pub fn censor(uncensored: f64, study_end: f64) -> (f64, EventIndicator) {
    if uncensored > study_end {
        (study_end, EventIndicator::Censored)
    } else {
        (uncensored, EventIndicator::Observed)
    }
}

/// Draws η ~ N(0, diag(ω²)) and maps it through each parameter's transform.
/// Four normals are always consumed, so specs that differ only in ω share draws.
pub fn draw_individual_parameters<R: Rng>(
    spec: &JointModelSpec,
    rng: &mut R,
) -> IndividualParameters {
    let p = &spec.psa_parameters;
    let mut draw = |s: &crate::model::ParameterSpec| {
        let z: f64 = rng.sample(StandardNormal);
        transform_parameter(s.fixed_effect, s.omega * z, s.transform)
            .expect("parameter specs are validated before simulation")
    };
    IndividualParameters {
        r: draw(&p.r),
        psa0: draw(&p.psa0),
        epsilon: draw(&p.epsilon),
        t_esc: draw(&p.t_esc),
    }
}

/// Inverse-transform sampling: solves H(T) = −ln(u).
pub fn simulate_event_time<R: Rng>(
    psi: &IndividualParameters,
    spec: &JointModelSpec,
    rng: &mut R,
) -> Result<EventDraw> {
    // 1 − U[0,1) lies in (0, 1], so the target is finite.
    let u = 1.0 - rng.random::<f64>();
    let uncensored = CumulativeHazard::new(*psi, spec).invert(-u.ln())?;
    let (time, indicator) = censor(uncensored, spec.study_end);
    Ok(EventDraw {
        uncensored,
        time,
        indicator,
    })
}

/// Model prediction plus residual error at every planned time.
pub fn simulate_longitudinal<R: Rng>(
    psi: &IndividualParameters,
    spec: &JointModelSpec,
    times: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    times
        .iter()
        .map(|&t| {
            let f = psa_value(t, psi, &spec.constants);
            let e: f64 = rng.sample(StandardNormal);
            f + spec.error_model.sd(f) * e
        })
        .collect()
}

/// One simulated individual on the full planned grid.
pub struct Individual {
    pub psi: IndividualParameters,
    pub event: EventDraw,
    pub values: Vec<f64>,
}

/// Simulates the individual at stream coordinates (subject, replicate).
pub fn simulate_individual(
    spec: &JointModelSpec,
    times: &[f64],
    seed: &SeedSpec,
    subject: usize,
    replicate: usize,
) -> Result<Individual> {
    let psi = draw_individual_parameters(
        spec,
        &mut seed.stream(subject, replicate, Purpose::Parameters),
    );
    let event = simulate_event_time(
        &psi,
        spec,
        &mut seed.stream(subject, replicate, Purpose::Event),
    )?;
    let values = simulate_longitudinal(
        &psi,
        spec,
        times,
        &mut seed.stream(subject, replicate, Purpose::Longitudinal),
    );
    Ok(Individual { psi, event, values })
}

/// Simulates an observed dataset; subjects are labelled 1..=N. Observations
/// after the event or censoring time are dropped.
pub fn simulate_dataset(
    spec: &JointModelSpec,
    design: &StudyDesign,
    seed: &SeedSpec,
) -> Result<Vec<SubjectData>> {
    design.validate()?;
    (0..design.n_subjects)
        .into_par_iter()
        .map(|i| {
            let ind = simulate_individual(spec, &design.planned_times, seed, i, 0)?;
            let (time, indicator) = censor(ind.event.uncensored, design.study_end);
            let observations = design
                .planned_times
                .iter()
                .zip(&ind.values)
                .take_while(|(&t, _)| t <= time)
                .map(|(&t, &y)| (t, y))
                .collect();
            Ok(SubjectData {
                id: (i + 1).to_string(),
                observations,
                event_time: time,
                event_indicator: indicator,
            })
        })
        .collect()
}

/// K predictive replicates of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectReplicates {
    /// Row-major K × n_planned matrix of simulated values on the full grid.
    pub values: Vec<f64>,
    /// Uncensored simulated event times.
    pub event_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSet {
    pub k: usize,
    pub planned_times: Vec<f64>,
    pub study_end: f64,
    pub subjects: Vec<SubjectReplicates>,
}

impl ReplicateSet {
    /// Simulated value of replicate `r` of `subject` at planned index `j`.
    pub fn value(&self, subject: usize, r: usize, j: usize) -> f64 {
        self.subjects[subject].values[r * self.planned_times.len() + j]
    }

    /// Censored event record of replicate `r` of `subject`.
    pub fn censored_record(&self, subject: usize, r: usize) -> (f64, EventIndicator) {
        censor(self.subjects[subject].event_times[r], self.study_end)
    }

    /// Planned-grid index of each observation time of `data`.
    pub fn grid_indices(&self, data: &SubjectData) -> Result<Vec<usize>> {
        data.observations
            .iter()
            .map(|&(t, _)| {
                self.planned_times
                    .iter()
                    .position(|&p| p == t)
                    .ok_or_else(|| {
                        Error::Data(format!(
                            "subject {}: observation time {t} is not a planned time",
                            data.id
                        ))
                    })
            })
            .collect()
    }
}

/// Simulates K replicates of every observed subject under `tested`, on the
/// full planned grid. Replicate streams are indexed by subject position.
pub fn simulate_replicates(
    observed: &[SubjectData],
    tested: &JointModelSpec,
    design: &StudyDesign,
    k: usize,
    seed: &SeedSpec,
) -> Result<ReplicateSet> {
    if k == 0 {
        return Err(Error::InvalidInput(
            "at least one replicate is required".into(),
        ));
    }
    let times = &design.planned_times;
    let subjects = (0..observed.len())
        .into_par_iter()
        .map(|i| {
            let mut values = Vec::with_capacity(k * times.len());
            let mut event_times = Vec::with_capacity(k);
            for r in 0..k {
                let ind = simulate_individual(tested, times, seed, i, r)?;
                values.extend_from_slice(&ind.values);
                event_times.push(ind.event.uncensored);
            }
            Ok(SubjectReplicates {
                values,
                event_times,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicateSet {
        k,
        planned_times: times.clone(),
        study_end: design.study_end,
        subjects,
    })
}
