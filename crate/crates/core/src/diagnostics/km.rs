use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulator::{EventIndicator, ReplicateSet, SubjectData};

/// Largest number of time points in a KM-VPC grid.
pub const MAX_GRID_POINTS: usize = 50;
/// Smallest number of replicates accepted by the KM-VPC.
const MIN_REPLICATES: usize = 100;

/// Product-limit survival estimate, one step per distinct event time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmCurve {
    pub times: Vec<f64>,
    /// Survival just after each step time.
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl KmCurve {
    /// Right-continuous survival estimate at `t`.
    pub fn survival_at(&self, t: f64) -> f64 {
        let steps = self.times.partition_point(|&s| s <= t);
        if steps == 0 {
            1.0
        } else {
            self.survival[steps - 1]
        }
    }
}

/// Kaplan-Meier estimator from `(time, event observed)` records. At tied
/// times events are counted before censorings.
pub fn km_estimator(records: &[(f64, bool)]) -> KmCurve {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut curve = KmCurve { times: Vec::new(), survival: Vec::new(), at_risk: Vec::new(), events: Vec::new() };
    let mut at_risk = sorted.len();
    let mut s = 1.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let mut j = i;
        let mut d = 0;
        while j < sorted.len() && sorted[j].0 == t {
            d += usize::from(sorted[j].1);
            j += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(at_risk);
            curve.events.push(d);
        }
        at_risk -= j - i;
        i = j;
    }
    curve
}

fn records_of(subjects: &[SubjectData]) -> Vec<(f64, bool)> {
    subjects.iter().map(|s| (s.event_time, s.event_indicator == EventIndicator::Observed)).collect()
}

/// Distinct observed event times, thinned evenly to at most `max_points`.
pub fn km_grid(observed: &[SubjectData], max_points: usize) -> Vec<f64> {
    let mut times: Vec<f64> = observed
        .iter()
        .filter(|s| s.event_indicator == EventIndicator::Observed)
        .map(|s| s.event_time)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.len() <= max_points {
        return times;
    }
    if max_points < 2 {
        return times.last().copied().into_iter().take(max_points).collect();
    }
    let last = times.len() - 1;
    (0..max_points).map(|i| times[(i * last + (max_points - 1) / 2) / (max_points - 1)]).collect()
}

/// Observed KM curve against the 5/50/95th percentiles of the replicate KM
/// curves, all evaluated on a common time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmVpc {
    pub grid: Vec<f64>,
    pub observed: Vec<f64>,
    pub p05: Vec<f64>,
    pub p50: Vec<f64>,
    pub p95: Vec<f64>,
}

impl KmVpc {
    /// Fraction of grid times at which the observed curve lies in the 90% band.
    pub fn coverage(&self) -> f64 {
        if self.grid.is_empty() {
            return 1.0;
        }
        let inside = (0..self.grid.len())
            .filter(|&i| self.p05[i] <= self.observed[i] && self.observed[i] <= self.p95[i])
            .count();
        inside as f64 / self.grid.len() as f64
    }
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// KM-VPC of `observed` against `replicates`; `grid` defaults to [`km_grid`].
pub fn km_vpc(observed: &[SubjectData], replicates: &ReplicateSet, grid: Option<&[f64]>) -> Result<KmVpc> {
    if replicates.k < MIN_REPLICATES {
        return Err(Error::InvalidInput(format!(
            "KM-VPC needs at least {MIN_REPLICATES} replicates, got {}",
            replicates.k
        )));
    }
    if observed.len() != replicates.subjects.len() {
        return Err(Error::InvalidInput("replicate set does not match the observed subjects".into()));
    }
    let grid = grid.map_or_else(|| km_grid(observed, MAX_GRID_POINTS), <[f64]>::to_vec);
    let curves: Vec<Vec<f64>> = (0..replicates.k)
        .into_par_iter()
        .map(|r| {
            let records: Vec<(f64, bool)> = (0..observed.len())
                .map(|i| {
                    let (t, ind) = replicates.censored_record(i, r);
                    (t, ind == EventIndicator::Observed)
                })
                .collect();
            let km = km_estimator(&records);
            grid.iter().map(|&t| km.survival_at(t)).collect()
        })
        .collect();
    let obs = km_estimator(&records_of(observed));
    let mut vpc = KmVpc {
        observed: grid.iter().map(|&t| obs.survival_at(t)).collect(),
        p05: Vec::with_capacity(grid.len()),
        p50: Vec::with_capacity(grid.len()),
        p95: Vec::with_capacity(grid.len()),
        grid,
    };
    let mut column = vec![0.0; replicates.k];
    for j in 0..vpc.grid.len() {
        for (c, curve) in column.iter_mut().zip(&curves) {
            *c = curve[j];
        }
        column.sort_by(f64::total_cmp);
        vpc.p05.push(quantile(&column, 0.05));
        vpc.p50.push(quantile(&column, 0.5));
        vpc.p95.push(quantile(&column, 0.95));
    }
    Ok(vpc)
}

/// Whether the 90% bands of two KM-VPCs on the same grid intersect at each time.
pub fn bands_overlap(a: &KmVpc, b: &KmVpc) -> Result<Vec<bool>> {
    if a.grid != b.grid {
        return Err(Error::InvalidInput("KM-VPC grids differ".into()));
    }
    Ok((0..a.grid.len()).map(|i| a.p05[i] <= b.p95[i] && b.p05[i] <= a.p95[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::SubjectReplicates;

    #[test]
    fn uncensored_curve_is_the_empirical_survival() {
        let km = km_estimator(&[(1.0, true), (2.0, true), (3.0, true)]);
        for (s, e) in km.survival.iter().zip([2.0 / 3.0, 1.0 / 3.0, 0.0]) {
            assert!((s - e).abs() < 1e-15);
        }
        let times = [4.0, 1.5, 7.0, 1.5, 3.0, 9.5];
        let km = km_estimator(&times.iter().map(|&t| (t, true)).collect::<Vec<_>>());
        for t in [0.0, 1.0, 1.5, 2.0, 3.0, 5.0, 9.5, 12.0] {
            let ecdf = times.iter().filter(|&&x| x <= t).count() as f64 / 6.0;
            assert!((km.survival_at(t) - (1.0 - ecdf)).abs() < 1e-15, "t={t}");
        }
    }

    #[test]
    fn censoring_shrinks_the_risk_set() {
        let km = km_estimator(&[(1.0, true), (2.0, false), (3.0, true)]);
        assert_eq!(km.times, [1.0, 3.0]);
        assert_eq!(km.at_risk, [3, 1]);
        assert!((km.survival_at(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(km.survival_at(3.0), 0.0);
        let all = km_estimator(&[(5.0, false), (6.0, false)]);
        assert!(all.times.is_empty() && all.survival_at(100.0) == 1.0);
    }

    fn subject(id: usize, t: f64, observed: bool) -> SubjectData {
        SubjectData {
            id: id.to_string(),
            observations: vec![(0.0, 1.0)],
            event_time: t,
            event_indicator: if observed { EventIndicator::Observed } else { EventIndicator::Censored },
        }
    }

    #[test]
    fn grid_is_thinned_to_the_limit() {
        let subjects: Vec<_> = (0..200).map(|i| subject(i, 1.0 + i as f64, i % 3 != 0)).collect();
        let grid = km_grid(&subjects, 50);
        assert_eq!(grid.len(), 50);
        assert_eq!(grid[0], 2.0);
        assert_eq!(grid[49], 200.0);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(km_grid(&subjects[..10], 50).len(), 6);
    }

    #[test]
    fn identical_replicates_collapse_the_bands() {
        let study_end = 365.0;
        let subjects: Vec<_> = (0..30)
            .map(|i| {
                let t = 20.0 + 13.0 * i as f64;
                if t < study_end {
                    subject(i, t, true)
                } else {
                    subject(i, study_end, false)
                }
            })
            .collect();
        let k = 120;
        let reps = ReplicateSet {
            k,
            planned_times: vec![0.0],
            study_end,
            subjects: subjects
                .iter()
                .enumerate()
                .map(|(i, _)| SubjectReplicates {
                    values: vec![1.0; k],
                    event_times: vec![20.0 + 13.0 * i as f64; k],
                })
                .collect(),
        };
        let vpc = km_vpc(&subjects, &reps, None).unwrap();
        assert!(!vpc.grid.is_empty());
        for i in 0..vpc.grid.len() {
            assert_eq!(vpc.p05[i], vpc.observed[i]);
            assert_eq!(vpc.p95[i], vpc.observed[i]);
        }
        assert_eq!(vpc.coverage(), 1.0);
        assert!(bands_overlap(&vpc, &vpc).unwrap().iter().all(|&b| b));
        let few = ReplicateSet { k: 10, ..reps };
        assert!(km_vpc(&subjects, &few, None).is_err());
    }
}
