//! Plot-ready diagnostics: de-trended pd wormplot for the TTE part, binned
//! npd percentile bands for the longitudinal part, Kaplan-Meier curves and
//! the KM visual predictive check.
//!
//! CSV exports (one file per diagnostic):
//!
//! * wormplot: `id,time,censored,imputed,rank,n,pd,detrended,lower,upper`
//! * percentile bands: `bin,time_center,time_min,time_max,count,merged,percentile,observed,lower,upper`
//! * KM-VPC: `time,observed,p05,p50,p95`

mod km;
mod svg;

pub use km::{bands_overlap, km_estimator, km_grid, km_vpc, KmCurve, KmVpc, MAX_GRID_POINTS};
pub use svg::{render_svg, PlotData};

use std::io::Write;

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::numerics::normal_quantile;
use crate::residuals::{LongitudinalResidual, TteResidual};
use crate::simulator::EventIndicator;

/// Percentiles shown in the band plot.
pub const BAND_PERCENTILES: [f64; 3] = [0.05, 0.5, 0.95];
/// Default number of time bins.
pub const DEFAULT_BINS: usize = 9;
/// Bins smaller than this are merged into a neighbour.
pub const MIN_BIN_COUNT: usize = 5;
const INTERVAL: (f64, f64) = (0.05, 0.95);

/// Median and 90% interval of the i-th of n uniform order statistics.
fn order_statistic(i: usize, n: usize) -> (f64, f64, f64) {
    let beta = Beta::new(i as f64, (n - i + 1) as f64).expect("positive shapes");
    (
        beta.inverse_cdf(0.5),
        beta.inverse_cdf(INTERVAL.0),
        beta.inverse_cdf(INTERVAL.1),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WormPoint {
    pub id: String,
    /// Event or censoring time of the subject.
    pub time: f64,
    pub censored: bool,
    pub imputed: bool,
    /// 1-based rank of the pd among the n values.
    pub rank: usize,
    pub n: usize,
    pub pd: f64,
    pub detrended: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Sorted TTE pd minus the median of the matching uniform order statistic,
/// with the exact 90% order-statistic interval de-trended the same way.
pub fn detrended_pd_wormplot(tte: &[TteResidual]) -> Vec<WormPoint> {
    let n = tte.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| tte[a].pd.total_cmp(&tte[b].pd).then_with(|| tte[a].id.cmp(&tte[b].id)));
    order
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let r = &tte[s];
            let (median, lower, upper) = order_statistic(i + 1, n);
            WormPoint {
                id: r.id.clone(),
                time: r.time,
                censored: r.indicator == EventIndicator::Censored,
                imputed: r.imputed,
                rank: i + 1,
                n,
                pd: r.pd,
                detrended: r.pd - median,
                lower: lower - median,
                upper: upper - median,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandPercentile {
    pub level: f64,
    pub observed: f64,
    /// 90% prediction interval of this percentile for a standard normal
    /// sample of the bin's size.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentileBand {
    pub time_center: f64,
    pub time_min: f64,
    pub time_max: f64,
    pub count: usize,
    /// True if the bin absorbed a neighbour with fewer than five points.
    pub merged: bool,
    pub percentiles: Vec<BandPercentile>,
}

/// 1-based order statistic used as the empirical p-th percentile of m values.
pub fn percentile_rank(p: f64, m: usize) -> usize {
    ((p * m as f64 - 1e-9).ceil() as usize).clamp(1, m)
}

/// Theoretical 90% interval of the p-th percentile of m standard normals.
pub fn percentile_interval(p: f64, m: usize) -> (f64, f64) {
    let (_, lo, hi) = order_statistic(percentile_rank(p, m), m);
    (normal_quantile(lo), normal_quantile(hi))
}

/// Splits sorted times into at most `n_bins` groups of roughly equal count
/// without separating equal times. Balanced designs with at most `n_bins`
/// distinct times get one bin per time.
fn time_bins(times: &[f64], n_bins: usize) -> Vec<(usize, usize)> {
    let m = times.len();
    let mut starts = vec![0];
    let distinct = 1 + times.windows(2).filter(|w| w[1] > w[0]).count();
    if distinct <= n_bins {
        starts.extend((1..m).filter(|&i| times[i] > times[i - 1]));
    } else {
        for b in 1..n_bins {
            let mut cut = (b * m + n_bins / 2) / n_bins;
            while cut < m && cut > 0 && times[cut] == times[cut - 1] {
                cut += 1;
            }
            if cut < m && cut > *starts.last().unwrap() {
                starts.push(cut);
            }
        }
    }
    starts.iter().zip(starts[1..].iter().chain([&m])).map(|(&a, &b)| (a, b)).collect()
}

/// Observed 5/50/95th npd percentiles per time bin with their theoretical
/// prediction intervals. Observations without an npd are skipped.
pub fn npd_percentile_bands(residuals: &[LongitudinalResidual], n_bins: usize) -> Result<Vec<PercentileBand>> {
    if n_bins == 0 {
        return Err(Error::InvalidInput("number of bins must be positive".into()));
    }
    let mut points: Vec<(f64, f64)> = residuals.iter().filter_map(|r| r.npd.map(|z| (r.time, z))).collect();
    if points.is_empty() {
        return Err(Error::InvalidInput("no longitudinal npd to bin".into()));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let times: Vec<f64> = points.iter().map(|p| p.0).collect();

    let mut bins: Vec<((usize, usize), bool)> = Vec::new();
    let mut pending: Option<(usize, usize)> = None;
    for (a, b) in time_bins(&times, n_bins) {
        let (start, merged) = match pending.take() {
            Some((s, _)) => (s, true),
            None => (a, false),
        };
        if b - start < MIN_BIN_COUNT {
            pending = Some((start, b));
        } else {
            bins.push(((start, b), merged));
        }
    }
    if let Some((s, e)) = pending {
        match bins.last_mut() {
            Some(last) => *last = ((last.0 .0, e), true),
            None => bins.push(((s, e), false)),
        }
    }

    Ok(bins
        .into_iter()
        .map(|((a, b), merged)| {
            let slice = &points[a..b];
            let m = slice.len();
            let mut values: Vec<f64> = slice.iter().map(|p| p.1).collect();
            values.sort_by(f64::total_cmp);
            let percentiles = BAND_PERCENTILES
                .iter()
                .map(|&level| {
                    let (lower, upper) = percentile_interval(level, m);
                    BandPercentile { level, observed: values[percentile_rank(level, m) - 1], lower, upper }
                })
                .collect();
            PercentileBand {
                time_center: slice.iter().map(|p| p.0).sum::<f64>() / m as f64,
                time_min: slice[0].0,
                time_max: slice[m - 1].0,
                count: m,
                merged,
                percentiles,
            }
        })
        .collect())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

pub fn write_wormplot_csv(points: &[WormPoint], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "time", "censored", "imputed", "rank", "n", "pd", "detrended", "lower", "upper"])
        .map_err(csv_error)?;
    for p in points {
        w.write_record([
            p.id.clone(),
            p.time.to_string(),
            u8::from(p.censored).to_string(),
            u8::from(p.imputed).to_string(),
            p.rank.to_string(),
            p.n.to_string(),
            p.pd.to_string(),
            p.detrended.to_string(),
            p.lower.to_string(),
            p.upper.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bands_csv(bands: &[PercentileBand], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "bin", "time_center", "time_min", "time_max", "count", "merged", "percentile", "observed", "lower", "upper",
    ])
    .map_err(csv_error)?;
    for (i, b) in bands.iter().enumerate() {
        for p in &b.percentiles {
            w.write_record([
                (i + 1).to_string(),
                b.time_center.to_string(),
                b.time_min.to_string(),
                b.time_max.to_string(),
                b.count.to_string(),
                u8::from(b.merged).to_string(),
                p.level.to_string(),
                p.observed.to_string(),
                p.lower.to_string(),
                p.upper.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_km_vpc_csv(vpc: &KmVpc, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "observed", "p05", "p50", "p95"]).map_err(csv_error)?;
    for i in 0..vpc.grid.len() {
        w.write_record([
            vpc.grid[i].to_string(),
            vpc.observed[i].to_string(),
            vpc.p05[i].to_string(),
            vpc.p50[i].to_string(),
            vpc.p95[i].to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::residuals::Flags;

    fn tte(id: &str, time: f64, pd: f64) -> TteResidual {
        TteResidual {
            id: id.into(),
            time,
            indicator: EventIndicator::Observed,
            pd,
            npd: normal_quantile(pd),
            clamped: false,
            imputed: false,
            imputation_lower_bound: None,
        }
    }

    fn long(time: f64, npd: f64) -> LongitudinalResidual {
        LongitudinalResidual {
            id: "1".into(),
            time,
            value: 0.0,
            pd: None,
            npd: Some(npd),
            pde: None,
            npde: None,
            survivor_count: 10,
            flags: Flags::default(),
        }
    }

    #[test]
    fn single_point_wormplot_uses_the_uniform() {
        let w = detrended_pd_wormplot(&[tte("a", 100.0, 0.7)]);
        assert_eq!(w.len(), 1);
        assert!((w[0].lower + 0.45).abs() < 1e-10 && (w[0].upper - 0.45).abs() < 1e-10);
        assert!((w[0].detrended - 0.2).abs() < 1e-10);
    }

    #[test]
    fn wormplot_sorts_by_pd() {
        let pts = detrended_pd_wormplot(&[tte("a", 10.0, 0.9), tte("b", 20.0, 0.1), tte("c", 30.0, 0.5)]);
        let ids: Vec<&str> = pts.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
        // Beta(2, 2) is symmetric about 1/2.
        assert!(pts[1].detrended.abs() < 1e-12);
        assert!((pts[1].lower + pts[1].upper).abs() < 1e-10);
        assert!(pts.iter().all(|p| p.lower < p.upper));
    }

    #[test]
    fn balanced_designs_get_one_bin_per_time() {
        let res: Vec<_> = (0..9).flat_map(|j| (0..10).map(move |i| long(j as f64 * 45.0, i as f64 / 10.0))).collect();
        let bands = npd_percentile_bands(&res, DEFAULT_BINS).unwrap();
        assert_eq!(bands.len(), 9);
        assert!(bands.iter().all(|b| b.count == 10 && !b.merged && b.time_min == b.time_max));
    }

    #[test]
    fn identical_values_give_identical_percentiles() {
        let res: Vec<_> = (0..30).map(|i| long(i as f64, 0.4)).collect();
        for b in npd_percentile_bands(&res, 3).unwrap() {
            assert!(b.percentiles.iter().all(|p| p.observed == 0.4 && p.lower <= p.upper));
        }
    }

    #[test]
    fn small_bins_are_merged() {
        let mut res: Vec<_> = (0..20).map(|i| long(0.0, i as f64)).collect();
        res.extend((0..3).map(|i| long(50.0, i as f64)));
        res.extend((0..20).map(|i| long(100.0, i as f64)));
        let bands = npd_percentile_bands(&res, 9).unwrap();
        assert_eq!(bands.iter().map(|b| b.count).collect::<Vec<_>>(), [20, 23]);
        assert!(bands[1].merged && !bands[0].merged);
        let last: Vec<_> = (0..20).map(|i| long(0.0, i as f64)).chain([long(9.0, 1.0)]).collect();
        let bands = npd_percentile_bands(&last, 9).unwrap();
        assert_eq!(bands.len(), 1);
        assert!(bands[0].merged && bands[0].count == 21);
    }

    #[test]
    fn bands_ignore_input_order() {
        let res: Vec<_> = (0..60).map(|i| long((i % 7) as f64 * 10.0, ((i * 17) % 11) as f64)).collect();
        let mut rev = res.clone();
        rev.reverse();
        assert_eq!(npd_percentile_bands(&res, 4).unwrap(), npd_percentile_bands(&rev, 4).unwrap());
    }

    #[test]
    fn intervals_narrow_with_sample_size() {
        let (lo20, hi20) = percentile_interval(0.95, 20);
        let (lo200, hi200) = percentile_interval(0.95, 200);
        assert!(hi20 - lo20 > hi200 - lo200);
        let (lo, hi) = percentile_interval(0.5, 15);
        assert!(lo < 0.0 && hi > 0.0 && (lo + hi).abs() < 1e-9);
    }

    #[test]
    fn csv_headers() {
        let mut out = Vec::new();
        write_wormplot_csv(&detrended_pd_wormplot(&[tte("a", 5.0, 0.5)]), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("id,time,censored,imputed,rank,n,pd,detrended,lower,upper\na,5,0,0,1,1,0.5,"));
    }
}
