//! Shapiro–Wilk W with Royston's (1995) coefficient and p-value
//! approximations (algorithm AS R94).

use super::{Method, TestResult};
use crate::error::{Error, Result};
use crate::numerics::{normal_cdf, normal_quantile};

const SMALL: f64 = 1e-19;

const G: [f64; 2] = [-2.273, 0.459];
const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Upper-half coefficients a[0..n/2], positive and decreasing.
fn coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    if n == 3 {
        return vec![0.5f64.sqrt()];
    }
    let an = n as f64;
    let m: Vec<f64> = (1..=half)
        .map(|i| normal_quantile((i as f64 - 0.375) / (an + 0.25)))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    let mut a = m.clone();
    let (first, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        a[1] = a2;
        (2, fac)
    } else {
        (
            (1),
            ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt(),
        )
    };
    a[0] = a1;
    for v in &mut a[first..] {
        *v /= -fac;
    }
    a
}

/// Shapiro–Wilk test of normality for 3 ≤ n ≤ 5000.
pub fn shapiro_wilk(x: &[f64]) -> Result<TestResult> {
    let n = x.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::InvalidInput(format!(
            "Shapiro-Wilk needs between 3 and 5000 values, got {n}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "Shapiro-Wilk input contains non-finite values".into(),
        ));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let range = sorted[n - 1] - sorted[0];
    if range < SMALL {
        return Err(Error::InvalidInput("Shapiro-Wilk input is constant".into()));
    }
    let a = coefficients(n);
    let coef = |i: usize| -> f64 {
        let j = n - 1 - i;
        if i < j {
            -a[i]
        } else if i > j {
            a[j]
        } else {
            0.0
        }
    };
    let an = n as f64;
    let ca = (0..n).map(coef).sum::<f64>() / an;
    let cx = sorted.iter().map(|v| v / range).sum::<f64>() / an;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (i, v) in sorted.iter().enumerate() {
        let da = coef(i) - ca;
        let dx = v / range - cx;
        ssa += da * da;
        ssx += dx * dx;
        sax += da * dx;
    }
    let root = (ssa * ssx).sqrt();
    let w1 = (root - sax) * (root + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    let p = if n == 3 {
        let p = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - std::f64::consts::FRAC_PI_3);
        p.max(0.0)
    } else {
        let mut y = w1.ln();
        let (mean, sd) = if n <= 11 {
            let gamma = poly(&G, an);
            if y >= gamma {
                return Ok(TestResult::new(Method::ShapiroWilk, w, 1e-99, n));
            }
            y = -(gamma - y).ln();
            (poly(&C3, an), poly(&C4, an).exp())
        } else {
            let ln_n = an.ln();
            (poly(&C5, ln_n), poly(&C6, ln_n).exp())
        };
        normal_cdf(-(y - mean) / sd)
    };
    Ok(TestResult::new(Method::ShapiroWilk, w, p, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE_30: [f64; 30] = [
        0.346, 0.822, 0.33, -1.303, 0.905, 0.446, -0.537, 0.581, 0.365, 0.294, 0.028, 0.547,
        -0.736, -0.163, -0.482, 0.599, 0.04, -0.292, -0.782, -0.257, 0.008, -0.276, 1.294, 1.007,
        -2.711, -1.889, -0.175, -0.422, 0.214, 0.217,
    ];

    fn check(x: &[f64], w: f64, p: f64) {
        let r = shapiro_wilk(x).unwrap();
        assert!((r.statistic - w).abs() < 1e-9, "W {} vs {w}", r.statistic);
        assert!(
            (r.p_value - p).abs() < 1e-8 * p.max(1e-3),
            "p {} vs {p}",
            r.p_value
        );
    }

    #[test]
    fn reference_values() {
        check(
            &[2.1, 3.4, 1.9, 5.6, 4.4],
            0.9320849391953863,
            0.6106559022604845,
        );
        check(
            &[
                148., 154., 158., 160., 161., 162., 166., 170., 182., 195., 236.,
            ],
            0.7888146948631716,
            0.006703814061898823,
        );
        check(&SAMPLE_30, 0.9156821564089926, 0.020754374308331033);
    }

    #[test]
    fn three_points_are_exact() {
        // W for n = 3 is the squared correlation with (−1, 0, 1)/√2.
        let x: [f64; 3] = [1.0, 2.0, 4.0];
        let mean = 7.0 / 3.0;
        let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let w_oracle = (x[2] - x[0]).powi(2) / 2.0 / ss;
        let r = shapiro_wilk(&x).unwrap();
        assert!((r.statistic - w_oracle).abs() < 1e-14);
        let equal = shapiro_wilk(&[1.0, 2.0, 3.0]).unwrap();
        assert!((equal.statistic - 1.0).abs() < 1e-14 && (equal.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invariant_to_location_scale_and_order() {
        let y: Vec<f64> = SAMPLE_30.iter().rev().map(|v| 3.0 * v - 7.0).collect();
        let a = shapiro_wilk(&SAMPLE_30).unwrap();
        let b = shapiro_wilk(&y).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-12);
        assert!((a.p_value - b.p_value).abs() < 1e-10);
    }

    #[test]
    fn coefficients_have_unit_norm() {
        for n in [4, 5, 6, 11, 12, 50, 500] {
            let a = coefficients(n);
            let norm: f64 = 2.0 * a.iter().map(|v| v * v).sum::<f64>();
            assert!((norm - 1.0).abs() < 1e-12, "n={n} norm={norm}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(shapiro_wilk(&[1.0, 2.0]).is_err());
        assert!(shapiro_wilk(&[1.0; 10]).is_err());
        assert!(shapiro_wilk(&vec![0.0; 5001]).is_err());
    }
}
