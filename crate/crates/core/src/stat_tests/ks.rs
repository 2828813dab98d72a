use super::{Method, TestResult};
use crate::numerics::normal_cdf;

/// Largest sample size for which the exact null distribution is used.
const EXACT_MAX: usize = 100;

/// Two-sided one-sample statistic D = sup |F_n − F|.
pub fn ks_statistic(x: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0f64, |d, (i, &v)| {
        let f = cdf(v);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

fn matrix_multiply(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i * m + j] += aik * b[k * m + j];
            }
        }
    }
    c
}

/// Matrix power with a decimal exponent kept separately to avoid overflow.
fn matrix_power(a: &[f64], ea: i32, m: usize, n: usize) -> (Vec<f64>, i32) {
    if n == 1 {
        return (a.to_vec(), ea);
    }
    let (half, eh) = matrix_power(a, ea, m, n / 2);
    let mut b = matrix_multiply(&half, &half, m);
    let mut eb = 2 * eh;
    if n % 2 == 1 {
        b = matrix_multiply(a, &b, m);
        eb += ea;
    }
    if b[(m / 2) * m + m / 2] > 1e140 {
        for v in &mut b {
            *v *= 1e-140;
        }
        eb += 140;
    }
    (b, eb)
}

/// P(D_n < d) for the two-sided statistic, by the Marsaglia–Tsang–Wang
/// matrix method.
pub fn marsaglia_tsang_wang_cdf(n: usize, d: f64) -> f64 {
    let nf = n as f64;
    let k = (nf * d) as usize + 1;
    let m = 2 * k - 1;
    let h = k as f64 - nf * d;
    let mut hm = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            hm[i * m + j] = if i + 1 >= j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..m {
        hm[i * m] -= h.powi(i as i32 + 1);
        hm[(m - 1) * m + i] -= h.powi((m - i) as i32);
    }
    if 2.0 * h - 1.0 > 0.0 {
        hm[(m - 1) * m] += (2.0 * h - 1.0).powi(m as i32);
    }
    for i in 0..m {
        for j in 0..m {
            if i + 1 > j {
                for g in 1..=(i + 1 - j) {
                    hm[i * m + j] /= g as f64;
                }
            }
        }
    }
    let (q, mut eq) = matrix_power(&hm, 0, m, n);
    let mut s = q[(k - 1) * m + k - 1];
    for i in 1..=n {
        s = s * i as f64 / nf;
        if s < 1e-140 {
            s *= 1e140;
            eq -= 140;
        }
    }
    s * 10f64.powi(eq)
}

/// P(√n D > x) in the large-sample limit (Kolmogorov distribution).
pub fn kolmogorov_upper_tail(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        let z = -std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let w = x.ln();
        let cdf: f64 = (1..100)
            .step_by(2)
            .map(|k| ((k * k) as f64 * z - w).exp())
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).sqrt();
        1.0 - cdf
    } else {
        let z = -2.0 * x * x;
        let mut sign = 1.0;
        let mut total = 0.0;
        for k in 1..=100 {
            let term = ((k * k) as f64 * z).exp();
            total += sign * term;
            if term < 1e-17 {
                break;
            }
            sign = -sign;
        }
        (2.0 * total).clamp(0.0, 1.0)
    }
}

/// Two-sided one-sample KS test against a continuous distribution function.
pub fn ks_test(x: &[f64], cdf: impl Fn(f64) -> f64, method: Method) -> TestResult {
    let n = x.len();
    if n == 0 {
        let mut r = TestResult::new(method, 0.0, 1.0, 0);
        r.warning = Some("empty sample".into());
        return r;
    }
    let d = ks_statistic(x, cdf);
    let nf = n as f64;
    let p = if n <= EXACT_MAX {
        let s = d * d * nf;
        if s > 7.24 {
            2.0 * (-(2.000071 + 0.331 / nf.sqrt() + 1.409 / nf) * s).exp()
        } else {
            1.0 - marsaglia_tsang_wang_cdf(n, d)
        }
    } else {
        kolmogorov_upper_tail(nf.sqrt() * d)
    };
    TestResult::new(method, d, p, n)
}

pub fn ks_test_normal(x: &[f64]) -> TestResult {
    ks_test(x, normal_cdf, Method::KsNormal)
}

pub fn ks_test_uniform(x: &[f64]) -> TestResult {
    ks_test(x, |u| u.clamp(0.0, 1.0), Method::KsUniform)
}
