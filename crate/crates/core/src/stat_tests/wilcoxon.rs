use super::{Method, TestResult};
use crate::error::{Error, Result};
use crate::numerics::normal_cdf;

/// Largest sample size for which the exact null distribution is used.
const EXACT_MAX: usize = 25;

/// Average ranks (1-based) of `v`, plus the tie-correction term Σ(t³ − t).
fn average_ranks(v: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = rank;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

/// Number of subsets of {1..n} with each possible sum.
fn subset_sum_counts(n: usize) -> Vec<f64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0.0; max + 1];
    counts[0] = 1.0;
    for k in 1..=n {
        for s in (k..=max).rev() {
            counts[s] += counts[s - k];
        }
    }
    counts
}

/// P(V ≥ v) under the null for the signed-rank statistic with n untied ranks.
pub fn signed_rank_exact_upper(n: usize, v: f64) -> f64 {
    let counts = subset_sum_counts(n);
    let total = 2f64.powi(n as i32);
    let from = v.ceil().max(0.0) as usize;
    counts.iter().skip(from).sum::<f64>() / total
}

/// Two-sided one-sample Wilcoxon signed-rank test of location 0.
///
/// The statistic V is the sum of ranks of the positive values. Zeros are
/// dropped. Small untied samples use the exact distribution, others the
/// normal approximation with tie and continuity corrections.
pub fn wilcoxon_signed_rank(x: &[f64]) -> Result<TestResult> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "Wilcoxon test input contains non-finite values".into(),
        ));
    }
    let nonzero: Vec<f64> = x.iter().copied().filter(|&v| v != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        let mut r = TestResult::new(Method::Wilcoxon, 0.0, 1.0, 0);
        r.warning = Some("all values are zero".into());
        return Ok(r);
    }
    let abs: Vec<f64> = nonzero.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = average_ranks(&abs);
    let v: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(x, _)| **x > 0.0)
        .map(|(_, r)| r)
        .sum();
    let nf = n as f64;
    let mut result = if ties == 0.0 && n <= EXACT_MAX {
        let max = nf * (nf + 1.0) / 2.0;
        let upper = signed_rank_exact_upper(n, v);
        let lower = signed_rank_exact_upper(n, max - v);
        TestResult::new(Method::Wilcoxon, v, (2.0 * upper.min(lower)).min(1.0), n)
    } else {
        let z = v - nf * (nf + 1.0) / 4.0;
        let sigma = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0).sqrt();
        let p = if sigma > 0.0 {
            // f64::signum(0.0) is 1.0
            let correction = if z == 0.0 { 0.0 } else { 0.5 * z.signum() };
            let z = (z - correction) / sigma;
            2.0 * normal_cdf(-z.abs())
        } else {
            1.0
        };
        TestResult::new(Method::Wilcoxon, v, p.min(1.0), n)
    };
    if n < x.len() {
        result.warning = Some(format!("{} zero values dropped", x.len() - n));
    }
    Ok(result)
}
