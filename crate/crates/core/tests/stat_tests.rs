use jmnpde::numerics::{normal_cdf, normal_quantile};
use jmnpde::stat_tests::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, StudentT};

const SAMPLES: usize = 10_000;

fn normal_sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Kolmogorov distance of `p` from U(0,1).
fn uniform_distance(p: &mut [f64]) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
        .fold(0.0, f64::max)
}

/// Regularised lower incomplete gamma by its power series.
fn lower_gamma_regularised(a: f64, x: f64, gamma_a: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    for n in 1..200 {
        term *= x / (a + n as f64);
        sum += term;
    }
    sum * x.powf(a) * (-x).exp() / gamma_a
}

fn null_p_values(seed: u64, test: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..SAMPLES).map(|_| test(&normal_sample(&mut rng, 50))).collect()
}

fn rejection_rate(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x < ALPHA).count() as f64 / p.len() as f64
}

#[test]
fn wilcoxon_null_calibration() {
    let mut p = null_p_values(1, |x| wilcoxon_signed_rank(x).unwrap().p_value);
    let rate = rejection_rate(&p);
    assert!((0.045..=0.056).contains(&rate), "rate {rate}");
    assert!(uniform_distance(&mut p) < 0.02);
}

#[test]
fn variance_test_null_calibration() {
    let mut p = null_p_values(2, |x| fisher_variance_test(x, 1.0).unwrap().p_value);
    let rate = rejection_rate(&p);
    assert!((0.045..=0.056).contains(&rate), "rate {rate}");
    assert!(uniform_distance(&mut p) < 0.02);
}

#[test]
fn shapiro_wilk_null_p_values_are_uniform() {
    let mut p = null_p_values(3, |x| shapiro_wilk(x).unwrap().p_value);
    let d = uniform_distance(&mut p);
    assert!(d < 0.02, "distance {d}");
}

#[test]
fn ks_null_p_values_are_uniform() {
    let mut p = null_p_values(4, |x| ks_test_normal(x).p_value);
    let d = uniform_distance(&mut p);
    assert!(d < 0.02, "distance {d}");
}

#[test]
fn variance_test_matches_incomplete_gamma() {
    // s² = 1 with n = 2
    let x = [-0.5f64.sqrt(), 0.5f64.sqrt()];
    let r = fisher_variance_test(&x, 1.0).unwrap();
    assert!((r.statistic - 1.0).abs() < 1e-12);
    let lower = lower_gamma_regularised(0.5, 0.5, std::f64::consts::PI.sqrt());
    let expected = 2.0 * lower.min(1.0 - lower);
    assert!((r.p_value - expected).abs() < 1e-9, "{} vs {expected}", r.p_value);
}

#[test]
fn symmetric_sample_sits_at_the_null_median() {
    let r = wilcoxon_signed_rank(&[-1.0, 1.0, -2.0, 2.0]).unwrap();
    assert_eq!(r.statistic, 5.0);
    assert_eq!(r.p_value, 1.0);
}

#[test]
fn three_positive_values_by_sign_enumeration() {
    // V ≥ 6 happens for one of the 2³ sign patterns
    let upper = (0..8u32)
        .filter(|signs| (0..3).filter(|i| signs & (1 << i) != 0).map(|i| i + 1).sum::<u32>() >= 6)
        .count() as f64
        / 8.0;
    let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(r.p_value, 2.0 * upper);
    assert_eq!(r.p_value, 0.25);
}

#[test]
fn normal_scores_give_w_near_one() {
    let n = 100;
    let x: Vec<f64> = (1..=n)
        .map(|i| normal_quantile((i as f64 - 0.375) / (n as f64 + 0.25)))
        .collect();
    let w = shapiro_wilk(&x).unwrap().statistic;
    assert!(w <= 1.0 && 1.0 - w < 1e-3, "W = {w}");
}

#[test]
fn shapiro_wilk_detects_heavy_tails() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t2 = StudentT::new(2.0).unwrap();
    let reps = 1000;
    let rejected = (0..reps)
        .filter(|_| {
            let x: Vec<f64> = (0..200).map(|_| rng.sample(t2)).collect();
            shapiro_wilk(&x).unwrap().p_value < ALPHA
        })
        .count();
    assert!(rejected as f64 / reps as f64 > 0.9, "{rejected}/{reps}");
}

#[test]
fn equi_quantile_grid() {
    let n = 20;
    let x: Vec<f64> = (1..=n).map(|i| normal_quantile((i as f64 - 0.5) / n as f64)).collect();
    let r = ks_test_normal(&x);
    assert!((r.statistic - 0.025).abs() < 1e-12);
    assert!(r.p_value > 0.999);
    assert_eq!(ks_test_normal(&[0.0]).statistic, 0.5);
}

#[test]
fn combined_decisions_follow_the_thresholds() {
    let names = [
        "wilcoxon_long",
        "fisher_long",
        "shapiro_long",
        "wilcoxon_tte",
        "fisher_tte",
        "shapiro_tte",
    ];
    let all_one: Vec<(&str, f64)> = names.iter().map(|&n| (n, 1.0)).collect();
    assert!(!CombinedDecision::from_p_values(&all_one).reject);
    let mut one_low = all_one.clone();
    one_low[4].1 = 0.007;
    let d = CombinedDecision::from_p_values(&one_low);
    assert!(d.reject);
    assert_eq!(d.driving_component, "fisher_tte");

    assert!(!CombinedDecision::from_p_values(&[("ks_long", 0.5), ("ks_tte", 0.5)]).reject);
    let d = CombinedDecision::from_p_values(&[("ks_long", 0.01), ("ks_tte", 0.8)]);
    assert!(d.reject);
    assert_eq!(d.driving_component, "ks_long");
    assert_eq!(d.threshold, 0.025);
}

#[test]
fn combined_tests_under_the_null() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let reps = 400;
    let (mut global, mut ks) = (0, 0);
    for _ in 0..reps {
        let long = normal_sample(&mut rng, 300);
        let tte = normal_sample(&mut rng, 50);
        global += combined_global_test(&long, &tte).unwrap().reject as usize;
        ks += combined_ks_test(&long, &tte).unwrap().reject as usize;
    }
    // Bonferroni keeps the family-wise level at or below 5%
    for count in [global, ks] {
        let rate = count as f64 / reps as f64;
        assert!(rate < 0.09, "rate {rate}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn p_values_ignore_order_and_stay_in_range(
        x in prop::collection::vec(-5.0f64..5.0, 8..60),
        rotation in 0usize..60,
    ) {
        let mut y = x.clone();
        y.rotate_left(rotation % x.len());
        y.reverse();
        type Test = fn(&[f64]) -> Option<TestResult>;
        let tests: [Test; 4] = [
            |v| wilcoxon_signed_rank(v).ok(),
            |v| fisher_variance_test(v, 1.0).ok(),
            |v| shapiro_wilk(v).ok(),
            |v| Some(ks_test_normal(v)),
        ];
        for test in tests {
            if let (Some(a), Some(b)) = (test(&x), test(&y)) {
                prop_assert!((0.0..=1.0).contains(&a.p_value));
                prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
                prop_assert!((a.statistic - b.statistic).abs() < 1e-9 * a.statistic.abs().max(1.0));
            }
        }
    }

    #[test]
    fn sign_flip_leaves_wilcoxon_and_ks_unchanged(x in prop::collection::vec(-4.0f64..4.0, 1..80)) {
        let flipped: Vec<f64> = x.iter().map(|v| -v).collect();
        if let (Ok(a), Ok(b)) = (wilcoxon_signed_rank(&x), wilcoxon_signed_rank(&flipped)) {
            prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
        }
        let (a, b) = (ks_test_normal(&x), ks_test_normal(&flipped));
        prop_assert!((a.statistic - b.statistic).abs() < 1e-12);
        prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
    }

    #[test]
    fn ks_statistic_is_a_supremum(x in prop::collection::vec(-3.0f64..3.0, 1..30)) {
        let d = ks_statistic(&x, normal_cdf);
        let n = x.len() as f64;
        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        let brute = (0..=4000)
            .map(|i| -4.0 + 8.0 * i as f64 / 4000.0)
            .flat_map(|t| {
                let below = sorted.iter().filter(|&&v| v < t).count() as f64 / n;
                let at_or_below = sorted.iter().filter(|&&v| v <= t).count() as f64 / n;
                [(below - normal_cdf(t)).abs(), (at_or_below - normal_cdf(t)).abs()]
            })
            .chain(sorted.iter().flat_map(|&v| {
                let below = sorted.iter().filter(|&&w| w < v).count() as f64 / n;
                let at = sorted.iter().filter(|&&w| w <= v).count() as f64 / n;
                [(below - normal_cdf(v)).abs(), (at - normal_cdf(v)).abs()]
            }))
            .fold(0.0, f64::max);
        prop_assert!((d - brute).abs() < 1e-12);
    }
}
