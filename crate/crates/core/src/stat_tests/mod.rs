//! Distributional tests on normalised residuals and their Bonferroni
//! combinations.
//!
//! The global test runs a Wilcoxon signed-rank test (mean 0), a one-sample
//! χ² variance test (variance 1) and a Shapiro–Wilk test on each of the
//! longitudinal npde and the TTE npd, rejecting when the smallest of the six
//! p-values is below 0.05/6. The KS variant compares both samples with
//! N(0, 1) and rejects below 0.05/2.

mod ks;
mod shapiro;
mod wilcoxon;

pub use ks::{
    kolmogorov_upper_tail, ks_statistic, ks_test, ks_test_normal, ks_test_uniform,
    marsaglia_tsang_wang_cdf,
};
pub use shapiro::shapiro_wilk;
pub use wilcoxon::{signed_rank_exact_upper, wilcoxon_signed_rank};

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Family-wise level of the combined tests.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Wilcoxon,
    FisherVariance,
    ShapiroWilk,
    KsNormal,
    KsUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl TestResult {
    fn new(method: Method, statistic: f64, p_value: f64, n: usize) -> Self {
        Self {
            method,
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            n,
            warning: None,
        }
    }
}

/// One-sample two-sided χ² test of variance σ₀²: statistic (n−1)s²/σ₀².
pub fn fisher_variance_test(x: &[f64], sigma0: f64) -> Result<TestResult> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "the variance test needs at least 2 values, got {n}"
        )));
    }
    if !(sigma0 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "reference standard deviation must be positive, got {sigma0}"
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let ss = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let statistic = ss / (sigma0 * sigma0);
    let chi2 = ChiSquared::new((n - 1) as f64).expect("positive degrees of freedom");
    let p = 2.0 * chi2.cdf(statistic).min(chi2.sf(statistic));
    let mut result = TestResult::new(Method::FisherVariance, statistic, p.min(1.0), n);
    if ss == 0.0 {
        result.warning = Some("sample has zero variance".into());
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Component {
    pub name: String,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<TestResult>,
}

/// Bonferroni decision over a set of component p-values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinedDecision {
    pub components: Vec<Component>,
    pub threshold: f64,
    pub reject: bool,
    /// Name of the component with the smallest p-value.
    pub driving_component: String,
}

impl CombinedDecision {
    /// Rejects iff the smallest p-value is below α / (number of components).
    pub fn from_components(components: Vec<Component>) -> Self {
        let threshold = ALPHA / components.len() as f64;
        let driving = components
            .iter()
            .min_by(|a, b| a.p_value.total_cmp(&b.p_value))
            .expect("at least one component");
        let reject = driving.p_value < threshold;
        let driving_component = driving.name.clone();
        Self {
            components,
            threshold,
            reject,
            driving_component,
        }
    }

    pub fn from_p_values(named: &[(&str, f64)]) -> Self {
        Self::from_components(
            named
                .iter()
                .map(|&(name, p_value)| Component {
                    name: name.into(),
                    p_value,
                    test: None,
                })
                .collect(),
        )
    }

    pub fn min_p_value(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.p_value)
            .fold(f64::INFINITY, f64::min)
    }
}

fn component(name: &str, test: TestResult) -> Component {
    Component {
        name: name.into(),
        p_value: test.p_value,
        test: Some(test),
    }
}

fn require_nonempty(x: &[f64], what: &str) -> Result<()> {
    if x.is_empty() {
        return Err(Error::InvalidInput(format!("no {what} residuals to test")));
    }
    Ok(())
}

/// Wilcoxon, variance and Shapiro–Wilk tests on both samples; threshold 0.05/6.
pub fn combined_global_test(npde_long: &[f64], npd_tte: &[f64]) -> Result<CombinedDecision> {
    require_nonempty(npde_long, "longitudinal")?;
    require_nonempty(npd_tte, "TTE")?;
    Ok(CombinedDecision::from_components(vec![
        component("wilcoxon_long", wilcoxon_signed_rank(npde_long)?),
        component("fisher_long", fisher_variance_test(npde_long, 1.0)?),
        component("shapiro_long", shapiro_wilk(npde_long)?),
        component("wilcoxon_tte", wilcoxon_signed_rank(npd_tte)?),
        component("fisher_tte", fisher_variance_test(npd_tte, 1.0)?),
        component("shapiro_tte", shapiro_wilk(npd_tte)?),
    ]))
}

/// KS tests against N(0, 1) on both samples; threshold 0.05/2.
pub fn combined_ks_test(npde_long: &[f64], npd_tte: &[f64]) -> Result<CombinedDecision> {
    require_nonempty(npde_long, "longitudinal")?;
    require_nonempty(npd_tte, "TTE")?;
    Ok(CombinedDecision::from_components(vec![
        component("ks_long", ks_test_normal(npde_long)),
        component("ks_tte", ks_test_normal(npd_tte)),
    ]))
}
