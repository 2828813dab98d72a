//! End-to-end evaluation of a tested model against a dataset and the JSON
//! report it produces.

use serde::Serialize;

use crate::diagnostics::{
    detrended_pd_wormplot, km_vpc, npd_percentile_bands, KmVpc, PercentileBand, WormPoint, DEFAULT_BINS,
};
use crate::error::Result;
use crate::model::JointModelSpec;
use crate::residuals::{compute_residuals, ResidualTable};
use crate::simulator::{simulate_replicates, EventIndicator, ReplicateSet, SeedSpec, StudyDesign, SubjectData};
use crate::stat_tests::{combined_global_test, combined_ks_test, CombinedDecision};

/// Child-seed tags separating the random streams of one evaluation.
pub const REPLICATE_STREAM: u64 = 1;
pub const IMPUTATION_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedObservation {
    pub id: String,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSummary {
    pub longitudinal: usize,
    pub subjects: usize,
    pub censored: usize,
    pub imputed: usize,
    pub clamped: usize,
    pub low_support: usize,
    /// Observations with no surviving replicate; left out of the tests.
    pub excluded: Vec<ExcludedObservation>,
}

impl ResidualSummary {
    pub fn of(table: &ResidualTable) -> Self {
        Self {
            longitudinal: table.longitudinal.len(),
            subjects: table.tte.len(),
            censored: table.tte.iter().filter(|r| r.indicator == EventIndicator::Censored).count(),
            imputed: table.tte.iter().filter(|r| r.imputed).count(),
            clamped: table.longitudinal.iter().filter(|r| r.flags.clamped).count()
                + table.tte.iter().filter(|r| r.clamped).count(),
            low_support: table.longitudinal.iter().filter(|r| r.flags.low_support).count(),
            excluded: table
                .longitudinal
                .iter()
                .filter(|r| r.flags.excluded)
                .map(|r| ExcludedObservation { id: r.id.clone(), time: r.time })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticSummary {
    pub wormplot: Vec<WormPoint>,
    pub percentile_bands: Vec<PercentileBand>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub km_vpc: Option<KmVpc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub association: String,
    pub subjects: usize,
    pub replicates: usize,
    pub seed: u64,
    pub residuals: ResidualSummary,
    pub global_test: CombinedDecision,
    pub ks_test: CombinedDecision,
    pub diagnostics: DiagnosticSummary,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

/// Both combined tests on a residual table.
pub fn combined_tests(table: &ResidualTable) -> Result<(CombinedDecision, CombinedDecision)> {
    let (npde, npd_tte) = (table.npde(), table.npd_tte());
    Ok((combined_global_test(&npde, &npd_tte)?, combined_ks_test(&npde, &npd_tte)?))
}

/// Replicates under `tested` and the residuals of `observed` against them.
pub fn replicate_residuals(
    observed: &[SubjectData],
    tested: &JointModelSpec,
    design: &StudyDesign,
    k: usize,
    seed: &SeedSpec,
) -> Result<(ReplicateSet, ResidualTable)> {
    tested.validate()?;
    let replicates = simulate_replicates(observed, tested, design, k, &seed.child(REPLICATE_STREAM))?;
    let residuals = compute_residuals(observed, &replicates, &seed.child(IMPUTATION_STREAM))?;
    Ok((replicates, residuals))
}

pub struct Evaluation {
    pub replicates: ReplicateSet,
    pub residuals: ResidualTable,
    pub report: EvaluationReport,
}

/// Simulates `k` replicates under `tested`, computes all residuals, runs the
/// combined tests and builds the diagnostics. The KM-VPC is skipped with a
/// note when `k` is below its minimum.
pub fn evaluate(
    observed: &[SubjectData],
    tested: &JointModelSpec,
    design: &StudyDesign,
    k: usize,
    seed: &SeedSpec,
) -> Result<Evaluation> {
    let (replicates, residuals) = replicate_residuals(observed, tested, design, k, seed)?;
    let (global_test, ks_test) = combined_tests(&residuals)?;
    let (km_vpc, note) = match km_vpc(observed, &replicates, None) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(format!("KM-VPC skipped: {e}"))),
    };
    let report = EvaluationReport {
        association: tested.association.kind.label().to_string(),
        subjects: observed.len(),
        replicates: k,
        seed: seed.master_seed,
        residuals: ResidualSummary::of(&residuals),
        global_test,
        ks_test,
        diagnostics: DiagnosticSummary {
            wormplot: detrended_pd_wormplot(&residuals.tte),
            percentile_bands: npd_percentile_bands(&residuals.longitudinal, DEFAULT_BINS)?,
            km_vpc,
            note,
        },
    };
    Ok(Evaluation { replicates, residuals, report })
}
