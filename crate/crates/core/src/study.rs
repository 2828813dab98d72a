//! Type-I-error and power studies: many simulated datasets under a true
//! model, each evaluated against a tested model.
//!
//! Seeds are derived from the master seed and the study index only, so every
//! tested model sees the same datasets and replicate streams (common random
//! numbers), and the first n subjects of a study do not depend on how many
//! subjects it has. Several sample sizes are therefore evaluated from one
//! simulation at the largest size.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF};

use crate::error::{Error, Result};
use crate::model::{AssociationKind, JointModelSpec, SlopeScale};
use crate::report::{combined_tests, replicate_residuals};
use crate::residuals::ResidualTable;
use crate::simulator::{simulate_dataset, SeedSpec, StudyDesign};

pub const DEFAULT_STUDIES: usize = 200;
pub const DEFAULT_K: usize = 2000;
pub const SAMPLE_SIZES: [usize; 3] = [50, 100, 200];
/// Nominal level whose binomial interval judges type-I-error scenarios.
pub const NOMINAL_LEVEL: f64 = 0.05;
/// Number of planned longitudinal measurements per subject.
pub const PLANNED_MEASUREMENTS: usize = 9;
/// Child-seed tag of the observed dataset within a study.
const OBSERVED_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ShapeK,
    Epsilon,
    OmegaEpsilon,
    Association,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::ShapeK, Family::Epsilon, Family::OmegaEpsilon, Family::Association];

    pub fn name(self) -> &'static str {
        match self {
            Family::ShapeK => "shape_k",
            Family::Epsilon => "epsilon",
            Family::OmegaEpsilon => "omega_epsilon",
            Family::Association => "association",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| {
            let names: Vec<_> = Family::ALL.iter().map(|f| f.name()).collect();
            Error::InvalidInput(format!("unknown scenario family {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub truth_label: String,
    pub tested_label: String,
    pub truth: JointModelSpec,
    pub tested: JointModelSpec,
    pub n_subjects: usize,
    pub studies: usize,
    pub k: usize,
    pub master_seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.studies == 0 || self.k == 0 || self.n_subjects == 0 {
            return Err(Error::InvalidInput(
                "a scenario needs at least one study, one replicate and one subject".into(),
            ));
        }
        if self.truth.study_end != self.tested.study_end {
            return Err(Error::InvalidInput(format!(
                "true and tested models must share the study design (study_end {} vs {})",
                self.truth.study_end, self.tested.study_end
            )));
        }
        self.truth.validate()?;
        self.tested.validate()
    }

    pub fn design(&self) -> StudyDesign {
        design(&self.truth, self.n_subjects)
    }

    fn same_pair(&self, other: &Scenario) -> bool {
        self.truth == other.truth
            && self.tested == other.tested
            && self.studies == other.studies
            && self.k == other.k
            && self.master_seed == other.master_seed
    }
}

fn design(spec: &JointModelSpec, n: usize) -> StudyDesign {
    StudyDesign::equally_spaced(n, PLANNED_MEASUREMENTS, spec.study_end)
}

/// Rejection count with its exact (Clopper-Pearson) 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rate {
    pub rejections: usize,
    pub studies: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Rate {
    pub fn new(rejections: usize, studies: usize) -> Self {
        let (ci_low, ci_high) = clopper_pearson(rejections, studies, 0.95);
        Self { rejections, studies, rate: rejections as f64 / studies as f64, ci_low, ci_high }
    }
}

pub fn clopper_pearson(x: usize, n: usize, confidence: f64) -> (f64, f64) {
    let tail = (1.0 - confidence) / 2.0;
    let low = if x == 0 {
        0.0
    } else {
        Beta::new(x as f64, (n - x + 1) as f64).expect("positive shapes").inverse_cdf(tail)
    };
    let high = if x == n {
        1.0
    } else {
        Beta::new((x + 1) as f64, (n - x) as f64).expect("positive shapes").inverse_cdf(1.0 - tail)
    };
    (low, high)
}

/// Central 95% range of the rejection rate of `studies` tests at `level`,
/// from binomial quantiles.
pub fn type_one_interval(studies: usize, level: f64) -> (f64, f64) {
    let b = Binomial::new(level, studies as u64).expect("valid binomial");
    let quantile = |q: f64| (0..=studies as u64).find(|&x| b.cdf(x) >= q).unwrap_or(studies as u64);
    (quantile(0.025) as f64 / studies as f64, quantile(0.975) as f64 / studies as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeOneCheck {
    pub low: f64,
    pub high: f64,
    pub global_pass: bool,
    pub ks_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyOutcome {
    pub study: usize,
    pub seed: u64,
    pub global_reject: bool,
    pub global_min_p: f64,
    pub ks_reject: bool,
    pub ks_min_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub truth: String,
    pub tested: String,
    pub n_subjects: usize,
    pub k: usize,
    pub global: Rate,
    pub ks: Rate,
    /// Present when the true and tested models coincide.
    pub type_one: Option<TypeOneCheck>,
    pub outcomes: Vec<StudyOutcome>,
}

/// Residuals of one simulated study, at sample size `n`.
pub fn study_residuals(
    truth: &JointModelSpec,
    tested: &JointModelSpec,
    n: usize,
    k: usize,
    study_seed: &SeedSpec,
) -> Result<ResidualTable> {
    let design = design(truth, n);
    let observed = simulate_dataset(truth, &design, &study_seed.child(OBSERVED_STREAM))?;
    Ok(replicate_residuals(&observed, tested, &design, k, study_seed)?.1)
}

/// Residuals of the first `n` subjects.
pub fn residual_prefix(table: &ResidualTable, n: usize) -> ResidualTable {
    let tte = table.tte[..n.min(table.tte.len())].to_vec();
    let ids: HashSet<&str> = tte.iter().map(|r| r.id.as_str()).collect();
    ResidualTable {
        k: table.k,
        longitudinal: table.longitudinal.iter().filter(|r| ids.contains(r.id.as_str())).cloned().collect(),
        tte,
    }
}

fn outcome(study: usize, seed: u64, table: &ResidualTable) -> Result<StudyOutcome> {
    let (global, ks) = combined_tests(table)?;
    Ok(StudyOutcome {
        study,
        seed,
        global_reject: global.reject,
        global_min_p: global.min_p_value(),
        ks_reject: ks.reject,
        ks_min_p: ks.min_p_value(),
    })
}

fn summarise(scenario: &Scenario, outcomes: Vec<StudyOutcome>) -> ScenarioResult {
    let studies = outcomes.len();
    let global = Rate::new(outcomes.iter().filter(|o| o.global_reject).count(), studies);
    let ks = Rate::new(outcomes.iter().filter(|o| o.ks_reject).count(), studies);
    let type_one = (scenario.truth == scenario.tested).then(|| {
        let (low, high) = type_one_interval(studies, NOMINAL_LEVEL);
        let inside = |r: &Rate| low <= r.rate && r.rate <= high;
        TypeOneCheck { low, high, global_pass: inside(&global), ks_pass: inside(&ks) }
    });
    ScenarioResult {
        truth: scenario.truth_label.clone(),
        tested: scenario.tested_label.clone(),
        n_subjects: scenario.n_subjects,
        k: scenario.k,
        global,
        ks,
        type_one,
        outcomes,
    }
}

/// Runs scenarios that differ only in sample size from one simulation per
/// study at the largest size.
fn run_nested(group: &[&Scenario]) -> Result<Vec<ScenarioResult>> {
    let first = group[0];
    let n_max = group.iter().map(|s| s.n_subjects).max().expect("nonempty group");
    let master = SeedSpec::new(first.master_seed);
    let per_study: Vec<Vec<StudyOutcome>> = (0..first.studies)
        .into_par_iter()
        .map(|i| {
            let seed = master.child(i as u64);
            let wrap = |e: Error| Error::Study { study: i, seed: seed.master_seed, source: Box::new(e) };
            let table = study_residuals(&first.truth, &first.tested, n_max, first.k, &seed).map_err(wrap)?;
            group
                .iter()
                .map(|s| outcome(i, seed.master_seed, &residual_prefix(&table, s.n_subjects)).map_err(wrap))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(group
        .iter()
        .enumerate()
        .map(|(j, s)| summarise(s, per_study.iter().map(|o| o[j].clone()).collect()))
        .collect())
}

pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioResult> {
    scenario.validate()?;
    Ok(run_nested(&[scenario])?.remove(0))
}

/// Runs every scenario, sharing simulations between scenarios that differ
/// only in sample size. Results come back in input order.
pub fn run_scenarios(scenarios: &[Scenario]) -> Result<Vec<ScenarioResult>> {
    for s in scenarios {
        s.validate()?;
    }
    let mut results: Vec<Option<ScenarioResult>> = vec![None; scenarios.len()];
    let mut done = vec![false; scenarios.len()];
    for i in 0..scenarios.len() {
        if done[i] {
            continue;
        }
        let members: Vec<usize> = (i..scenarios.len()).filter(|&j| !done[j] && scenarios[i].same_pair(&scenarios[j])).collect();
        let group: Vec<&Scenario> = members.iter().map(|&j| &scenarios[j]).collect();
        for (j, r) in members.iter().zip(run_nested(&group)?) {
            done[*j] = true;
            results[*j] = Some(r);
        }
    }
    Ok(results.into_iter().map(|r| r.expect("every scenario ran")).collect())
}

fn shape_label(k: f64) -> String {
    format!("k={k}")
}

/// The published scenario grid of one family, crossed with `sizes`.
pub fn scenario_grid(family: Family, sizes: &[usize], studies: usize, k: usize, master_seed: u64) -> Vec<Scenario> {
    let base = JointModelSpec::base();
    let mut pairs: Vec<(String, JointModelSpec, String, JointModelSpec)> = Vec::new();
    match family {
        Family::ShapeK => {
            for truth in [1.0, 1.5] {
                for tested in [0.8, 1.0, 1.2, 1.5, 2.0] {
                    pairs.push((
                        shape_label(truth),
                        base.clone().with_shape(truth),
                        shape_label(tested),
                        base.clone().with_shape(tested),
                    ));
                }
            }
        }
        Family::Epsilon => {
            for tested in [0.15, 0.3, 0.45, 0.8] {
                pairs.push(("epsilon=0.3".into(), base.clone(), format!("epsilon={tested}"), base.clone().with_epsilon(tested)));
            }
        }
        Family::OmegaEpsilon => {
            for tested in [0.6, 1.0, 1.5] {
                pairs.push((
                    "omega_epsilon=1.5".into(),
                    base.clone(),
                    format!("omega_epsilon={tested}"),
                    base.clone().with_omega_epsilon(tested),
                ));
            }
        }
        Family::Association => {
            for truth in [AssociationKind::CurrentPsa, AssociationKind::SlopeLogPsa] {
                for tested in AssociationKind::ALL {
                    pairs.push((
                        truth.label().into(),
                        association_model(truth),
                        tested.label().into(),
                        association_model(tested),
                    ));
                }
            }
        }
    }
    pairs
        .into_iter()
        .flat_map(|(tl, truth, sl, tested)| {
            sizes.iter().map(move |&n| Scenario {
                truth_label: tl.clone(),
                tested_label: sl.clone(),
                truth: truth.clone(),
                tested: tested.clone(),
                n_subjects: n,
                studies,
                k,
                master_seed,
            })
        })
        .collect()
}

fn association_model(kind: AssociationKind) -> JointModelSpec {
    let mut spec = JointModelSpec::base().with_association(kind);
    spec.association.slope = SlopeScale::LogPsa;
    spec
}

/// Version of the scenario-config JSON schema (`schemas/scenario_config.schema.json`).
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRef {
    /// Path to a model-spec JSON file, relative to the config file.
    pub spec: PathBuf,
    /// Defaults to the file stem.
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub truth: ModelRef,
    pub tested: Vec<ModelRef>,
    #[serde(default)]
    pub n_subjects: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub scenarios: Vec<ScenarioEntry>,
    #[serde(default)]
    pub n_subjects: Option<Vec<usize>>,
    #[serde(default)]
    pub studies: Option<usize>,
    #[serde(default)]
    pub k_sim: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ScenarioConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("scenario config: {e}")))?;
        if config.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "scenario config: schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        if config.scenarios.is_empty() {
            return Err(Error::InvalidInput("scenario config: scenarios must not be empty".into()));
        }
        Ok(config)
    }

    /// Expands the config into scenarios; spec paths are resolved against `base_dir`.
    pub fn scenarios(&self, base_dir: &Path) -> Result<Vec<Scenario>> {
        let load = |m: &ModelRef| -> Result<(String, JointModelSpec)> {
            let path = base_dir.join(&m.spec);
            let spec = JointModelSpec::load(&path)
                .map_err(|e| Error::InvalidInput(format!("scenario config: spec {}: {e}", path.display())))?;
            let label = m.label.clone().unwrap_or_else(|| {
                m.spec.file_stem().map_or_else(|| m.spec.display().to_string(), |s| s.to_string_lossy().into_owned())
            });
            Ok((label, spec))
        };
        let mut out = Vec::new();
        for entry in &self.scenarios {
            let (truth_label, truth) = load(&entry.truth)?;
            let sizes = entry.n_subjects.as_ref().or(self.n_subjects.as_ref()).map_or(&SAMPLE_SIZES[..], Vec::as_slice);
            for tested in &entry.tested {
                let (tested_label, tested) = load(tested)?;
                for &n in sizes {
                    out.push(Scenario {
                        truth_label: truth_label.clone(),
                        tested_label: tested_label.clone(),
                        truth: truth.clone(),
                        tested: tested.clone(),
                        n_subjects: n,
                        studies: self.studies.unwrap_or(DEFAULT_STUDIES),
                        k: self.k_sim.unwrap_or(DEFAULT_K),
                        master_seed: self.seed.unwrap_or(0),
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Vec<Scenario>> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)?.scenarios(path.parent().unwrap_or(Path::new(".")))
    }
}

/// Writes results as `truth,tested,N,test,rejections,studies,rate,ci_low,ci_high`,
/// one row per scenario and combined test.
pub fn write_results_csv(results: &[ScenarioResult], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(["truth", "tested", "N", "test", "rejections", "studies", "rate", "ci_low", "ci_high"])
        .map_err(err)?;
    for r in results {
        for (test, rate) in [("global", &r.global), ("ks", &r.ks)] {
            w.write_record([
                r.truth.clone(),
                r.tested.clone(),
                r.n_subjects.to_string(),
                test.to_string(),
                rate.rejections.to_string(),
                rate.studies.to_string(),
                rate.rate.to_string(),
                rate.ci_low.to_string(),
                rate.ci_high.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush()?;
    Ok(())
}
