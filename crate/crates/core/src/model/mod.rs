//! Joint model definition: PSA kinetics, residual error, Weibull hazard and
//! the association between the two.
//!
//! A [`JointModelSpec`] is the serialisable description of a model. Individual
//! PSA parameters are drawn on a transformed scale (normal, log-normal or
//! logit-normal) and mapped back through [`transform_parameter`]; the hazard
//! shares them through one of the six [`AssociationKind`]s.

mod hazard;
mod psa;

pub use hazard::{association_value, cumulative_hazard, hazard, survival, CumulativeHazard};
pub use psa::{psa_derivative, psa_is_degenerate, psa_log_slope, psa_value, PsaCurve};

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Current version of the model-spec JSON schema (`schemas/joint_model_spec.schema.json`).
pub const SPEC_SCHEMA_VERSION: u32 = 1;

/// Scale on which a parameter's random effect acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Normal,
    LogNormal,
    LogitNormal,
}

impl Transform {
    fn check_domain(self, value: f64) -> Result<()> {
        let ok = value.is_finite()
            && match self {
                Transform::Normal => true,
                Transform::LogNormal => value > 0.0,
                Transform::LogitNormal => value > 0.0 && value < 1.0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{value} is outside the domain of the {self:?} transform"
            )))
        }
    }
}

/// Maps a typical value and a random effect to the individual parameter.
pub fn transform_parameter(fixed_effect: f64, eta: f64, transform: Transform) -> Result<f64> {
    transform.check_domain(fixed_effect)?;
    Ok(match transform {
        Transform::Normal => fixed_effect + eta,
        Transform::LogNormal => fixed_effect * eta.exp(),
        Transform::LogitNormal => {
            let z = (fixed_effect / (1.0 - fixed_effect)).ln() + eta;
            // Written so that neither tail rounds to exactly 0 or 1 too early.
            if z >= 0.0 {
                1.0 / (1.0 + (-z).exp())
            } else {
                let e = z.exp();
                e / (1.0 + e)
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub fixed_effect: f64,
    pub transform: Transform,
    /// Standard deviation of the random effect on the transformed scale.
    #[serde(default)]
    pub omega: f64,
}

impl ParameterSpec {
    pub fn new(name: &str, fixed_effect: f64, transform: Transform, omega: f64) -> Self {
        Self {
            name: name.to_string(),
            fixed_effect,
            transform,
            omega,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "parameter {}: omega must be >= 0",
                self.name
            )));
        }
        self.transform
            .check_domain(self.fixed_effect)
            .map_err(|e| Error::InvalidInput(format!("parameter {}: {e}", self.name)))
    }
}

/// The four PSA-kinetics parameters. Serialised as a list of [`ParameterSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParameterSpec>", into = "Vec<ParameterSpec>")]
pub struct PsaParameters {
    /// Growth rate of PSA-producing cells, day⁻¹.
    pub r: ParameterSpec,
    /// Baseline PSA, ng/mL.
    pub psa0: ParameterSpec,
    /// Treatment efficacy in (0, 1).
    pub epsilon: ParameterSpec,
    /// Time to treatment escape, days.
    pub t_esc: ParameterSpec,
}

impl PsaParameters {
    pub fn iter(&self) -> impl Iterator<Item = &ParameterSpec> {
        [&self.r, &self.psa0, &self.epsilon, &self.t_esc].into_iter()
    }
}

/// Weibull shape, scale and association strength. Serialised as a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParameterSpec>", into = "Vec<ParameterSpec>")]
pub struct TteParameters {
    pub k: ParameterSpec,
    pub lambda: ParameterSpec,
    pub beta: ParameterSpec,
}

fn take_named(list: &mut Vec<ParameterSpec>, name: &str) -> Result<ParameterSpec> {
    let pos = list
        .iter()
        .position(|p| p.name == name)
        .ok_or_else(|| Error::InvalidInput(format!("missing parameter `{name}`")))?;
    Ok(list.remove(pos))
}

fn reject_leftovers(list: &[ParameterSpec]) -> Result<()> {
    match list.first() {
        Some(p) => Err(Error::InvalidInput(format!(
            "unknown or duplicate parameter `{}`",
            p.name
        ))),
        None => Ok(()),
    }
}

impl TryFrom<Vec<ParameterSpec>> for PsaParameters {
    type Error = Error;
    fn try_from(mut list: Vec<ParameterSpec>) -> Result<Self> {
        let out = Self {
            r: take_named(&mut list, "r")?,
            psa0: take_named(&mut list, "psa0")?,
            epsilon: take_named(&mut list, "epsilon")?,
            t_esc: take_named(&mut list, "t_esc")?,
        };
        reject_leftovers(&list)?;
        Ok(out)
    }
}

impl From<PsaParameters> for Vec<ParameterSpec> {
    fn from(p: PsaParameters) -> Self {
        vec![p.r, p.psa0, p.epsilon, p.t_esc]
    }
}

impl TryFrom<Vec<ParameterSpec>> for TteParameters {
    type Error = Error;
    fn try_from(mut list: Vec<ParameterSpec>) -> Result<Self> {
        let out = Self {
            k: take_named(&mut list, "k")?,
            lambda: take_named(&mut list, "lambda")?,
            beta: take_named(&mut list, "beta")?,
        };
        reject_leftovers(&list)?;
        Ok(out)
    }
}

impl From<TteParameters> for Vec<ParameterSpec> {
    fn from(p: TteParameters) -> Self {
        vec![p.k, p.lambda, p.beta]
    }
}

/// Fixed turnover constants of the PSA model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsaConstants {
    /// Elimination rate of PSA-producing cells, day⁻¹.
    pub k_out: f64,
    /// PSA elimination rate, day⁻¹.
    pub delta: f64,
}

impl Default for PsaConstants {
    fn default() -> Self {
        Self {
            k_out: 0.046,
            delta: 0.23,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// sd = a
    Constant,
    /// sd = b·f
    Proportional,
    /// sd = a + b·f
    Combined,
}

/// Residual error model of the longitudinal observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub kind: ErrorKind,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
}

impl ErrorModel {
    pub fn proportional(b: f64) -> Self {
        Self {
            kind: ErrorKind::Proportional,
            a: 0.0,
            b,
        }
    }

    /// Standard deviation of the residual error around prediction `f`.
    pub fn sd(&self, f: f64) -> f64 {
        match self.kind {
            ErrorKind::Constant => self.a,
            ErrorKind::Proportional => self.b * f.abs(),
            ErrorKind::Combined => self.a + self.b * f.abs(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.b >= 0.0 && self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidInput(
                "error model coefficients must be finite and >= 0".into(),
            ));
        }
        let active = match self.kind {
            ErrorKind::Constant => self.a,
            ErrorKind::Proportional => self.b,
            ErrorKind::Combined => self.a + self.b,
        };
        if active == 0.0 {
            return Err(Error::InvalidInput(
                "error model coefficients are all zero".into(),
            ));
        }
        Ok(())
    }
}

/// Link between PSA kinetics and the hazard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationKind {
    /// X = PSA(t)
    CurrentPsa,
    /// X = T_esc
    TEsc,
    /// X = PSA₀
    Psa0,
    /// X = slope of PSA, see [`SlopeScale`]
    SlopeLogPsa,
    /// X = log(PSA(t) + 1)
    LogPsa,
    /// X = ∫₀ᵗ log(PSA + 1)
    AucLogPsa,
}

impl AssociationKind {
    pub const ALL: [AssociationKind; 6] = [
        AssociationKind::CurrentPsa,
        AssociationKind::TEsc,
        AssociationKind::Psa0,
        AssociationKind::SlopeLogPsa,
        AssociationKind::LogPsa,
        AssociationKind::AucLogPsa,
    ];

    /// Conventional model label (M_PSA, M_Tesc, ...).
    pub fn label(self) -> &'static str {
        match self {
            AssociationKind::CurrentPsa => "M_PSA",
            AssociationKind::TEsc => "M_Tesc",
            AssociationKind::Psa0 => "M_PSA0",
            AssociationKind::SlopeLogPsa => "M_dlnPSA",
            AssociationKind::LogPsa => "M_lnPSA",
            AssociationKind::AucLogPsa => "M_AUClnPSA",
        }
    }

    /// Whether X(t) is constant in time.
    pub fn is_time_constant(self) -> bool {
        matches!(self, AssociationKind::TEsc | AssociationKind::Psa0)
    }
}

/// Which derivative the slope association uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeScale {
    /// d log(PSA + 1) / dt
    #[default]
    LogPsa,
    /// dPSA / dt
    Psa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssociationFunction {
    pub kind: AssociationKind,
    #[serde(default)]
    pub slope: SlopeScale,
}

impl From<AssociationKind> for AssociationFunction {
    fn from(kind: AssociationKind) -> Self {
        Self {
            kind,
            slope: SlopeScale::default(),
        }
    }
}

fn default_schema_version() -> u32 {
    SPEC_SCHEMA_VERSION
}

fn default_study_end() -> f64 {
    365.0
}

/// Full parametric description of a joint model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointModelSpec {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub psa_parameters: PsaParameters,
    #[serde(default)]
    pub constants: PsaConstants,
    pub error_model: ErrorModel,
    pub tte_parameters: TteParameters,
    pub association: AssociationFunction,
    /// Covariate coefficient α of the hazard. Accepted for schema
    /// completeness; only 0 is supported.
    #[serde(default)]
    pub covariate_coefficient: f64,
    #[serde(default = "default_study_end")]
    pub study_end: f64,
}

impl JointModelSpec {
    /// Base PSA/survival model: population values of the reference study,
    /// current-PSA link and a 20% proportional residual error.
    pub fn base() -> Self {
        Self {
            schema_version: SPEC_SCHEMA_VERSION,
            psa_parameters: PsaParameters {
                r: ParameterSpec::new("r", 0.05, Transform::LogNormal, 0.1),
                psa0: ParameterSpec::new("psa0", 80.0, Transform::LogNormal, 0.6),
                epsilon: ParameterSpec::new("epsilon", 0.3, Transform::LogitNormal, 1.5),
                t_esc: ParameterSpec::new("t_esc", 140.0, Transform::LogNormal, 0.6),
            },
            constants: PsaConstants::default(),
            error_model: ErrorModel::proportional(0.2),
            tte_parameters: TteParameters {
                k: ParameterSpec::new("k", 1.5, Transform::LogNormal, 0.0),
                lambda: ParameterSpec::new("lambda", 580.0, Transform::LogNormal, 0.0),
                beta: ParameterSpec::new("beta", 0.001, Transform::LogNormal, 0.0),
            },
            association: AssociationKind::CurrentPsa.into(),
            covariate_coefficient: 0.0,
            study_end: 365.0,
        }
    }

    pub fn with_association(mut self, kind: AssociationKind) -> Self {
        self.association = kind.into();
        self
    }

    pub fn with_shape(mut self, k: f64) -> Self {
        self.tte_parameters.k.fixed_effect = k;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.psa_parameters.epsilon.fixed_effect = epsilon;
        self
    }

    pub fn with_omega_epsilon(mut self, omega: f64) -> Self {
        self.psa_parameters.epsilon.omega = omega;
        self
    }

    /// Removes all inter-individual variability.
    pub fn without_variability(mut self) -> Self {
        for p in [
            &mut self.psa_parameters.r,
            &mut self.psa_parameters.psa0,
            &mut self.psa_parameters.epsilon,
            &mut self.psa_parameters.t_esc,
        ] {
            p.omega = 0.0;
        }
        self
    }

    /// Weibull shape k.
    pub fn shape(&self) -> f64 {
        self.tte_parameters.k.fixed_effect
    }

    /// Weibull scale λ, days.
    pub fn scale(&self) -> f64 {
        self.tte_parameters.lambda.fixed_effect
    }

    /// Association strength β.
    pub fn beta(&self) -> f64 {
        self.tte_parameters.beta.fixed_effect
    }

    /// Checks that the spec is simulable.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SPEC_SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported schema_version {} (expected {SPEC_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for p in self.psa_parameters.iter() {
            p.validate()?;
        }
        for p in [
            &self.tte_parameters.k,
            &self.tte_parameters.lambda,
            &self.tte_parameters.beta,
        ] {
            p.validate()?;
            if p.omega != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "parameter {}: the time-to-event submodel has no inter-individual variability",
                    p.name
                )));
            }
        }
        if !(self.shape() > 0.0 && self.scale() > 0.0) {
            return Err(Error::InvalidInput(
                "Weibull shape and scale must be > 0".into(),
            ));
        }
        self.error_model.validate()?;
        if !(self.constants.k_out > 0.0 && self.constants.delta > 0.0) {
            return Err(Error::InvalidInput("k_out and delta must be > 0".into()));
        }
        if self.covariate_coefficient != 0.0 {
            return Err(Error::InvalidInput(
                "covariate_coefficient must be 0".into(),
            ));
        }
        if !(self.study_end > 0.0 && self.study_end.is_finite()) {
            return Err(Error::InvalidInput("study_end must be > 0".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec always serialises")
    }
}

/// Individual PSA parameters on the natural scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndividualParameters {
    pub r: f64,
    pub psa0: f64,
    pub epsilon: f64,
    pub t_esc: f64,
}

impl IndividualParameters {
    /// Parameters with all random effects at zero.
    pub fn typical(spec: &JointModelSpec) -> Self {
        let p = &spec.psa_parameters;
        Self {
            r: p.r.fixed_effect,
            psa0: p.psa0.fixed_effect,
            epsilon: p.epsilon.fixed_effect,
            t_esc: p.t_esc.fixed_effect,
        }
    }
}

impl fmt::Display for IndividualParameters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "r={}, psa0={}, epsilon={}, t_esc={}",
            self.r, self.psa0, self.epsilon, self.t_esc
        )
    }
}
