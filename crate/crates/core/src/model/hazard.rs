//! Weibull hazard with a shared-parameter association, its integral and the
//! corresponding survival function.
//!
//! Cumulative hazards are integrated after the substitution `s = t^(k/2)`:
//!
//! ```text
//! H(t) = ∫₀ᵗ (k/λ)(x/λ)^(k-1) e^{βX(x)} dx = λ^(-k) ∫₀^(t^(k/2)) 2s·e^{βX(s^(2/k))} ds
//! ```
//!
//! The Weibull factor becomes the polynomial `2s`, which removes the origin
//! singularity when `k < 1`, and since PSA is flat at t = 0 the composed link
//! stays at least twice differentiable there for every shape up to 2.

use super::psa::PsaCurve;
use super::{
    AssociationFunction, AssociationKind, IndividualParameters, JointModelSpec, PsaConstants,
    SlopeScale,
};
use crate::error::{Error, Result};
use crate::numerics::{self, adaptive_partition, gauss_legendre_7, Panel};

/// Relative tolerance of the running PSA-AUC table.
const AUC_REL_TOL: f64 = 1e-12;
/// Maximum number of bracket extensions when inverting.
const MAX_EXTENSIONS: usize = 200;
/// Maximum number of safeguarded Newton steps inside the bracketing panel.
const MAX_ROOT_ITERATIONS: usize = 200;

/// Value of the association function X(t, ψ).
pub fn association_value(
    t: f64,
    psi: &IndividualParameters,
    association: &AssociationFunction,
    constants: &PsaConstants,
) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "association evaluated at negative time {t}"
        )));
    }
    let curve = PsaCurve::new(psi, constants);
    Ok(match association.kind {
        AssociationKind::AucLogPsa => {
            numerics::integrate_with_breaks(
                |x| curve.value(x).ln_1p(),
                0.0,
                t,
                &[psi.t_esc],
                numerics::REL_TOL,
                numerics::ABS_TOL,
            )?
            .value
        }
        kind => pointwise(kind, association.slope, t, psi, &curve),
    })
}

/// X(t) for every link except the AUC.
fn pointwise(
    kind: AssociationKind,
    slope: SlopeScale,
    t: f64,
    psi: &IndividualParameters,
    curve: &PsaCurve,
) -> f64 {
    match kind {
        AssociationKind::CurrentPsa => curve.value(t),
        AssociationKind::TEsc => psi.t_esc,
        AssociationKind::Psa0 => psi.psa0,
        AssociationKind::SlopeLogPsa => curve.slope(t, slope),
        AssociationKind::LogPsa => curve.value(t).ln_1p(),
        AssociationKind::AucLogPsa => {
            unreachable!("the AUC link is integrated, not evaluated pointwise")
        }
    }
}

/// Instantaneous hazard h(t) in day⁻¹.
pub fn hazard(t: f64, psi: &IndividualParameters, spec: &JointModelSpec) -> Result<f64> {
    let k = spec.shape();
    if !(t > 0.0 || (t == 0.0 && k >= 1.0)) {
        return Err(Error::InvalidInput(format!(
            "hazard is not finite at t = {t} for shape {k}"
        )));
    }
    let lambda = spec.scale();
    let x = association_value(t, psi, &spec.association, &spec.constants)?;
    Ok((k / lambda) * (t / lambda).powf(k - 1.0) * (spec.beta() * x).exp())
}

/// H(t) = ∫₀ᵗ h.
pub fn cumulative_hazard(t: f64, psi: &IndividualParameters, spec: &JointModelSpec) -> Result<f64> {
    CumulativeHazard::new(*psi, spec).cumulative(t)
}

/// S(t) = exp(−H(t)).
pub fn survival(t: f64, psi: &IndividualParameters, spec: &JointModelSpec) -> Result<f64> {
    Ok((-cumulative_hazard(t, psi, spec)?).exp())
}

/// Running ∫₀ᵗ log(PSA + 1), tabulated on adaptive panels and extended on demand.
#[derive(Debug, Clone)]
struct AucTable {
    curve: PsaCurve,
    t_esc: f64,
    panels: Vec<Panel>,
    /// AUC at each panel's lower bound.
    before: Vec<f64>,
}

impl AucTable {
    fn new(curve: PsaCurve, t_esc: f64) -> Self {
        Self {
            curve,
            t_esc,
            panels: Vec::new(),
            before: Vec::new(),
        }
    }

    fn horizon(&self) -> f64 {
        self.panels.last().map_or(0.0, |p| p.upper)
    }

    fn extend_to(&mut self, t: f64) -> Result<()> {
        let curve = self.curve;
        while self.horizon() < t {
            let from = self.horizon();
            let to = if from < self.t_esc {
                self.t_esc.min(t.max(from + 1.0))
            } else {
                t.max(2.0 * from).max(from + 1.0)
            };
            let mut total = self
                .before
                .last()
                .zip(self.panels.last())
                .map_or(0.0, |(b, p)| b + p.value);
            for p in adaptive_partition(
                &mut |x| curve.value(x).ln_1p(),
                from,
                to,
                AUC_REL_TOL,
                1e-14,
            )? {
                self.before.push(total);
                total += p.value;
                self.panels.push(p);
            }
        }
        Ok(())
    }

    fn value(&mut self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        self.extend_to(t)?;
        let i = self.panels.partition_point(|p| p.upper < t);
        let p = self.panels[i];
        let partial = if t == p.upper {
            p.value
        } else {
            let curve = self.curve;
            gauss_legendre_7(&mut |x| curve.value(x).ln_1p(), p.lower, t)
        };
        Ok(self.before[i] + partial)
    }
}

/// The transformed integrand 2s·e^{βX(s^(2/k))}.
#[derive(Debug, Clone, Copy)]
struct Integrand {
    psi: IndividualParameters,
    curve: PsaCurve,
    association: AssociationFunction,
    beta: f64,
    k: f64,
}

impl Integrand {
    fn time_of(&self, s: f64) -> f64 {
        if self.k == 2.0 {
            s
        } else {
            s.powf(2.0 / self.k)
        }
    }

    fn s_of(&self, t: f64) -> f64 {
        if self.k == 2.0 {
            t
        } else {
            t.powf(0.5 * self.k)
        }
    }

    fn at(&self, s: f64, auc: &mut AucTable) -> f64 {
        let t = self.time_of(s);
        let x = match self.association.kind {
            // An AUC failure can only come from a non-finite PSA, which the
            // enclosing partition reports as a quadrature error.
            AssociationKind::AucLogPsa => auc.value(t).unwrap_or(f64::NAN),
            kind => pointwise(kind, self.association.slope, t, &self.psi, &self.curve),
        };
        2.0 * s * (self.beta * x).exp()
    }
}

/// Cumulative hazard of one individual, evaluated and inverted through a
/// lazily built adaptive partition of the transformed time axis.
///
/// The partition and the PSA-AUC table are cached, so repeated evaluations
/// for the same individual are cheap.
#[derive(Debug, Clone)]
pub struct CumulativeHazard {
    integrand: Integrand,
    study_end: f64,
    /// λ^(-k)
    scale_factor: f64,
    /// e^{βX} when it is constant in time.
    constant_factor: Option<f64>,
    auc: AucTable,
    /// Panels on the s axis holding ∫ 2s·e^{βX} ds.
    panels: Vec<Panel>,
    before: Vec<f64>,
}

impl CumulativeHazard {
    pub fn new(psi: IndividualParameters, spec: &JointModelSpec) -> Self {
        let k = spec.shape();
        let beta = spec.beta();
        let curve = PsaCurve::new(&psi, &spec.constants);
        let constant_factor = match spec.association.kind {
            _ if beta == 0.0 => Some(1.0),
            AssociationKind::TEsc => Some((beta * psi.t_esc).exp()),
            AssociationKind::Psa0 => Some((beta * psi.psa0).exp()),
            _ => None,
        };
        Self {
            integrand: Integrand {
                psi,
                curve,
                association: spec.association,
                beta,
                k,
            },
            study_end: spec.study_end,
            scale_factor: spec.scale().powf(-k),
            constant_factor,
            auc: AucTable::new(curve, psi.t_esc),
            panels: Vec::new(),
            before: Vec::new(),
        }
    }

    fn covered(&self) -> f64 {
        self.panels.last().map_or(0.0, |p| p.upper)
    }

    fn total(&self) -> f64 {
        self.before
            .last()
            .zip(self.panels.last())
            .map_or(0.0, |(b, p)| b + p.value)
    }

    /// Appends the adaptive partition of [covered, s_to] on the s axis.
    fn append(&mut self, s_to: f64) -> Result<()> {
        let (integrand, from) = (self.integrand, self.covered());
        let auc = &mut self.auc;
        let panels = adaptive_partition(
            &mut |s| integrand.at(s, auc),
            from,
            s_to,
            numerics::REL_TOL,
            numerics::ABS_TOL,
        )?;
        let mut total = self.total();
        for p in panels {
            self.before.push(total);
            total += p.value;
            self.panels.push(p);
        }
        Ok(())
    }

    /// Extends coverage to time `t`, inserting a panel boundary at T_esc.
    fn append_time(&mut self, t: f64) -> Result<()> {
        let t_esc = self.integrand.psi.t_esc;
        let from = self.integrand.time_of(self.covered());
        if from < t_esc && t_esc < t {
            self.append(self.integrand.s_of(t_esc))?;
        }
        self.append(self.integrand.s_of(t))
    }

    /// ∫₀ˢ 2s·e^{βX} on the s axis; requires coverage of `s`.
    fn integral_to(&mut self, s: f64) -> f64 {
        let i = self
            .panels
            .partition_point(|p| p.upper < s)
            .min(self.panels.len() - 1);
        let p = self.panels[i];
        if s >= p.upper {
            return self.before[i] + p.value;
        }
        let integrand = self.integrand;
        let auc = &mut self.auc;
        self.before[i] + gauss_legendre_7(&mut |v| integrand.at(v, auc), p.lower, s)
    }

    /// H(t).
    pub fn cumulative(&mut self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || t.is_infinite() {
            return Err(Error::InvalidInput(format!(
                "cumulative hazard requested at time {t}"
            )));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let s = self.integrand.s_of(t);
        if let Some(factor) = self.constant_factor {
            return Ok(self.scale_factor * t.powf(self.integrand.k) * factor);
        }
        if self.covered() < s {
            match self.append_time(t) {
                Ok(()) => {}
                // e^{βX} overflowed: the hazard is infinite for practical purposes.
                Err(Error::Quadrature { upper, achieved, .. })
                    if !achieved.is_finite()
                        && self.integrand.at(upper, &mut self.auc) == f64::INFINITY =>
                {
                    return Ok(f64::INFINITY)
                }
                Err(e) => return Err(e),
            }
        }
        Ok(self.scale_factor * self.integral_to(s))
    }

    /// Solves H(T) = `target` for T. Coverage starts at the study end and
    /// doubles until it brackets the target; the root is then polished by
    /// Newton steps safeguarded by bisection inside the bracketing panel.
    pub fn invert(&mut self, target: f64) -> Result<f64> {
        if !(target >= 0.0) || !target.is_finite() {
            return Err(Error::InvalidInput(format!(
                "cannot invert cumulative hazard at {target}"
            )));
        }
        if target == 0.0 {
            return Ok(0.0);
        }
        let goal = target / self.scale_factor;
        if let Some(factor) = self.constant_factor {
            return Ok((goal / factor).powf(1.0 / self.integrand.k));
        }
        let mut extensions = 0;
        while self.panels.is_empty() || self.total() < goal {
            if extensions == MAX_EXTENSIONS {
                return Err(Error::RootFinding {
                    iterations: MAX_EXTENSIONS,
                    width: f64::INFINITY,
                });
            }
            extensions += 1;
            let mut to = if self.panels.is_empty() {
                self.study_end
            } else {
                2.0 * self.integrand.time_of(self.covered())
            };
            // Shorten the step while the integrand overflows or explodes; the
            // event then happens well before that point.
            loop {
                match self.append_time(to) {
                    Ok(()) => break,
                    Err(e) if e.is_numerical() => {
                        // Part of the step may have been covered before the failure.
                        let from = self.integrand.time_of(self.covered());
                        if to - from <= 1e-9 * to {
                            return Err(e);
                        }
                        to = from + 0.5 * (to - from);
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let i = self.before.partition_point(|&b| b < goal) - 1;
        let p = self.panels[i];
        let need = goal - self.before[i];
        let integrand = self.integrand;
        let auc = &mut self.auc;
        let partial = |s: f64, auc: &mut AucTable| {
            gauss_legendre_7(&mut |v| integrand.at(v, auc), p.lower, s)
        };
        // The 7-point sub-integral over the whole panel can fall short of the
        // Kronrod panel value by rounding; the root then sits on the boundary.
        if partial(p.upper, auc) <= need {
            return Ok(integrand.time_of(p.upper));
        }
        let (mut lo, mut hi) = (p.lower, p.upper);
        let mut s = p.lower + (p.upper - p.lower) * (need / p.value).clamp(0.0, 1.0);
        for _ in 0..MAX_ROOT_ITERATIONS {
            let g = partial(s, auc) - need;
            if g == 0.0 {
                return Ok(integrand.time_of(s));
            }
            if g < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let newton = s - g / integrand.at(s, auc);
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - s).abs() <= 1e-13 * s || hi - lo <= 1e-13 * hi {
                return Ok(integrand.time_of(next));
            }
            s = next;
        }
        Err(Error::RootFinding {
            iterations: MAX_ROOT_ITERATIONS,
            width: hi - lo,
        })
    }
}
