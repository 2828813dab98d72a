//! Bi-exponential PSA kinetics.
//!
//! PSA-producing cells grow at `a = r(1-ε) - k_out` under treatment and at
//! `b = r - k_out` after escape at `T_esc`; PSA is produced proportionally and
//! eliminated at rate `δ`, starting at steady state. With `c(t)` the relative
//! cell count the system is
//!
//! ```text
//! c' = a·c (t <= T_esc), b·c (t > T_esc);   c(0) = 1
//! PSA' = δ·PSA₀·c − δ·PSA;                  PSA(0) = PSA₀
//! ```
//!
//! whose solution is written below in terms of `e^{-δs}(e^{xs} - 1)/x`,
//! which stays accurate when `x = a + δ` or `x = b + δ` approaches zero.

use super::{IndividualParameters, PsaConstants, SlopeScale};

/// Below this magnitude (day⁻¹) a rate sum is treated as degenerate and the
/// limiting series is used.
const DEGENERATE_RATE: f64 = 1e-10;

/// `e^{-δs}·(e^{xs} − 1)/x`, continuous through `x = 0`.
fn damped_exprel(x: f64, delta: f64, s: f64) -> f64 {
    if x.abs() < DEGENERATE_RATE {
        (-delta * s).exp() * s * (1.0 + 0.5 * x * s)
    } else if (x * s).abs() < 1.0 {
        (-delta * s).exp() * (x * s).exp_m1() / x
    } else {
        (((x - delta) * s).exp() - (-delta * s).exp()) / x
    }
}

fn rates(psi: &IndividualParameters, c: &PsaConstants) -> (f64, f64) {
    (psi.r * (1.0 - psi.epsilon) - c.k_out, psi.r - c.k_out)
}

/// True when either closed-form denominator `r(1−ε) − k_out + δ` or
/// `r − k_out + δ` is close enough to zero that the limiting form is used.
pub fn psa_is_degenerate(psi: &IndividualParameters, c: &PsaConstants) -> bool {
    let (a, b) = rates(psi, c);
    (a + c.delta).abs() < DEGENERATE_RATE || (b + c.delta).abs() < DEGENERATE_RATE
}

/// The PSA trajectory of one individual, with the quantities at escape
/// precomputed for repeated evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsaCurve {
    psa0: f64,
    t_esc: f64,
    delta: f64,
    a: f64,
    b: f64,
    psa_at_escape: f64,
    /// Relative cell count at escape, e^{a·T_esc}.
    cells_at_escape: f64,
}

impl PsaCurve {
    pub fn new(psi: &IndividualParameters, c: &PsaConstants) -> Self {
        let (a, b) = rates(psi, c);
        let mut curve = Self {
            psa0: psi.psa0,
            t_esc: psi.t_esc,
            delta: c.delta,
            a,
            b,
            psa_at_escape: 0.0,
            cells_at_escape: (a * psi.t_esc).exp(),
        };
        curve.psa_at_escape = curve.before_escape(psi.t_esc);
        curve
    }

    fn before_escape(&self, t: f64) -> f64 {
        self.psa0
            * ((-self.delta * t).exp()
                + self.delta * damped_exprel(self.a + self.delta, self.delta, t))
    }

    /// PSA concentration (ng/mL) at time `t` (days).
    pub fn value(&self, t: f64) -> f64 {
        if t <= self.t_esc {
            return self.before_escape(t);
        }
        let s = t - self.t_esc;
        (-self.delta * s).exp() * self.psa_at_escape
            + self.delta
                * self.psa0
                * self.cells_at_escape
                * damped_exprel(self.b + self.delta, self.delta, s)
    }

    /// dPSA/dt; continuous, with a kink in the second derivative at `T_esc`.
    pub fn derivative(&self, t: f64) -> f64 {
        let cells = if t <= self.t_esc {
            (self.a * t).exp()
        } else {
            self.cells_at_escape * (self.b * (t - self.t_esc)).exp()
        };
        self.delta * (self.psa0 * cells - self.value(t))
    }

    /// Slope of PSA on the requested scale: d log(PSA + 1)/dt or dPSA/dt.
    pub fn slope(&self, t: f64, scale: SlopeScale) -> f64 {
        let d = self.derivative(t);
        match scale {
            SlopeScale::LogPsa => d / (self.value(t) + 1.0),
            SlopeScale::Psa => d,
        }
    }
}

/// PSA concentration (ng/mL) at time `t` (days).
pub fn psa_value(t: f64, psi: &IndividualParameters, c: &PsaConstants) -> f64 {
    PsaCurve::new(psi, c).value(t)
}

/// dPSA/dt.
pub fn psa_derivative(t: f64, psi: &IndividualParameters, c: &PsaConstants) -> f64 {
    PsaCurve::new(psi, c).derivative(t)
}

/// Slope of PSA on the requested scale: d log(PSA + 1)/dt or dPSA/dt.
pub fn psa_log_slope(
    t: f64,
    psi: &IndividualParameters,
    c: &PsaConstants,
    scale: SlopeScale,
) -> f64 {
    PsaCurve::new(psi, c).slope(t, scale)
}
