//! Quadrature and root-finding primitives.
//!
//! The integrator is a globally adaptive 7/15-point Gauss–Kronrod scheme in
//! the style of QUADPACK's QAG: the panel with the largest error estimate is
//! bisected until the summed error estimate meets the tolerance.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Default tolerances used for hazard integrals.
pub const REL_TOL: f64 = 1e-8;
pub const ABS_TOL: f64 = 1e-12;

const MAX_PANELS: usize = 400;

// Kronrod abscissae; the odd-indexed entries (1, 3, 5, 7) are the Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// An integral over one panel of an adaptive partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub lower: f64,
    pub upper: f64,
    pub value: f64,
    pub error: f64,
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// One 15-point Gauss–Kronrod pass over `[a, b]`: (integral, error estimate).
pub fn gauss_kronrod_15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = kronrod.abs();
    let mut values = [0.0; 14];
    for (j, &x) in XGK[..7].iter().enumerate() {
        let dx = half * x;
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        values[2 * j] = f1;
        values[2 * j + 1] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = kronrod * 0.5;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((values[2 * j] - mean).abs() + (values[2 * j + 1] - mean).abs());
    }
    let result = kronrod * half;
    let resasc = asc * half.abs();
    let resabs = abs_sum * half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (1.0f64).min((200.0 * err / resasc).powf(1.5));
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (result, err)
}

/// 7-point Gauss–Legendre rule on `[a, b]`; used on sub-intervals of panels
/// that already passed the adaptive error test.
pub fn gauss_legendre_7<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> f64 {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = WG[3] * f(centre);
    for (i, &w) in WG[..3].iter().enumerate() {
        let dx = half * XGK[2 * i + 1];
        sum += w * (f(centre - dx) + f(centre + dx));
    }
    sum * half
}

/// Adaptively partitions `[a, b]` until the summed error estimate is below
/// `max(abs_tol, rel_tol * |integral|)`. Panels are returned in order.
pub fn adaptive_partition<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Vec<Panel>> {
    if a == b {
        return Ok(vec![Panel {
            lower: a,
            upper: b,
            value: 0.0,
            error: 0.0,
        }]);
    }
    let (value, error) = gauss_kronrod_15(f, a, b);
    let mut panels = vec![Panel {
        lower: a,
        upper: b,
        value,
        error,
    }];
    loop {
        let (total, total_err) = panels
            .iter()
            .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        if !total.is_finite() || !total_err.is_finite() {
            return Err(Error::Quadrature {
                lower: a,
                upper: b,
                achieved: f64::INFINITY,
                requested: abs_tol,
            });
        }
        let target = abs_tol.max(rel_tol * total.abs());
        if total_err <= target {
            break;
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::Quadrature {
                lower: a,
                upper: b,
                achieved: total_err,
                requested: target,
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("partition is never empty");
        let p = panels[worst];
        let mid = 0.5 * (p.lower + p.upper);
        if mid <= p.lower || mid >= p.upper {
            // Panel width is at machine resolution; nothing left to refine.
            return Err(Error::Quadrature {
                lower: a,
                upper: b,
                achieved: total_err,
                requested: target,
            });
        }
        let (v1, e1) = gauss_kronrod_15(f, p.lower, mid);
        let (v2, e2) = gauss_kronrod_15(f, mid, p.upper);
        panels[worst] = Panel {
            lower: p.lower,
            upper: mid,
            value: v1,
            error: e1,
        };
        panels.insert(
            worst + 1,
            Panel {
                lower: mid,
                upper: p.upper,
                value: v2,
                error: e2,
            },
        );
    }
    Ok(panels)
}

/// Adaptive integral of `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Integral> {
    let mut calls = 0usize;
    let mut f = f;
    let mut counted = |x: f64| {
        calls += 1;
        f(x)
    };
    let panels = adaptive_partition(&mut counted, a, b, rel_tol, abs_tol)?;
    let (value, error) = panels
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    Ok(Integral {
        value,
        error,
        evaluations: calls,
    })
}

/// Adaptive integral over `[a, b]` with interior breakpoints where the
/// integrand is known to lose smoothness. Breakpoints outside `(a, b)` are ignored.
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Integral> {
    let mut nodes = vec![a];
    nodes.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    nodes.push(b);
    let mut total = Integral {
        value: 0.0,
        error: 0.0,
        evaluations: 0,
    };
    for w in nodes.windows(2) {
        let part = integrate(&mut f, w[0], w[1], rel_tol, abs_tol)?;
        total.value += part.value;
        total.error += part.error;
        total.evaluations += part.evaluations;
    }
    Ok(total)
}

/// Brent's method for a root of `f` in `[a, b]`, given a sign change.
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    x_tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::InvalidInput(format!(
            "root not bracketed: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * x_tol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(Error::RootFinding {
        iterations: max_iter,
        width: (c - b).abs(),
    })
}

fn unit_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Standard normal CDF Φ, accurate to a few ulps in both tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile Φ⁻¹(p). The statrs approximation is polished by
/// one Halley step so that Φ(Φ⁻¹(p)) reproduces `p` to rounding.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    if p > 0.5 {
        return -normal_quantile(1.0 - p);
    }
    let x = unit_normal().inverse_cdf(p);
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}
