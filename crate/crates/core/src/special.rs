//! Bessel functions of real order and the Fourier transform of spherical
//! surface measure.
//!
//! `J_s(t)` is evaluated by its power series up to a switch point
//! `t* = max(12, 2s)`. Beyond it Steed's continued-fraction method is used,
//! and for very large arguments the Hankel asymptotic expansion.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};

/// Order `s ≥ 0` of a Bessel function of the first kind.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct BesselOrder(f64);

impl BesselOrder {
    pub fn new(s: f64) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("bessel order {s}")));
        }
        if s < 0.0 {
            return Err(invalid(format!("bessel order must be >= 0, got {s}")));
        }
        Ok(Self(s))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Dimension `n ≥ 1` of the sphere `𝕊ⁿ ⊂ ℝⁿ⁺¹`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SphereDim(u32);

impl SphereDim {
    pub fn new(n: u32) -> Result<Self> {
        if n < 1 {
            return Err(invalid("sphere dimension must be >= 1"));
        }
        Ok(Self(n))
    }

    pub fn value(self) -> u32 {
        self.0
    }
}

/// Argument at and below which the power series is used.
pub fn series_switch_point(s: f64) -> f64 {
    f64::max(12.0, 2.0 * s)
}

fn hankel_switch_point(s: f64) -> f64 {
    f64::max(40.0, 2.0 * s * s)
}

fn check_arg(t: f64) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::NonFinite(format!("bessel argument {t}")));
    }
    if t < 0.0 {
        return Err(invalid(format!("bessel argument must be >= 0, got {t}")));
    }
    Ok(())
}

/// `J_s(t)` for `s ≥ 0`, `t ≥ 0`.
pub fn bessel_j(order: BesselOrder, t: f64) -> Result<f64> {
    check_arg(t)?;
    Ok(j_unchecked(order.0, t))
}

/// `t^{-s} J_s(t)`, continuous at `t = 0` where it equals `1/(2^s Γ(s+1))`.
pub fn scaled_bessel(order: BesselOrder, t: f64) -> Result<f64> {
    check_arg(t)?;
    let s = order.0;
    Ok(scaled_unchecked(s, t, series_lead(s)))
}

fn series_lead(s: f64) -> f64 {
    1.0 / (2f64.powf(s) * gamma(s + 1.0))
}

pub(crate) fn j_unchecked(s: f64, t: f64) -> f64 {
    if t <= series_switch_point(s) {
        if t == 0.0 {
            return if s == 0.0 { 1.0 } else { 0.0 };
        }
        t.powf(s) * scaled_series(s, t, series_lead(s))
    } else {
        j_large(s, t)
    }
}

fn scaled_unchecked(s: f64, t: f64, lead: f64) -> f64 {
    if t <= series_switch_point(s) {
        scaled_series(s, t, lead)
    } else {
        j_large(s, t) / t.powf(s)
    }
}

/// Power series of `t^{-s} J_s(t)`; `lead` is its `k = 0` term.
pub(crate) fn scaled_series(s: f64, t: f64, lead: f64) -> f64 {
    let q = -0.25 * t * t;
    let mut term = lead;
    let mut sum = lead;
    let mut k = 1.0;
    while k < 500.0 {
        term *= q / (k * (k + s));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() && k > 0.5 * t {
            break;
        }
        k += 1.0;
    }
    sum
}

pub(crate) fn j_large(s: f64, t: f64) -> f64 {
    if t >= hankel_switch_point(s) {
        hankel(s, t)
    } else {
        steed(s, t)
    }
}

/// Hankel asymptotic expansion, truncated at the smallest term.
fn hankel(s: f64, t: f64) -> f64 {
    let mu = 4.0 * s * s;
    let eight_t = 8.0 * t;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= (mu - odd * odd) / (kf * eight_t);
        let mag = term.abs();
        if mag > prev {
            break;
        }
        // a_k / t^k enters P (even k) or Q (odd k) with alternating signs
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if mag < 1e-17 {
            break;
        }
        prev = mag;
    }
    let chi = t - (0.5 * s + 0.25) * PI;
    (2.0 / (PI * t)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Steed's method (continued fractions CF1 and CF2) for `x ≥ 2`.
fn steed(nu: f64, x: f64) -> f64 {
    const MAXIT: usize = 100_000;
    const EPS: f64 = 1e-16;
    const FPMIN: f64 = 1e-290;

    let nl = (nu - x + 1.5).floor().max(0.0) as usize;
    let xmu = nu - nl as f64;
    let xmu2 = xmu * xmu;
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;
    let w = xi2 / PI;

    // CF1: J'_nu / J_nu
    let mut isign = 1.0;
    let mut h = (nu * xi).max(FPMIN);
    let mut b = xi2 * nu;
    let mut d = 0.0;
    let mut c = h;
    for _ in 0..MAXIT {
        b += xi2;
        d = b - d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b - 1.0 / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = c * d;
        h *= del;
        if d < 0.0 {
            isign = -isign;
        }
        if (del - 1.0).abs() < EPS {
            break;
        }
    }

    // downward recurrence from nu to mu = nu - nl
    let mut rjl = isign * FPMIN;
    let mut rjpl = h * rjl;
    let rjl1 = rjl;
    let mut fact = nu * xi;
    for _ in 0..nl {
        let rjtemp = fact * rjl + rjpl;
        fact -= xi;
        rjpl = fact * rjtemp - rjl;
        rjl = rjtemp;
    }
    if rjl == 0.0 {
        rjl = EPS;
    }
    let f = rjpl / rjl;

    // CF2: p + iq
    let mut a = 0.25 - xmu2;
    let mut p = -0.5 * xi;
    let mut q = 1.0;
    let br = 2.0 * x;
    let mut bi = 2.0;
    let fact = a * xi / (p * p + q * q);
    let mut cr = br + q * fact;
    let mut ci = bi + p * fact;
    let den = br * br + bi * bi;
    let mut dr = br / den;
    let mut di = -bi / den;
    let mut dlr = cr * dr - ci * di;
    let mut dli = cr * di + ci * dr;
    let temp = p * dlr - q * dli;
    q = p * dli + q * dlr;
    p = temp;
    for i in 1..MAXIT {
        a += 2.0 * i as f64;
        bi += 2.0;
        dr = a * dr + br;
        di = a * di + bi;
        if dr.abs() + di.abs() < FPMIN {
            dr = FPMIN;
        }
        let fact = a / (cr * cr + ci * ci);
        cr = br + cr * fact;
        ci = bi - ci * fact;
        if cr.abs() + ci.abs() < FPMIN {
            cr = FPMIN;
        }
        let den = dr * dr + di * di;
        dr /= den;
        di /= -den;
        dlr = cr * dr - ci * di;
        dli = cr * di + ci * dr;
        let temp = p * dlr - q * dli;
        q = p * dli + q * dlr;
        p = temp;
        if (dlr - 1.0).abs() + dli.abs() <= EPS {
            break;
        }
    }
    let gam = (p - f) / q;
    let rjmu = (w / ((p - f) * gam + q)).sqrt().copysign(rjl);
    rjl1 * (rjmu / rjl)
}

/// Normalized Fourier transform of surface measure on `𝕊ⁿ`: the average of
/// `exp(-2πi a θ·e)` over `θ ∈ 𝕊ⁿ` for a fixed unit `e`.
///
/// Equals `Γ(ν+1) (πa)^{-ν} J_ν(2πa)` with `ν = (n-1)/2`. Depends only on `|a|`.
pub fn normalized_sphere_ft(n: SphereDim, a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite(format!("sphere transform argument {a}")));
    }
    Ok(SphereFt::new(n).eval(a))
}

/// Reusable evaluator for [`normalized_sphere_ft`] with the order-dependent
/// constants precomputed.
#[derive(Clone, Copy, Debug)]
pub struct SphereFt {
    order: f64,
    lead: f64,
    scale: f64,
}

impl SphereFt {
    pub fn new(n: SphereDim) -> Self {
        let order = 0.5 * (n.0 as f64 - 1.0);
        let lead = series_lead(order);
        Self {
            order,
            lead,
            scale: 1.0 / lead,
        }
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    #[inline]
    pub fn eval(&self, a: f64) -> f64 {
        let t = 2.0 * PI * a.abs();
        self.scale * scaled_unchecked(self.order, t, self.lead)
    }
}
