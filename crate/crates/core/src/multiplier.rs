//! The Fourier multiplier `m(ξ,δ,η) = E_R exp(−2πi[ξ·Re₁ + δ·Rv₀ + η·Rw₀])`
//! by full group Monte Carlo, by outer Monte Carlo over `Re₁` with the inner
//! stabilizer average done by quadrature, and by a fully deterministic triple
//! quadrature. Also the decay bound and the decay scan.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::manifold::{V_A, V_B, W_A, W_B, W_C};
use crate::quadrature::{QuadratureSpec, WeightedRule};
use crate::rng::RngStream;
use crate::rotation::{
    reduce_frequencies, reduce_frequencies_lenient, sample_frame_with, ReducedFrame, Rotation,
};
use crate::special::{SphereDim, SphereFt};
use crate::stats::{run_blocks, ComplexMeanVar, MeanVar};

const TWO_PI: f64 = 2.0 * PI;
const SQRT3_2: f64 = V_B;
const INV_2SQRT3: f64 = W_B;
const SQRT2_3: f64 = W_C;

/// Default Monte Carlo sample count.
pub const DEFAULT_SAMPLES: usize = 100_000;

/// Absolute error allowed for the deterministic reduced route.
pub const QUADRATURE_TOLERANCE: f64 = 1e-9;

/// A point `(ξ, δ, η) ∈ ℝᵈ×ℝᵈ×ℝᵈ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTriple {
    pub xi: Vec<f64>,
    pub delta: Vec<f64>,
    pub eta: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl FrequencyTriple {
    pub fn new(xi: Vec<f64>, delta: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        if xi.len() != delta.len() || xi.len() != eta.len() {
            return Err(invalid("xi, delta, eta must have equal length"));
        }
        if xi.iter().chain(&delta).chain(&eta).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("frequency triple".into()));
        }
        Ok(Self { xi, delta, eta })
    }

    pub fn origin(d: usize) -> Self {
        Self {
            xi: vec![0.0; d],
            delta: vec![0.0; d],
            eta: vec![0.0; d],
        }
    }

    /// Splits `3d` values as `(ξ, δ, η)`.
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.is_empty() || !values.len().is_multiple_of(3) {
            return Err(invalid(format!("expected 3d values, got {}", values.len())));
        }
        let d = values.len() / 3;
        Self::new(
            values[..d].to_vec(),
            values[d..2 * d].to_vec(),
            values[2 * d..].to_vec(),
        )
    }

    pub fn flat(&self) -> Vec<f64> {
        self.xi
            .iter()
            .chain(&self.delta)
            .chain(&self.eta)
            .copied()
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    /// `|(ξ, δ, η)|` in `ℝ^{3d}`.
    pub fn norm(&self) -> f64 {
        (dot(&self.xi, &self.xi) + dot(&self.delta, &self.delta) + dot(&self.eta, &self.eta)).sqrt()
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        let s = |v: &[f64]| v.iter().map(|x| lambda * x).collect();
        Self {
            xi: s(&self.xi),
            delta: s(&self.delta),
            eta: s(&self.eta),
        }
    }

    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    pub fn rotated(&self, q: &Rotation) -> Self {
        Self {
            xi: q.apply(&self.xi),
            delta: q.apply(&self.delta),
            eta: q.apply(&self.eta),
        }
    }

    /// Gaussian direction rescaled to joint norm `radius`.
    pub fn random<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Self {
        let v: Vec<f64> = (0..3 * d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v: Vec<f64> = v.iter().map(|x| radius * x / n).collect();
        Self::from_flat(&v).expect("3d finite values")
    }

    /// Coefficient vectors of `(f₁, f₂, f₃)` in the phase:
    /// `ξ·u + δ·v + η·w = A·f₁ + B·f₂ + C·f₃`.
    fn frame_coefficients(&self) -> [Vec<f64>; 3] {
        let d = self.dim();
        let a = (0..d)
            .map(|k| self.xi[k] + V_A * self.delta[k] + W_A * self.eta[k])
            .collect();
        let b = (0..d)
            .map(|k| V_B * self.delta[k] + W_B * self.eta[k])
            .collect();
        let c = (0..d).map(|k| W_C * self.eta[k]).collect();
        [a, b, c]
    }

    /// Errors unless `d >= 4`, the range where the multiplier is defined.
    pub fn check_dim(&self) -> Result<()> {
        if self.dim() < 4 {
            return Err(invalid("multiplier requires d >= 4"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mc,
    Hybrid,
    Reduced,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MultiplierEstimate {
    pub value: Complex64,
    /// Standard error of the modulus, `hypot(stderr_re, stderr_im)`.
    pub stderr: f64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub method: Method,
}

impl MultiplierEstimate {
    fn exact(value: Complex64, method: Method) -> Self {
        Self {
            value,
            stderr: 0.0,
            stderr_re: 0.0,
            stderr_im: 0.0,
            method,
        }
    }

    fn from_components(acc: &ComplexMeanVar, method: Method) -> Self {
        let e = acc.estimate();
        Self {
            value: e.value,
            stderr: e.stderr(),
            stderr_re: e.stderr_re,
            stderr_im: e.stderr_im,
            method,
        }
    }

    /// Largest per-component deviation in units of the combined standard
    /// error. Zero-width comparisons give 0 or infinity.
    pub fn z_score(&self, other: &MultiplierEstimate) -> f64 {
        let z = |a: f64, b: f64, sa: f64, sb: f64| {
            let s = sa.hypot(sb);
            let diff = (a - b).abs();
            if s > 0.0 {
                diff / s
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        };
        z(
            self.value.re,
            other.value.re,
            self.stderr_re,
            other.stderr_re,
        )
        .max(z(
            self.value.im,
            other.value.im,
            self.stderr_im,
            other.stderr_im,
        ))
    }

    /// Per-component `|a − b| ≤ k·σ + τ`, where `τ` is
    /// [`QUADRATURE_TOLERANCE`] when either side is a reduced (deterministic)
    /// value and 0 otherwise.
    pub fn agrees_with(&self, other: &MultiplierEstimate, k: f64) -> bool {
        let tau = if self.method == Method::Reduced || other.method == Method::Reduced {
            QUADRATURE_TOLERANCE
        } else {
            0.0
        };
        let ok = |a: f64, b: f64, sa: f64, sb: f64| (a - b).abs() <= k * sa.hypot(sb) + tau;
        ok(
            self.value.re,
            other.value.re,
            self.stderr_re,
            other.stderr_re,
        ) && ok(
            self.value.im,
            other.value.im,
            self.stderr_im,
            other.stderr_im,
        )
    }
}

/// Group Monte Carlo: averages the full phase over `n` Haar samples.
pub fn multiplier_mc(
    point: &FrequencyTriple,
    n: usize,
    stream: RngStream,
) -> Result<MultiplierEstimate> {
    point.check_dim()?;
    if n < 1000 {
        return Err(invalid("multiplier_mc requires n >= 1000"));
    }
    let d = point.dim();
    let [a, b, c] = point.frame_coefficients();
    let acc: ComplexMeanVar = run_blocks(n, stream, |rng, count, _| {
        let mut acc = ComplexMeanVar::default();
        for _ in 0..count {
            let f = sample_frame_with(d, 3, rng);
            let phase = dot(&a, &f[0]) + dot(&b, &f[1]) + dot(&c, &f[2]);
            acc.push(Complex64::from_polar(1.0, -TWO_PI * phase));
        }
        acc
    });
    Ok(MultiplierEstimate::from_components(&acc, Method::Mc))
}

/// Geometry of the inner stabilizer integral as a function of `f₁ = Re₁`,
/// in the frame where `η ∥ e₂` and `δ ∈ span(e₁, e₂)`:
/// `M² = 1 − (e₂·f₁)²`, `N² = 1 − (e₁·f₁)²`,
/// `cos θ′·M·N = (e₁·f₁)(e₂·f₁)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InnerGeometry {
    pub m_r: f64,
    pub n_r: f64,
    pub cos_theta_prime: f64,
}

impl InnerGeometry {
    pub fn new(m_r: f64, n_r: f64, cos_theta_prime: f64) -> Result<Self> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(m_r) || !unit(n_r) || !(-1.0..=1.0).contains(&cos_theta_prime) {
            return Err(invalid("inner geometry out of range"));
        }
        Ok(Self {
            m_r,
            n_r,
            cos_theta_prime,
        })
    }

    /// From `x = e₁·f₁` and `y = e₂·f₁`.
    pub fn from_components(x: f64, y: f64) -> Self {
        let m_r = (1.0 - y * y).max(0.0).sqrt();
        let n_r = (1.0 - x * x).max(0.0).sqrt();
        let mn = m_r * n_r;
        let cos_theta_prime = if mn > 0.0 {
            (x * y / mn).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        Self {
            m_r,
            n_r,
            cos_theta_prime,
        }
    }

    fn n_cos(&self) -> f64 {
        self.n_r * self.cos_theta_prime
    }

    fn n_sin(&self) -> f64 {
        self.n_r
            * (1.0 - self.cos_theta_prime * self.cos_theta_prime)
                .max(0.0)
                .sqrt()
    }
}

/// Arguments of the inner radial integral
/// `∫ cos(2πβ₁√(1−r²)) σ̂(β₂ r) σ̂(γ r) r^{d−3}(1−r²)^{−1/2} dr`.
#[derive(Clone, Copy, Debug)]
struct InnerArgs {
    beta1: f64,
    beta2: f64,
    gamma: f64,
}

/// Norms and angles of `δ`, `η` entering the inner integral.
#[derive(Clone, Copy, Debug)]
struct InnerCoefficients {
    /// `(√3/2)|δ|a₂ + |η|/(2√3)`: multiplies `M`.
    along: f64,
    /// `(√3/2)|δ|a₃`: multiplies `N cos θ′` and `N sin θ′`.
    across: f64,
    /// `√(2/3)|η|`: multiplies `M`.
    height: f64,
}

impl InnerCoefficients {
    fn new(delta_norm: f64, eta_norm: f64, a2: f64, a3: f64) -> Self {
        Self {
            along: SQRT3_2 * delta_norm * a2 + INV_2SQRT3 * eta_norm,
            across: SQRT3_2 * delta_norm * a3,
            height: SQRT2_3 * eta_norm,
        }
    }

    fn args(&self, m: f64, n_cos: f64, n_sin: f64) -> InnerArgs {
        InnerArgs {
            beta1: self.along * m + self.across * n_cos,
            beta2: self.across * n_sin,
            gamma: self.height * m,
        }
    }
}

/// The normalized radial rule and sphere transform shared by the inner
/// integral evaluations.
struct RadialKernel {
    rule: WeightedRule,
    inv_total: f64,
    ft: SphereFt,
}

impl RadialKernel {
    fn new(d: usize, spec: &QuadratureSpec) -> Result<Self> {
        let rule = WeightedRule::new(d as u32 - 3, spec)?;
        let inv_total = 1.0 / rule.total_weight();
        Ok(Self {
            rule,
            inv_total,
            ft: SphereFt::new(SphereDim::new(d as u32 - 3)?),
        })
    }

    fn eval(&self, a: InnerArgs) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.rule.len() {
            let (x, c) = (self.rule.x[i], self.rule.c[i]);
            acc += self.rule.w[i]
                * (TWO_PI * a.beta1 * c).cos()
                * self.ft.eval(a.beta2 * x)
                * self.ft.eval(a.gamma * x);
        }
        acc * self.inv_total
    }

    /// Both sign branches of `β₁ = b ± e`, sharing the Bessel factors.
    fn eval_pair(&self, b: f64, e: f64, beta2: f64, gamma: f64) -> (f64, f64) {
        let (mut plus, mut minus) = (0.0, 0.0);
        for i in 0..self.rule.len() {
            let (x, c) = (self.rule.x[i], self.rule.c[i]);
            let common = self.rule.w[i] * self.ft.eval(beta2 * x) * self.ft.eval(gamma * x);
            plus += common * (TWO_PI * (b + e) * c).cos();
            minus += common * (TWO_PI * (b - e) * c).cos();
        }
        (plus * self.inv_total, minus * self.inv_total)
    }
}

fn check_frame_values(delta_norm: f64, eta_norm: f64, a2: f64, a3: f64) -> Result<()> {
    if [delta_norm, eta_norm, a2, a3]
        .iter()
        .any(|x| !x.is_finite())
    {
        return Err(Error::NonFinite("inner integral arguments".into()));
    }
    if delta_norm < 0.0 || eta_norm < 0.0 {
        return Err(invalid("norms must be nonnegative"));
    }
    Ok(())
}

/// Average over the stabilizer of `f₁` of `exp(−2πi[B·f₂ + C·f₃])`, as the
/// normalized radial integral
/// `(1/W) ∫₀¹ cos(2πβ₁√(1−r²)) σ̂(β₂r) σ̂(√(2/3)|η|M r) r^{d−3}(1−r²)^{−1/2} dr`
/// with `β₁ = (√3/2)|δ|(a₂M + a₃N cos θ′) + |η|M/(2√3)`,
/// `β₂ = (√3/2)|δ|a₃ N sin θ′` and `W` the weight's total mass.
pub fn inner_reduced(
    geom: InnerGeometry,
    delta_norm: f64,
    eta_norm: f64,
    a2: f64,
    a3: f64,
    d: usize,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if d < 4 {
        return Err(invalid("inner_reduced requires d >= 4"));
    }
    check_frame_values(delta_norm, eta_norm, a2, a3)?;
    let geom = InnerGeometry::new(geom.m_r, geom.n_r, geom.cos_theta_prime)?;
    let kernel = RadialKernel::new(d, spec)?;
    let coeffs = InnerCoefficients::new(delta_norm, eta_norm, a2, a3);
    Ok(kernel.eval(coeffs.args(geom.m_r, geom.n_cos(), geom.n_sin())))
}

/// Coefficients of `(e₁·f₁, e₂·f₁, e₃·f₁)` in the outer phase once the frame
/// is placed as `ξ = |ξ|(b₁e₃ + b₂e₂ − b₃e₁)`, `δ = |δ|(a₂e₂ − a₃e₁)`,
/// `η = |η|e₂`.
fn outer_coefficients(f: &ReducedFrame) -> [f64; 3] {
    [
        -f.xi_norm * f.b3 - 0.5 * f.delta_norm * f.a3,
        f.xi_norm * f.b2 + 0.5 * f.delta_norm * f.a2 + 0.5 * f.eta_norm,
        f.xi_norm * f.b1,
    ]
}

fn admissible_frame(point: &FrequencyTriple) -> Result<ReducedFrame> {
    point.check_dim()?;
    reduce_frequencies_lenient(&point.xi, &point.delta, &point.eta)?.admissible()
}

/// Outer Monte Carlo over `f₁ = Re₁` with the inner stabilizer average by
/// [`inner_reduced`]. Each sample is paired with `−f₁`; the inner factor is
/// even in `f₁`, so the pair contributes `cos(2πP·f₁)` times the inner value.
pub fn multiplier_hybrid(
    point: &FrequencyTriple,
    n_rot: usize,
    spec: &QuadratureSpec,
    stream: RngStream,
) -> Result<MultiplierEstimate> {
    let frame = admissible_frame(point)?;
    if n_rot < 2 {
        return Err(invalid("multiplier_hybrid requires n_rot >= 2"));
    }
    let d = point.dim();
    let spec = spec.scaled_for(point.norm())?;
    let kernel = RadialKernel::new(d, &spec)?;
    let coeffs = InnerCoefficients::new(frame.delta_norm, frame.eta_norm, frame.a2, frame.a3);
    let [p1, p2, p3] = outer_coefficients(&frame);
    let acc: MeanVar = run_blocks(n_rot, stream, |rng, count, _| {
        let mut acc = MeanVar::default();
        let mut v = vec![0.0; d];
        for _ in 0..count {
            v.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let (x, y, z) = (v[0] / n, v[1] / n, v[2] / n);
            let g = InnerGeometry::from_components(x, y);
            let inner = kernel.eval(coeffs.args(g.m_r, g.n_cos(), g.n_sin()));
            acc.push((TWO_PI * (p1 * x + p2 * y + p3 * z)).cos() * inner);
        }
        acc
    });
    let e = acc.estimate();
    Ok(MultiplierEstimate {
        value: Complex64::new(e.value, 0.0),
        stderr: e.stderr,
        stderr_re: e.stderr,
        stderr_im: 0.0,
        method: Method::Hybrid,
    })
}

/// How the sign branches of the outer slicing are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchForm {
    /// Average of the four complex exponentials.
    Exponential,
    /// The same average folded into two cosines.
    Cosine,
}

/// Order in which the outer sphere `f₁ ∈ 𝕊^{d−1}` is sliced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slicing {
    /// `e₁·f₁ = ±√(1−t²)`, `e₂·f₁ = ±t√(1−s²)`. The kernel has a
    /// direction-dependent limit at `(t, s) = (1, 0)`.
    E1First,
    /// `e₂·f₁ = ±√(1−t²)`, `e₁·f₁ = ±t√(1−s²)`. Smooth on the whole cube.
    E2First,
}

/// Options for [`multiplier_reduced_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducedOptions {
    pub form: BranchForm,
    pub slicing: Slicing,
}

impl Default for ReducedOptions {
    fn default() -> Self {
        Self {
            form: BranchForm::Cosine,
            slicing: Slicing::E1First,
        }
    }
}

/// Slice data at one `(s, t)` node.
#[derive(Clone, Copy, Debug)]
struct OuterSlice {
    /// `|e₁·f₁|`.
    x1: f64,
    /// `|e₂·f₁|`.
    x2: f64,
    m: f64,
    /// `|N cos θ′|`.
    n_cos: f64,
    n_sin: f64,
    /// Radius of the remaining coordinates, `ts`.
    rest: f64,
}

fn outer_slice(slicing: Slicing, s: f64, cs: f64, t: f64, ct: f64) -> OuterSlice {
    match slicing {
        Slicing::E1First => {
            let x1 = ct;
            let x2 = t * cs;
            // 1 − t²(1−s²) = (1−t²) + t²s²
            let m = (ct * ct + t * t * s * s).sqrt();
            OuterSlice {
                x1,
                x2,
                m,
                n_cos: x1 * x2 / m,
                n_sin: t * s / m,
                rest: t * s,
            }
        }
        Slicing::E2First => OuterSlice {
            x1: t * cs,
            x2: ct,
            m: t,
            n_cos: ct * cs,
            n_sin: s,
            rest: t * s,
        },
    }
}

fn reduced_value(
    frame: &ReducedFrame,
    d: usize,
    spec: &QuadratureSpec,
    opts: ReducedOptions,
) -> Result<Complex64> {
    let kernel = RadialKernel::new(d, spec)?;
    let rule_s = WeightedRule::new(d as u32 - 3, spec)?;
    let rule_t = WeightedRule::new(d as u32 - 2, spec)?;
    let norm = rule_s.total_weight() * rule_t.total_weight();
    let coeffs = InnerCoefficients::new(frame.delta_norm, frame.eta_norm, frame.a2, frame.a3);
    let [p1, p2, p3] = outer_coefficients(frame);
    let ft = kernel.ft;
    let total: Complex64 = (0..rule_t.len())
        .into_par_iter()
        .map(|it| {
            let (t, ct, wt) = (rule_t.x[it], rule_t.c[it], rule_t.w[it]);
            let mut acc = Complex64::new(0.0, 0.0);
            for is in 0..rule_s.len() {
                let (s, cs, ws) = (rule_s.x[is], rule_s.c[is], rule_s.w[is]);
                let sl = outer_slice(opts.slicing, s, cs, t, ct);
                let args = coeffs.args(sl.m, sl.n_cos, sl.n_sin);
                let (i_plus, i_minus) = kernel.eval_pair(
                    args.beta1 - coeffs.across * sl.n_cos,
                    coeffs.across * sl.n_cos,
                    args.beta2,
                    args.gamma,
                );
                let (u, v) = (p1 * sl.x1, p2 * sl.x2);
                let branches = match opts.form {
                    BranchForm::Cosine => Complex64::new(
                        0.5 * ((TWO_PI * (u + v)).cos() * i_plus
                            + (TWO_PI * (u - v)).cos() * i_minus),
                        0.0,
                    ),
                    BranchForm::Exponential => {
                        let mut z = Complex64::new(0.0, 0.0);
                        for s1 in [1.0, -1.0] {
                            for s2 in [1.0, -1.0] {
                                let inner = if s1 * s2 > 0.0 { i_plus } else { i_minus };
                                z += Complex64::from_polar(inner, -TWO_PI * (s1 * u + s2 * v));
                            }
                        }
                        0.25 * z
                    }
                };
                acc += ws * ft.eval(p3 * sl.rest) * branches;
            }
            wt * acc
        })
        .sum();
    Ok(total / norm)
}

/// Deterministic triple quadrature with the default options.
pub fn multiplier_reduced(
    point: &FrequencyTriple,
    spec: &QuadratureSpec,
) -> Result<MultiplierEstimate> {
    multiplier_reduced_with(point, spec, ReducedOptions::default())
}

/// `∫∫ σ̂(|ξ|b₁ts) · [sign-branch average of the outer phase times the
/// inner integral] t^{d−2}(1−t²)^{−1/2} s^{d−3}(1−s²)^{−1/2} ds dt`,
/// normalized by the weights' total mass. Node counts scale with the
/// frequency norm per [`QuadratureSpec::scaled_for`].
pub fn multiplier_reduced_with(
    point: &FrequencyTriple,
    spec: &QuadratureSpec,
    opts: ReducedOptions,
) -> Result<MultiplierEstimate> {
    let frame = admissible_frame(point)?;
    let spec = spec.scaled_for(point.norm())?;
    let value = reduced_value(&frame, point.dim(), &spec, opts)?;
    Ok(MultiplierEstimate::exact(value, Method::Reduced))
}

/// `(1 + min(|δ|,|η|)|a₃|)^{−e} (1 + |ξ||b₁|)^{−e} (1 + |(ξ,δ,η)|)^{−e}` with
/// `e = (d−3)/2`. Factors whose angle is undefined are 1.
pub fn decay_bound(point: &FrequencyTriple) -> Result<f64> {
    point.check_dim()?;
    let r = reduce_frequencies_lenient(&point.xi, &point.delta, &point.eta)?;
    let f = r.frame;
    let e = 0.5 * (point.dim() as f64 - 3.0);
    let angle = 1.0 + f.delta_norm.min(f.eta_norm) * f.a3.abs();
    let xi = 1.0 + f.xi_norm * f.b1.abs();
    let radial = 1.0 + point.norm();
    Ok((angle * xi * radial).powf(-e))
}

/// Evaluation route for [`decay_scan`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMethod {
    Mc,
    Hybrid,
    Reduced,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub lambda: f64,
    pub modulus: f64,
    pub stderr: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayScan {
    pub d: usize,
    pub rows: Vec<DecayRow>,
    /// Scales dropped because `|m|` fell below three standard errors.
    pub truncated: Vec<f64>,
    /// Least-squares slope of `log|m|` against `log λ` over `rows`.
    pub slope: f64,
    /// `max |m| / bound` over `rows`.
    pub constant: f64,
    pub slope_limit: f64,
    pub constant_limit: f64,
    pub pass: bool,
}

/// Largest admissible constant in `|m| ≤ C·bound`.
pub const DECAY_CONSTANT_LIMIT: f64 = 10.0;

/// Evaluates `|m(λ·direction)|` and the decay bound across `scales`, fits
/// the log-log slope and the smallest constant `C` with `|m| ≤ C·bound`.
/// For sampled methods `budget` is the per-scale sample count; a scale whose
/// modulus falls below three standard errors ends the usable range.
pub fn decay_scan(
    direction: &FrequencyTriple,
    scales: &[f64],
    method: ScanMethod,
    budget: usize,
    spec: &QuadratureSpec,
    stream: RngStream,
) -> Result<DecayScan> {
    direction.check_dim()?;
    reduce_frequencies(&direction.xi, &direction.delta, &direction.eta)?;
    if scales.len() < 2 || scales.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(invalid("decay_scan needs at least two positive scales"));
    }
    let d = direction.dim();
    let mut rows = Vec::new();
    let mut truncated = Vec::new();
    for (k, &lambda) in scales.iter().enumerate() {
        if !truncated.is_empty() {
            truncated.push(lambda);
            continue;
        }
        let p = direction.scaled(lambda);
        let est = match method {
            ScanMethod::Reduced => multiplier_reduced(&p, spec)?,
            ScanMethod::Hybrid => multiplier_hybrid(&p, budget, spec, stream.substream(k as u64))?,
            ScanMethod::Mc => multiplier_mc(&p, budget, stream.substream(k as u64))?,
        };
        let modulus = est.value.norm();
        if est.stderr > 0.0 && modulus < 3.0 * est.stderr {
            truncated.push(lambda);
            continue;
        }
        let bound = decay_bound(&p)?;
        rows.push(DecayRow {
            lambda,
            modulus,
            stderr: est.stderr,
            bound,
            ratio: modulus / bound,
        });
    }
    let slope = log_log_slope(&rows);
    let constant = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let slope_limit = -0.5 * (d as f64 - 3.0) + 0.5;
    let pass = rows.len() >= 2 && slope <= slope_limit && constant <= DECAY_CONSTANT_LIMIT;
    Ok(DecayScan {
        d,
        rows,
        truncated,
        slope,
        constant,
        slope_limit,
        constant_limit: DECAY_CONSTANT_LIMIT,
        pass,
    })
}

fn log_log_slope(rows: &[DecayRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.modulus > 0.0)
        .map(|r| (r.lambda.ln(), r.modulus.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Degeneracy;
    use crate::rotation::sample_haar;

    fn unit(d: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        v
    }

    fn random_point(d: usize, radius: f64, seed: u64) -> FrequencyTriple {
        FrequencyTriple::random(d, radius, &mut RngStream::new(seed, 0).rng())
    }

    #[test]
    fn kernel_identity() {
        for i in 1..50 {
            for j in 1..50 {
                let (s, t) = (i as f64 / 50.0, j as f64 / 50.0);
                let m2 = 1.0 - t * t * (1.0 - s * s);
                let lhs = m2 * (1.0 - (1.0 - t * t) * (1.0 - s * s) / m2);
                assert!((lhs - s * s).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn origin_is_one_on_every_path() {
        let spec = QuadratureSpec::default();
        for d in [4, 5, 6] {
            let o = FrequencyTriple::origin(d);
            let mc = multiplier_mc(&o, 2000, RngStream::new(1, 0)).unwrap();
            assert_eq!(mc.value, Complex64::new(1.0, 0.0));
            let h = multiplier_hybrid(&o, 500, &spec, RngStream::new(1, 1)).unwrap();
            assert!((h.value.re - 1.0).abs() < 1e-13);
            for slicing in [Slicing::E1First, Slicing::E2First] {
                for form in [BranchForm::Cosine, BranchForm::Exponential] {
                    let r = multiplier_reduced_with(&o, &spec, ReducedOptions { form, slicing })
                        .unwrap();
                    assert!((r.value - 1.0).norm() <= 1e-12);
                    assert_eq!(r.stderr, 0.0);
                }
            }
        }
    }

    #[test]
    fn inner_at_zero_frequencies() {
        let g = InnerGeometry::from_components(0.3, -0.4);
        let v = inner_reduced(g, 0.0, 0.0, 1.0, 0.0, 5, &QuadratureSpec::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        assert!(InnerGeometry::new(1.2, 0.5, 0.0).is_err());
    }

    #[test]
    fn inner_geometry_identities() {
        for (x, y) in [(0.3, 0.4), (-0.7, 0.2), (0.0, 0.9), (0.5, -0.5)] {
            let g = InnerGeometry::from_components(x, y);
            assert!((g.m_r * g.m_r - (1.0 - y * y)).abs() < 1e-14);
            assert!((g.n_r * g.n_r - (1.0 - x * x)).abs() < 1e-14);
            assert!((g.cos_theta_prime * g.m_r * g.n_r - x * y).abs() < 1e-14);
        }
    }

    /// Inner stabilizer average by direct sampling of `(f₂, f₃) ⊥ f₁`.
    fn inner_mc(
        f1: &[f64],
        delta_norm: f64,
        eta_norm: f64,
        a2: f64,
        a3: f64,
        n: usize,
        seed: u64,
    ) -> (f64, f64) {
        let d = f1.len();
        let mut b = vec![0.0; d];
        b[0] = -SQRT3_2 * delta_norm * a3;
        b[1] = SQRT3_2 * delta_norm * a2 + INV_2SQRT3 * eta_norm;
        let c = {
            let mut c = vec![0.0; d];
            c[1] = SQRT2_3 * eta_norm;
            c
        };
        let mut rng = RngStream::new(seed, 7).rng();
        let mut acc = MeanVar::default();
        for _ in 0..n {
            let mut frame: Vec<Vec<f64>> = vec![f1.to_vec()];
            while frame.len() < 3 {
                let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                for _ in 0..2 {
                    for u in &frame {
                        let p = dot(&v, u);
                        v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
                    }
                }
                let nv = dot(&v, &v).sqrt();
                frame.push(v.iter().map(|x| x / nv).collect());
            }
            acc.push((TWO_PI * (dot(&b, &frame[1]) + dot(&c, &frame[2]))).cos());
        }
        let e = acc.estimate();
        (e.value, e.stderr)
    }

    #[test]
    fn inner_matches_stabilizer_mc() {
        let d = 5;
        let spec = QuadratureSpec::default();
        let mut rng = RngStream::new(40, 0).rng();
        for k in 0..20 {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let nv = dot(&v, &v).sqrt();
            let f1: Vec<f64> = v.iter().map(|x| x / nv).collect();
            let theta: f64 = rng.gen_range(0.0..PI);
            let (dn, en) = (rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
            let g = InnerGeometry::from_components(f1[0], f1[1]);
            let q = inner_reduced(g, dn, en, theta.cos(), theta.sin(), d, &spec).unwrap();
            let (m, se) = inner_mc(&f1, dn, en, theta.cos(), theta.sin(), 20_000, k);
            assert!(
                (q - m).abs() <= 3.0 * se + 1e-12,
                "geometry {k}: {q} vs {m} ± {se}"
            );
        }
    }

    #[test]
    fn inner_parenthesization_at_zero_a3() {
        let spec = QuadratureSpec::default();
        let g = InnerGeometry::from_components(0.2, 0.5);
        let (dn, en) = (1.3, 0.7);
        let got = inner_reduced(g, dn, en, 1.0, 0.0, 5, &spec).unwrap();
        let beta1 = (SQRT3_2 * g.m_r * dn + INV_2SQRT3 * g.m_r * en) * TWO_PI;
        let ft = SphereFt::new(SphereDim::new(2).unwrap());
        let rule = WeightedRule::new(2, &spec).unwrap();
        let expected = rule
            .integrate(|r| (beta1 * (1.0 - r * r).sqrt()).cos() * ft.eval(SQRT2_3 * en * g.m_r * r))
            .unwrap()
            / rule.total_weight();
        assert!((got - expected).abs() < 1e-13);
    }

    #[test]
    fn branch_forms_and_slicings_agree() {
        let spec = QuadratureSpec::default();
        for d in [4, 5, 6] {
            let p = random_point(d, 3.0, d as u64);
            let base = multiplier_reduced(&p, &spec).unwrap();
            for slicing in [Slicing::E1First, Slicing::E2First] {
                let c = multiplier_reduced_with(
                    &p,
                    &spec,
                    ReducedOptions {
                        form: BranchForm::Cosine,
                        slicing,
                    },
                )
                .unwrap();
                let e = multiplier_reduced_with(
                    &p,
                    &spec,
                    ReducedOptions {
                        form: BranchForm::Exponential,
                        slicing,
                    },
                )
                .unwrap();
                assert!((c.value - e.value).norm() < 1e-13);
                assert!(e.value.im.abs() < 1e-13);
                assert!((c.value - base.value).norm() < 1e-5, "{slicing:?}");
            }
        }
    }

    #[test]
    fn reduced_node_doubling_gate() {
        let spec = QuadratureSpec::default();
        for d in [4, 5, 6] {
            for k in 0..3 {
                let p = random_point(d, 5.0, 100 + 10 * d as u64 + k);
                let a = multiplier_reduced(&p, &spec).unwrap().value;
                let b = multiplier_reduced(&p, &spec.doubled()).unwrap().value;
                assert!((a - b).norm() <= 1e-7, "d={d}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn reduced_and_hybrid_match_mc() {
        let spec = QuadratureSpec::default();
        for d in [4, 5, 6] {
            let p = random_point(d, 2.5, 200 + d as u64);
            let mc = multiplier_mc(&p, 100_000, RngStream::new(3, d as u64)).unwrap();
            let r = multiplier_reduced(&p, &spec).unwrap();
            let h = multiplier_hybrid(&p, 5_000, &spec, RngStream::new(4, d as u64)).unwrap();
            assert!(
                r.agrees_with(&mc, 3.0),
                "d={d} reduced {} mc {} ± {}",
                r.value,
                mc.value,
                mc.stderr
            );
            assert!(
                h.agrees_with(&mc, 3.0),
                "d={d} hybrid {} mc {}",
                h.value,
                mc.value
            );
        }
    }

    #[test]
    fn mc_is_rotation_invariant_and_real() {
        let d = 5;
        let p = random_point(d, 2.0, 7);
        let q = sample_haar(d, RngStream::new(8, 0)).unwrap();
        let a = multiplier_mc(&p, 50_000, RngStream::new(9, 0)).unwrap();
        let b = multiplier_mc(&p.rotated(&q), 50_000, RngStream::new(9, 1)).unwrap();
        assert!(a.agrees_with(&b, 3.0));
        assert!(a.value.im.abs() <= 3.0 * a.stderr_im);
        assert!(a.value.norm() <= 1.0 + 3.0 * a.stderr);
        let neg = multiplier_mc(&p.negated(), 50_000, RngStream::new(9, 2)).unwrap();
        assert!(neg.agrees_with(&a, 3.0));
    }

    #[test]
    fn hybrid_depends_only_on_invariants_when_xi_vanishes() {
        let d = 5;
        let spec = QuadratureSpec::default();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p1 = FrequencyTriple::new(
            vec![0.0; d],
            vec![0.0, 1.2 * s, 1.2 * s, 0.0, 0.0],
            vec![0.0, 0.8, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let p2 = FrequencyTriple::new(
            vec![0.0; d],
            vec![0.0, 0.0, 0.0, 1.2 * s, 1.2 * s],
            vec![0.0, 0.0, 0.0, 0.0, 0.8],
        )
        .unwrap();
        let a = multiplier_hybrid(&p1, 2_000, &spec, RngStream::new(5, 0)).unwrap();
        let b = multiplier_hybrid(&p2, 2_000, &spec, RngStream::new(5, 0)).unwrap();
        assert!((a.value - b.value).norm() < 1e-12);
    }

    #[test]
    fn degenerate_frames_refused_by_reduced_paths() {
        let d = 4;
        let p = FrequencyTriple::new(unit(d, 0), unit(d, 1), unit(d, 1)).unwrap();
        let spec = QuadratureSpec::default();
        assert_eq!(
            multiplier_reduced(&p, &spec).unwrap_err(),
            Error::DegenerateFrame(Degeneracy::Parallel)
        );
        assert!(multiplier_hybrid(&p, 100, &spec, RngStream::new(0, 0)).is_err());
        assert!(multiplier_mc(&p, 1000, RngStream::new(0, 0)).is_ok());
        let big = random_point(d, 2000.0, 1);
        assert!(matches!(
            multiplier_reduced(&big, &spec),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn decay_bound_examples() {
        let d = 5;
        assert_eq!(decay_bound(&FrequencyTriple::origin(d)).unwrap(), 1.0);
        let p = random_point(d, 1.0, 11);
        let mut last = 1.0;
        for k in 0..12 {
            let b = decay_bound(&p.scaled(2f64.powi(k))).unwrap();
            assert!(b > 0.0 && b <= last);
            last = b;
        }
        // λ^{−3(d−3)/2} asymptotically
        let big = decay_bound(&p.scaled(1e6)).unwrap();
        let bigger = decay_bound(&p.scaled(2e6)).unwrap();
        let rate = (bigger / big).log2();
        assert!((rate + 3.0).abs() < 1e-3, "{rate}");
    }

    #[test]
    fn decay_scan_requires_generic_direction() {
        let d = 5;
        let v = unit(d, 0);
        let p = FrequencyTriple::new(v.clone(), v.clone(), v).unwrap();
        assert!(decay_scan(
            &p,
            &[1.0, 2.0],
            ScanMethod::Reduced,
            0,
            &QuadratureSpec::default(),
            RngStream::new(0, 0)
        )
        .is_err());
    }
}
