//! Deterministic rules for the singular-weight integrals
//! `∫₀¹ f(x) x^k (1−x²)^{−1/2} dx`, their tensor products on the unit cube,
//! and the twice-sliced spherical average.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::stats::{run_blocks, ComplexEstimate, ComplexMeanVar};

pub const DEFAULT_NODES: usize = 64;
/// Frequency norm above which node counts grow linearly with the norm.
pub const OSCILLATION_SCALE: f64 = 10.0;
/// Frequency norm beyond which the quadrature paths refuse.
pub const OSCILLATION_LIMIT: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    GaussLegendre,
    TanhSinh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub nodes_per_axis: usize,
    pub rule: Rule,
    /// Substitute `x = sin φ` to remove the `(1−x²)^{−1/2}` singularity.
    pub endpoint_substitution: bool,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_axis: DEFAULT_NODES,
            rule: Rule::GaussLegendre,
            endpoint_substitution: true,
        }
    }
}

impl QuadratureSpec {
    pub fn new(nodes_per_axis: usize, rule: Rule, endpoint_substitution: bool) -> Result<Self> {
        let s = Self {
            nodes_per_axis,
            rule,
            endpoint_substitution,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_axis < 8 {
            return Err(invalid("nodes_per_axis must be at least 8"));
        }
        Ok(())
    }

    pub fn with_nodes(self, nodes_per_axis: usize) -> Self {
        Self {
            nodes_per_axis,
            ..self
        }
    }

    pub fn doubled(self) -> Self {
        self.with_nodes(2 * self.nodes_per_axis)
    }

    /// Node count for integrands oscillating at frequency norm `norm`:
    /// unchanged up to [`OSCILLATION_SCALE`], linear beyond, refused past
    /// [`OSCILLATION_LIMIT`].
    pub fn scaled_for(self, norm: f64) -> Result<Self> {
        if !norm.is_finite() {
            return Err(Error::NonFinite("frequency norm".into()));
        }
        if norm > OSCILLATION_LIMIT {
            return Err(Error::BudgetExceeded {
                norm,
                limit: OSCILLATION_LIMIT,
            });
        }
        if norm <= OSCILLATION_SCALE {
            return Ok(self);
        }
        let n = (self.nodes_per_axis as f64 * norm / OSCILLATION_SCALE).ceil() as usize;
        Ok(self.with_nodes(n))
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`, by Newton iteration on
/// the three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Points `y ∈ (0, 1)` with their complements `1 − y` and weights for
/// `∫₀¹ g(y) dy`.
struct UnitRule {
    y: Vec<f64>,
    one_minus_y: Vec<f64>,
    w: Vec<f64>,
}

/// `wide` extends the tanh–sinh range for integrands singular at the ends.
fn unit_rule(rule: Rule, n: usize, wide: bool) -> UnitRule {
    match rule {
        Rule::GaussLegendre => {
            let (x, w) = gauss_legendre(n);
            UnitRule {
                y: x.iter().map(|x| 0.5 * (1.0 + x)).collect(),
                one_minus_y: x.iter().map(|x| 0.5 * (1.0 - x)).collect(),
                w: w.iter().map(|w| 0.5 * w).collect(),
            }
        }
        Rule::TanhSinh => {
            // τ ∈ [−T, T] with n equispaced points; y = (1 + tanh(½π sinh τ))/2
            let t_max = if wide { 4.0 } else { 3.0 };
            let h = 2.0 * t_max / (n as f64 - 1.0);
            let mut r = UnitRule {
                y: Vec::with_capacity(n),
                one_minus_y: Vec::with_capacity(n),
                w: Vec::with_capacity(n),
            };
            for i in 0..n {
                let tau = -t_max + h * i as f64;
                let u = FRAC_PI_2 * tau.sinh();
                let e = (-2.0 * u.abs()).exp();
                // 1 ∓ tanh(u) computed without cancellation
                let small = 2.0 * e / (1.0 + e);
                let (lo, hi) = if u >= 0.0 {
                    (1.0 - 0.5 * small, 0.5 * small)
                } else {
                    (0.5 * small, 1.0 - 0.5 * small)
                };
                let c = u.cosh();
                let wt = 0.5 * h * FRAC_PI_2 * tau.cosh() / (c * c);
                if lo <= 0.0 || hi <= 0.0 || wt == 0.0 {
                    continue;
                }
                r.y.push(lo);
                r.one_minus_y.push(hi);
                r.w.push(wt);
            }
            r
        }
    }
}

/// A rule for `∫₀¹ f(x) x^k (1−x²)^{−1/2} dx ≈ Σ wᵢ f(xᵢ)`, storing
/// `cᵢ = √(1−xᵢ²)` alongside each node.
#[derive(Clone, Debug)]
pub struct WeightedRule {
    pub x: Vec<f64>,
    pub c: Vec<f64>,
    pub w: Vec<f64>,
}

impl WeightedRule {
    pub fn new(k: u32, spec: &QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        let base = unit_rule(spec.rule, spec.nodes_per_axis, !spec.endpoint_substitution);
        let mut out = WeightedRule {
            x: Vec::with_capacity(base.y.len()),
            c: Vec::with_capacity(base.y.len()),
            w: Vec::with_capacity(base.y.len()),
        };
        for ((&y, &ym), &wy) in base.y.iter().zip(&base.one_minus_y).zip(&base.w) {
            if spec.endpoint_substitution {
                // x = sin φ, φ = ½π y: weight becomes sin^k φ dφ
                let phi = FRAC_PI_2 * y;
                let x = phi.sin();
                let c = (FRAC_PI_2 * ym).sin();
                out.x.push(x);
                out.c.push(c);
                out.w.push(FRAC_PI_2 * wy * x.powi(k as i32));
            } else {
                let x = y;
                let one_minus_x2 = ym * (1.0 + x);
                let c = one_minus_x2.sqrt();
                out.x.push(x);
                out.c.push(c);
                out.w.push(wy * x.powi(k as i32) / c);
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for (&x, &w) in self.x.iter().zip(&self.w) {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("integrand at node {x}")));
            }
            acc += w * v;
        }
        Ok(acc)
    }
}

/// Exact `∫₀¹ x^m (1−x²)^{−1/2} dx = ½ B((m+1)/2, ½)`.
pub fn weighted_moment(m: u32) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let a = 0.5 * (m as f64 + 1.0);
    0.5 * (ln_gamma(a) + ln_gamma(0.5) - ln_gamma(a + 0.5)).exp()
}

fn check_dim(d: usize) -> Result<()> {
    if d < 4 {
        return Err(invalid("weighted quadrature requires d >= 4"));
    }
    Ok(())
}

/// `∫₀¹ f(r) r^{d−3} (1−r²)^{−1/2} dr`.
pub fn integrate_weighted_01(
    f: impl Fn(f64) -> f64,
    d: usize,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_dim(d)?;
    WeightedRule::new(d as u32 - 3, spec)?.integrate(f)
}

/// `∫∫∫ f(r,s,t) r^{d−3} s^{d−3} t^{d−2} ((1−r²)(1−s²)(1−t²))^{−1/2}` over
/// the unit cube.
pub fn integrate_cube3<F>(f: F, d: usize, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64, f64, f64) -> f64 + Sync,
{
    check_dim(d)?;
    let rs = WeightedRule::new(d as u32 - 3, spec)?;
    let rt = WeightedRule::new(d as u32 - 2, spec)?;
    let parts: Result<Vec<f64>> = (0..rt.len())
        .into_par_iter()
        .map(|it| {
            let t = rt.x[it];
            let mut acc_s = 0.0;
            for (&s, &ws) in rs.x.iter().zip(&rs.w) {
                let mut acc_r = 0.0;
                for (&r, &wr) in rs.x.iter().zip(&rs.w) {
                    let v = f(r, s, t);
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!("integrand at ({r}, {s}, {t})")));
                    }
                    acc_r += wr * v;
                }
                acc_s += ws * acc_r;
            }
            Ok(rt.w[it] * acc_s)
        })
        .collect();
    Ok(parts?.into_iter().sum())
}

/// Direct and twice-sliced estimates of the normalized spherical average of
/// `f` over `𝕊^{d−1}`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SlicingCheck {
    pub direct: ComplexEstimate,
    pub sliced: ComplexEstimate,
}

/// Nodes per axis of the deterministic part of [`slicing_check`].
const SLICING_NODES: usize = 40;

fn unit_sphere_point<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Evaluates the average of `f` on `𝕊^{d−1}` by direct uniform sampling and
/// by slicing twice: `u = (±√(1−t²), ±t√(1−s²), t s z)` with `z ∈ 𝕊^{d−3}`,
/// the `(t, s)` integral by quadrature against `t^{d−2}(1−t²)^{−1/2}` and
/// `s^{d−3}(1−s²)^{−1/2}`, the `z` average by Monte Carlo.
pub fn slicing_check<F>(d: usize, f: F, n_mc: usize, stream: RngStream) -> Result<SlicingCheck>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    check_dim(d)?;
    if n_mc < 2 {
        return Err(invalid("slicing_check requires n_mc >= 2"));
    }
    let direct = run_blocks(n_mc, stream.substream(0), |rng, count, _| {
        let mut acc = ComplexMeanVar::default();
        for _ in 0..count {
            acc.push(f(&unit_sphere_point(d, rng)));
        }
        acc
    });

    let spec = QuadratureSpec::default().with_nodes(SLICING_NODES);
    let rt = WeightedRule::new(d as u32 - 2, &spec)?;
    let rs = WeightedRule::new(d as u32 - 3, &spec)?;
    let norm = rt.total_weight() * rs.total_weight();
    let sliced = run_blocks(n_mc, stream.substream(1), |rng, count, _| {
        let mut acc = ComplexMeanVar::default();
        let mut u = vec![0.0; d];
        for _ in 0..count {
            let z = unit_sphere_point(d - 2, rng);
            let mut q = Complex64::new(0.0, 0.0);
            for ((&t, &ct), &wt) in rt.x.iter().zip(&rt.c).zip(&rt.w) {
                for ((&s, &cs), &ws) in rs.x.iter().zip(&rs.c).zip(&rs.w) {
                    for (k, zk) in z.iter().enumerate() {
                        u[k + 2] = t * s * zk;
                    }
                    let mut branch = Complex64::new(0.0, 0.0);
                    for s1 in [1.0, -1.0] {
                        for s2 in [1.0, -1.0] {
                            u[0] = s1 * ct;
                            u[1] = s2 * t * cs;
                            branch += f(&u);
                        }
                    }
                    q += 0.25 * wt * ws * branch;
                }
            }
            acc.push(q / norm);
        }
        acc
    });
    Ok(SlicingCheck {
        direct: direct.estimate(),
        sliced: sliced.estimate(),
    })
}
