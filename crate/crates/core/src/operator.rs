//! The pyramid operator `T(f,g,h)(x) = ∫_M f(x−u) g(x−v) h(x−w) dμ` and the
//! triangle operator `Δ(f,g)(x) = ∫ f(x−u) g(x−v) dμ` on concrete test
//! functions, with empirical `L^p` ratio probes.

use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::manifold::{sample_manifold_with, PyramidVertices};
use crate::quadrature::gauss_legendre;
use crate::region::{contains, hull, r_exponent, ExponentPoint, HullLabel, Rational};
use crate::rng::RngStream;
use crate::stats::{run_blocks, Estimate, MeanVar};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestKind {
    /// `exp(−π|x−c|²/w²)`.
    Gaussian {
        center: Vec<f64>,
        width: f64,
    },
    /// Indicator of the closed ball `|x−c| ≤ r`.
    BallIndicator {
        center: Vec<f64>,
        radius: f64,
    },
    /// `∏ₖ (1 + (xₖ−cₖ)²)^{−a}`.
    ProductDecay {
        center: Vec<f64>,
        exponent: f64,
    },
    Constant {
        value: f64,
    },
}

/// A bounded function on `ℝ^d` with closed-form `L^p` norms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestFunction {
    pub kind: TestKind,
    pub dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    ClosedForm,
    RadialQuadrature,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormEstimate {
    /// `1/p` as an exact rational; `0` is the sup norm.
    pub inv_p: String,
    pub value: f64,
    pub method: NormMethod,
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

fn ball_volume(d: usize, r: f64) -> f64 {
    let h = 0.5 * d as f64;
    (h * PI.ln() - ln_gamma(h + 1.0)).exp() * r.powi(d as i32)
}

/// `|𝕊^{d−1}|`.
fn sphere_area(d: usize) -> f64 {
    let h = 0.5 * d as f64;
    2.0 * (h * PI.ln() - ln_gamma(h)).exp()
}

impl TestFunction {
    pub fn gaussian(center: Vec<f64>, width: f64) -> Result<Self> {
        check_finite(&center, "gaussian center")?;
        if !(width > 0.0 && width.is_finite()) {
            return Err(invalid("gaussian width must be positive"));
        }
        Ok(Self {
            dim: center.len(),
            kind: TestKind::Gaussian { center, width },
        })
    }

    pub fn ball_indicator(center: Vec<f64>, radius: f64) -> Result<Self> {
        check_finite(&center, "ball center")?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("ball radius must be positive"));
        }
        Ok(Self {
            dim: center.len(),
            kind: TestKind::BallIndicator { center, radius },
        })
    }

    pub fn product_decay(center: Vec<f64>, exponent: f64) -> Result<Self> {
        check_finite(&center, "product_decay center")?;
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(invalid("product_decay exponent must be positive"));
        }
        Ok(Self {
            dim: center.len(),
            kind: TestKind::ProductDecay { center, exponent },
        })
    }

    pub fn constant(dim: usize, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite("constant value".into()));
        }
        Ok(Self {
            dim,
            kind: TestKind::Constant { value },
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let dist2 = |c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        match &self.kind {
            TestKind::Gaussian { center, width } => (-PI * dist2(center) / (width * width)).exp(),
            TestKind::BallIndicator { center, radius } => {
                if dist2(center) <= radius * radius {
                    1.0
                } else {
                    0.0
                }
            }
            TestKind::ProductDecay { center, exponent } => x
                .iter()
                .zip(center)
                .map(|(a, c)| (1.0 + (a - c) * (a - c)).powf(-exponent))
                .product(),
            TestKind::Constant { value } => *value,
        }
    }

    /// `|f|`.
    pub fn abs(&self) -> Self {
        match &self.kind {
            TestKind::Constant { value } => Self {
                dim: self.dim,
                kind: TestKind::Constant { value: value.abs() },
            },
            _ => self.clone(),
        }
    }

    /// `f(λ·)`.
    pub fn dilated(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("dilation must be positive"));
        }
        let kind = match &self.kind {
            TestKind::Gaussian { center, width } => TestKind::Gaussian {
                center: center.iter().map(|c| c / lambda).collect(),
                width: width / lambda,
            },
            TestKind::BallIndicator { center, radius } => TestKind::BallIndicator {
                center: center.iter().map(|c| c / lambda).collect(),
                radius: radius / lambda,
            },
            TestKind::ProductDecay { .. } => {
                return Err(invalid("product_decay is not closed under dilation"));
            }
            TestKind::Constant { value } => TestKind::Constant { value: *value },
        };
        Ok(Self {
            kind,
            dim: self.dim,
        })
    }

    /// `f(· − y)`.
    pub fn translated(&self, y: &[f64]) -> Result<Self> {
        if y.len() != self.dim {
            return Err(invalid("translation dimension mismatch"));
        }
        let shift = |c: &[f64]| c.iter().zip(y).map(|(a, b)| a + b).collect::<Vec<f64>>();
        let kind = match &self.kind {
            TestKind::Gaussian { center, width } => TestKind::Gaussian {
                center: shift(center),
                width: *width,
            },
            TestKind::BallIndicator { center, radius } => TestKind::BallIndicator {
                center: shift(center),
                radius: *radius,
            },
            TestKind::ProductDecay { center, exponent } => TestKind::ProductDecay {
                center: shift(center),
                exponent: *exponent,
            },
            TestKind::Constant { value } => TestKind::Constant { value: *value },
        };
        Ok(Self {
            kind,
            dim: self.dim,
        })
    }

    pub fn sup_norm(&self) -> f64 {
        match &self.kind {
            TestKind::Constant { value } => value.abs(),
            _ => 1.0,
        }
    }

    /// Closed-form `‖f‖_p`; `inv_p = 0` is the sup norm.
    pub fn lp_norm(&self, inv_p: &Rational) -> Result<NormEstimate> {
        let ip = inv_p.to_f64().unwrap_or(f64::NAN);
        if !(0.0..=1.0).contains(&ip) {
            return Err(invalid("1/p must lie in [0, 1]"));
        }
        let value = if inv_p.is_zero() {
            self.sup_norm()
        } else {
            let p = 1.0 / ip;
            let d = self.dim as f64;
            match &self.kind {
                TestKind::Gaussian { width, .. } => (width * width / p).powf(d / (2.0 * p)),
                TestKind::BallIndicator { radius, .. } => ball_volume(self.dim, *radius).powf(ip),
                TestKind::ProductDecay { exponent, .. } => {
                    let a = exponent * p;
                    if a <= 0.5 {
                        return Err(invalid("product_decay is not in L^p for exponent·p <= 1/2"));
                    }
                    let line = (0.5 * PI.ln() + ln_gamma(a - 0.5) - ln_gamma(a)).exp();
                    line.powf(d * ip)
                }
                TestKind::Constant { value } => {
                    if *value == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                }
            }
        };
        Ok(NormEstimate {
            inv_p: format!("{inv_p}"),
            value,
            method: NormMethod::ClosedForm,
        })
    }

    /// Center and radius outside of which `f` is negligible (below `e^{−40}`
    /// for gaussians, zero for balls). `None` for functions without one.
    fn essential_ball(&self) -> Option<(&[f64], f64)> {
        match &self.kind {
            TestKind::Gaussian { center, width } => Some((center, width * (40.0 / PI).sqrt())),
            TestKind::BallIndicator { center, radius } => Some((center, *radius)),
            _ => None,
        }
    }

    fn radial_about_origin(&self) -> bool {
        match &self.kind {
            TestKind::Gaussian { center, .. } | TestKind::BallIndicator { center, .. } => {
                center.iter().all(|c| *c == 0.0)
            }
            TestKind::ProductDecay { .. } => false,
            TestKind::Constant { .. } => true,
        }
    }
}

/// A shared set of manifold samples for common-random-numbers evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub d: usize,
    pub vertices: Vec<PyramidVertices>,
}

impl SampleBatch {
    pub fn draw(d: usize, n: usize, stream: RngStream) -> Result<Self> {
        if d < 4 {
            return Err(invalid("sample batches require d >= 4"));
        }
        if n < 2 {
            return Err(invalid("sample batches require n >= 2"));
        }
        let vertices: Vec<PyramidVertices> = run_blocks(n, stream, |rng, count, _| {
            (0..count)
                .map(|_| sample_manifold_with(d, rng))
                .collect::<Vec<_>>()
        });
        Ok(Self { d, vertices })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

fn sub(x: &[f64], u: &[f64], out: &mut [f64]) {
    out.iter_mut()
        .zip(x.iter().zip(u))
        .for_each(|(o, (a, b))| *o = a - b);
}

/// Per-sample integrand `f(x−u) g(x−v) h(x−w)`.
fn pyramid_sample<F, G, H>(
    f: &F,
    g: &G,
    h: &H,
    x: &[f64],
    p: &PyramidVertices,
    buf: &mut [f64],
) -> f64
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> f64,
    H: Fn(&[f64]) -> f64,
{
    sub(x, &p.u, buf);
    let a = f(buf);
    if a == 0.0 {
        return 0.0;
    }
    sub(x, &p.v, buf);
    let b = g(buf);
    if b == 0.0 {
        return 0.0;
    }
    sub(x, &p.w, buf);
    a * b * h(buf)
}

fn triangle_sample<F, G>(f: &F, g: &G, x: &[f64], p: &PyramidVertices, buf: &mut [f64]) -> f64
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> f64,
{
    sub(x, &p.u, buf);
    let a = f(buf);
    if a == 0.0 {
        return 0.0;
    }
    sub(x, &p.v, buf);
    a * g(buf)
}

fn check_point(d: usize, x: &[f64]) -> Result<()> {
    if x.len() != d {
        return Err(invalid("evaluation point dimension mismatch"));
    }
    check_finite(x, "evaluation point")
}

/// `T(f,g,h)(x)` by Monte Carlo over `n` fresh manifold samples.
pub fn apply_pyramid(
    f: &TestFunction,
    g: &TestFunction,
    h: &TestFunction,
    x: &[f64],
    n: usize,
    stream: RngStream,
) -> Result<Estimate> {
    pyramid_with(|y| f.eval(y), |y| g.eval(y), |y| h.eval(y), x, n, stream)
}

/// [`apply_pyramid`] for arbitrary integrands.
pub fn pyramid_with<F, G, H>(
    f: F,
    g: G,
    h: H,
    x: &[f64],
    n: usize,
    stream: RngStream,
) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> f64 + Sync,
    H: Fn(&[f64]) -> f64 + Sync,
{
    let d = x.len();
    if d < 4 {
        return Err(invalid("apply_pyramid requires d >= 4"));
    }
    check_point(d, x)?;
    if n < 2 {
        return Err(invalid("apply_pyramid requires n >= 2"));
    }
    let acc: MeanVar = run_blocks(n, stream, |rng, count, _| {
        let mut acc = MeanVar::default();
        let mut buf = vec![0.0; d];
        for _ in 0..count {
            let p = sample_manifold_with(d, rng);
            acc.push(pyramid_sample(&f, &g, &h, x, &p, &mut buf));
        }
        acc
    });
    Ok(acc.estimate())
}

/// `T(f,g,h)(x)` averaged over a shared batch.
pub fn pyramid_on_batch<F, G, H>(
    f: F,
    g: G,
    h: H,
    x: &[f64],
    batch: &SampleBatch,
) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> f64,
    H: Fn(&[f64]) -> f64,
{
    check_point(batch.d, x)?;
    let mut acc = MeanVar::default();
    let mut buf = vec![0.0; batch.d];
    for p in &batch.vertices {
        acc.push(pyramid_sample(&f, &g, &h, x, p, &mut buf));
    }
    Ok(acc.estimate())
}

/// `Δ(f,g)(x)` by Monte Carlo. Only the first two vertices of each sample
/// enter, so `d = 3` is allowed.
pub fn apply_triangle(
    f: &TestFunction,
    g: &TestFunction,
    x: &[f64],
    n: usize,
    stream: RngStream,
) -> Result<Estimate> {
    triangle_with(|y| f.eval(y), |y| g.eval(y), x, n, stream)
}

pub fn triangle_with<F, G>(f: F, g: G, x: &[f64], n: usize, stream: RngStream) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> f64 + Sync,
{
    let d = x.len();
    if d < 3 {
        return Err(invalid("apply_triangle requires d >= 3"));
    }
    check_point(d, x)?;
    if n < 2 {
        return Err(invalid("apply_triangle requires n >= 2"));
    }
    let acc: MeanVar = run_blocks(n, stream, |rng, count, _| {
        let mut acc = MeanVar::default();
        let mut buf = vec![0.0; d];
        for _ in 0..count {
            let p = sample_manifold_with(d, rng);
            acc.push(triangle_sample(&f, &g, x, &p, &mut buf));
        }
        acc
    });
    Ok(acc.estimate())
}

pub fn triangle_on_batch<F, G>(f: F, g: G, x: &[f64], batch: &SampleBatch) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> f64,
{
    check_point(batch.d, x)?;
    let mut acc = MeanVar::default();
    let mut buf = vec![0.0; batch.d];
    for p in &batch.vertices {
        acc.push(triangle_sample(&f, &g, x, p, &mut buf));
    }
    Ok(acc.estimate())
}

/// `E exp(c σ₁ − offset)` for `σ` uniform on `𝕊^{d−1}`, by Gauss–Legendre in
/// `σ₁ = sin φ`.
fn sphere_exponential_mean(d: usize, c: f64, offset: f64) -> f64 {
    let (x, w) = gauss_legendre(96);
    let half = PI / 2.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let phi = half * xi;
        let base = wi * phi.cos().powi(d as i32 - 2);
        num += base * (c * phi.sin() - offset).exp();
        den += base;
    }
    num / den
}

/// Average of the centered gaussian of width `width` over the sphere of
/// radius `radius` about a point at distance `x_norm` from the origin.
pub fn gaussian_sphere_average(d: usize, width: f64, radius: f64, x_norm: f64) -> Result<f64> {
    if d < 2 || !(width > 0.0) || !(radius >= 0.0) || !(x_norm >= 0.0) {
        return Err(invalid("gaussian_sphere_average arguments out of range"));
    }
    let a = PI / (width * width);
    Ok(sphere_exponential_mean(
        d,
        2.0 * a * radius * x_norm,
        a * (x_norm * x_norm + radius * radius),
    ))
}

/// `T(f,g,h)(x)` for origin-centered gaussians of the given widths.
///
/// The exponent is `Σ αₖ|x−uₖ|²` with `αₖ = π/wₖ²`; only `x·Σαₖuₖ`
/// depends on the sample, and `Σαₖuₖ` is uniform on the sphere of radius
/// `|Σαₖuₖ|`, fixed by the unit edge lengths.
pub fn gaussian_triple_exact(d: usize, widths: [f64; 3], x_norm: f64) -> Result<f64> {
    if d < 4 || widths.iter().any(|w| !(*w > 0.0)) || !(x_norm >= 0.0) {
        return Err(invalid("gaussian_triple_exact arguments out of range"));
    }
    let al: Vec<f64> = widths.iter().map(|w| PI / (w * w)).collect();
    let sum: f64 = al.iter().sum();
    // Gram matrix of the three vertices: unit diagonal, 1/2 off it
    let sq: f64 =
        al.iter().map(|a| a * a).sum::<f64>() + (al[0] * al[1] + al[1] * al[2] + al[0] * al[2]);
    let radius = sq.sqrt();
    Ok(sphere_exponential_mean(
        d,
        2.0 * radius * x_norm,
        sum * (x_norm * x_norm + 1.0),
    ))
}

/// Rectangular or radial evaluation grid for `‖T(f,g,h)‖_r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    /// Nodes per axis (cartesian) or radial Gauss–Legendre nodes.
    pub nodes: usize,
    /// Half-width of the cube or radial cutoff; derived from the functions
    /// when `None`.
    pub extent: Option<f64>,
}

impl GridSpec {
    pub fn refined(self) -> Self {
        Self {
            nodes: self.nodes * 2,
            ..self
        }
    }
}

/// `‖T(f,g,h)‖_r` and the ratio against `‖f‖_p‖g‖_q‖h‖_s`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormRatio {
    pub lambda: f64,
    pub nodes: usize,
    pub t_norm: f64,
    pub f_norm: f64,
    pub g_norm: f64,
    pub h_norm: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormRatioReport {
    pub d: usize,
    pub point: ExponentPoint,
    pub inv_r: String,
    pub method: NormMethod,
    pub extent: f64,
    pub samples: usize,
    pub base: NormRatio,
    pub refined: NormRatio,
    pub dilations: Vec<NormRatio>,
    /// Largest over smallest ratio across refinement and dilation.
    pub spread: f64,
    pub stable: bool,
}

pub const STABILITY_FACTOR: f64 = 2.0;

fn default_extent(fs: [&TestFunction; 3]) -> Result<f64> {
    let mut best: Option<f64> = None;
    for f in fs {
        if let Some((c, r)) = f.essential_ball() {
            let reach = c.iter().map(|x| x * x).sum::<f64>().sqrt() + r + 1.0;
            best = Some(best.map_or(reach, |b: f64| b.min(reach)));
        }
    }
    best.ok_or_else(|| {
        invalid("no function has a bounded essential support; give an explicit extent")
    })
}

/// `(Σ|T|^r vol)^{1/r}` over the grid; `r = ∞` for `inv_r = 0`.
#[allow(clippy::too_many_arguments)]
fn t_norm(
    fs: [&TestFunction; 3],
    inv_r: f64,
    radial: bool,
    extent: f64,
    nodes: usize,
    batch: &SampleBatch,
) -> Result<f64> {
    let d = batch.d;
    let eval = |x: &[f64]| -> Result<f64> {
        Ok(pyramid_on_batch(
            |y| fs[0].eval(y),
            |y| fs[1].eval(y),
            |y| fs[2].eval(y),
            x,
            batch,
        )?
        .value
        .abs())
    };
    let power = |v: f64, w: f64| {
        if inv_r == 0.0 {
            v
        } else {
            w * v.powf(1.0 / inv_r)
        }
    };
    let combine = |parts: Vec<f64>| {
        if inv_r == 0.0 {
            parts.into_iter().fold(0.0, f64::max)
        } else {
            parts.into_iter().sum::<f64>().powf(inv_r)
        }
    };
    if radial {
        let (x, w) = gauss_legendre(nodes);
        let area = sphere_area(d);
        let parts: Result<Vec<f64>> = x
            .par_iter()
            .zip(w.par_iter())
            .map(|(xi, wi)| {
                let rho = 0.5 * extent * (xi + 1.0);
                let mut pt = vec![0.0; d];
                pt[0] = rho;
                let v = eval(&pt)?;
                Ok(power(v, 0.5 * extent * wi * area * rho.powi(d as i32 - 1)))
            })
            .collect();
        Ok(combine(parts?))
    } else {
        let total = nodes
            .checked_pow(d as u32)
            .ok_or_else(|| invalid("grid too large"))?;
        if total > 5_000_000 {
            return Err(invalid("grid too large"));
        }
        let h = 2.0 * extent / nodes as f64;
        let cell = h.powi(d as i32);
        let parts: Result<Vec<f64>> = (0..total)
            .into_par_iter()
            .map(|mut idx| {
                let mut pt = vec![0.0; d];
                for c in pt.iter_mut() {
                    *c = -extent + h * ((idx % nodes) as f64 + 0.5);
                    idx /= nodes;
                }
                Ok(power(eval(&pt)?, cell))
            })
            .collect();
        Ok(combine(parts?))
    }
}

/// Empirical `‖T(f,g,h)‖_r / (‖f‖_p‖g‖_q‖h‖_s)` at `point`, recomputed on a
/// refined grid and under `f ↦ f(λ·)` applied to all three functions for
/// `λ ∈ {1/2, 2}`. A probe of finiteness and stability, not a norm bound.
pub fn norm_ratio_scan(
    f: &TestFunction,
    g: &TestFunction,
    h: &TestFunction,
    point: &ExponentPoint,
    grid: GridSpec,
    budget: usize,
    stream: RngStream,
) -> Result<NormRatioReport> {
    let d = f.dim;
    if g.dim != d || h.dim != d {
        return Err(invalid("test functions must share a dimension"));
    }
    if d < 4 {
        return Err(invalid("norm_ratio_scan requires d >= 4"));
    }
    if grid.nodes < 2 {
        return Err(invalid("grid needs at least two nodes"));
    }
    if !contains(&hull(HullLabel::Thm1S, d as u32)?, point).is_inside() {
        return Err(invalid(format!("{point} lies outside the claimed region")));
    }
    let inv_r = r_exponent(point);
    let inv_r_f = inv_r.to_f64().unwrap_or(f64::NAN);
    let radial = [f, g, h].iter().all(|t| t.radial_about_origin());
    let method = if radial {
        NormMethod::RadialQuadrature
    } else {
        NormMethod::Grid
    };
    let batch = SampleBatch::draw(d, budget, stream)?;
    let base_extent = match grid.extent {
        Some(e) if e > 0.0 => e,
        Some(_) => return Err(invalid("grid extent must be positive")),
        None => default_extent([f, g, h])?,
    };

    let one = |lambda: f64, nodes: usize| -> Result<NormRatio> {
        let fs = [f.dilated(lambda)?, g.dilated(lambda)?, h.dilated(lambda)?];
        // the support of T scales like that of the functions plus the unit simplex
        let extent = if grid.extent.is_some() {
            base_extent
        } else {
            default_extent([&fs[0], &fs[1], &fs[2]])?
        };
        let tn = t_norm(
            [&fs[0], &fs[1], &fs[2]],
            inv_r_f,
            radial,
            extent,
            nodes,
            &batch,
        )?;
        let nf = fs[0].lp_norm(point.inv_p())?.value;
        let ng = fs[1].lp_norm(point.inv_q())?.value;
        let nh = fs[2].lp_norm(point.inv_s())?.value;
        Ok(NormRatio {
            lambda,
            nodes,
            t_norm: tn,
            f_norm: nf,
            g_norm: ng,
            h_norm: nh,
            ratio: tn / (nf * ng * nh),
        })
    };
    let base = one(1.0, grid.nodes)?;
    let refined = one(1.0, grid.refined().nodes)?;
    let dilations = vec![one(0.5, grid.nodes)?, one(2.0, grid.nodes)?];
    let all: Vec<f64> = std::iter::once(base.ratio)
        .chain(std::iter::once(refined.ratio))
        .chain(dilations.iter().map(|r| r.ratio))
        .collect();
    let max = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = max / min;
    let refinement_ok = {
        let q = refined.ratio / base.ratio;
        q.is_finite() && q < STABILITY_FACTOR && q > 1.0 / STABILITY_FACTOR
    };
    Ok(NormRatioReport {
        d,
        point: point.clone(),
        inv_r: format!("{inv_r}"),
        method,
        extent: base_extent,
        samples: budget,
        stable: all.iter().all(|r| r.is_finite() && *r > 0.0)
            && refinement_ok
            && spread < STABILITY_FACTOR,
        spread,
        base,
        refined,
        dilations,
    })
}

/// One domination probe `|T(f,g,h)(x)| ≤ ‖h‖_∞ Δ(|f|,|g|)(x)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominationProbe {
    pub x: Vec<f64>,
    pub pyramid: Estimate,
    pub triangle: Estimate,
    pub h_sup: f64,
    /// `(|T| − ‖h‖_∞Δ) / combined stderr`; positive values are excess.
    pub excess_z: f64,
    pub holds: bool,
}

pub fn domination_probe(
    f: &TestFunction,
    g: &TestFunction,
    h: &TestFunction,
    x: &[f64],
    n: usize,
    stream: RngStream,
    k: f64,
) -> Result<DominationProbe> {
    let t = apply_pyramid(
        f,
        g,
        h,
        x,
        n,
        RngStream::new(stream.seed, stream.stream_id.wrapping_mul(2)),
    )?;
    let (fa, ga) = (f.abs(), g.abs());
    let tri = apply_triangle(
        &fa,
        &ga,
        x,
        n,
        RngStream::new(stream.seed, stream.stream_id.wrapping_mul(2) + 1),
    )?;
    let hs = h.sup_norm();
    let gap = t.value.abs() - hs * tri.value;
    let se = t.stderr.hypot(hs * tri.stderr);
    let excess_z = if se > 0.0 {
        gap / se
    } else if gap > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(DominationProbe {
        x: x.to_vec(),
        pyramid: t,
        triangle: tri,
        h_sup: hs,
        excess_z,
        holds: gap <= k * se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{normalized_sphere_ft, SphereDim};
    use num_bigint::BigInt;
    use rand::Rng;

    fn origin(d: usize) -> Vec<f64> {
        vec![0.0; d]
    }

    fn rat(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn large_ball_gives_one() {
        let d = 5;
        let b = TestFunction::ball_indicator(origin(d), 10.0).unwrap();
        let e = apply_pyramid(&b, &b, &b, &origin(d), 1000, RngStream::new(1, 0)).unwrap();
        assert_eq!(e.value, 1.0);
        let e = apply_triangle(&b, &b, &origin(d), 1000, RngStream::new(1, 1)).unwrap();
        assert_eq!(e.value, 1.0);
        assert!(apply_pyramid(&b, &b, &b, &origin(3), 100, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn gaussian_triple_matches_reduction() {
        let d = 5;
        let mut rng = RngStream::new(3, 0).rng();
        for k in 0..4 {
            let widths = [1.0, 0.8 + 0.2 * k as f64, 1.3];
            let fs: Vec<TestFunction> = widths
                .iter()
                .map(|w| TestFunction::gaussian(origin(d), *w).unwrap())
                .collect();
            let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() - 0.5).collect();
            let xn = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            let e = apply_pyramid(
                &fs[0],
                &fs[1],
                &fs[2],
                &x,
                200_000,
                RngStream::new(3, 1 + k),
            )
            .unwrap();
            let exact = gaussian_triple_exact(d, widths, xn).unwrap();
            assert!(
                (e.value - exact).abs() <= 3.0 * e.stderr,
                "{} vs {exact} ± {}",
                e.value,
                e.stderr
            );
        }
        // at the origin the integrand is constant
        let v = gaussian_triple_exact(d, [1.0; 3], 0.0).unwrap();
        assert!((v - (-3.0 * PI).exp()).abs() < 1e-15);
    }

    #[test]
    fn triangle_with_unit_g_is_sphere_average() {
        let d = 5;
        let w = 0.9;
        let f = TestFunction::gaussian(origin(d), w).unwrap();
        let one = TestFunction::constant(d, 1.0).unwrap();
        let mut x = origin(d);
        x[2] = 0.7;
        let e = apply_triangle(&f, &one, &x, 100_000, RngStream::new(4, 0)).unwrap();
        let exact = gaussian_sphere_average(d, w, 1.0, 0.7).unwrap();
        assert!((e.value - exact).abs() <= 3.0 * e.stderr);
        // Fourier side at the origin: ∫ f̂(ξ) σ̂(|ξ|) dξ, radially
        let ft =
            |rho: f64| normalized_sphere_ft(SphereDim::new(d as u32 - 1).unwrap(), rho).unwrap();
        let (xs, ws) = gauss_legendre(200);
        let top = 8.0 / w;
        let fourier: f64 = xs
            .iter()
            .zip(&ws)
            .map(|(t, wt)| {
                let rho = 0.5 * top * (t + 1.0);
                0.5 * top
                    * wt
                    * w.powi(d as i32)
                    * (-PI * w * w * rho * rho).exp()
                    * ft(rho)
                    * sphere_area(d)
                    * rho.powi(d as i32 - 1)
            })
            .sum();
        let direct = gaussian_sphere_average(d, w, 1.0, 0.0).unwrap();
        assert!((fourier - direct).abs() < 1e-10, "{fourier} vs {direct}");
        assert!((direct - (-PI / (w * w)).exp()).abs() < 1e-14);
    }

    #[test]
    fn probability_bound_and_domination() {
        let d = 5;
        let mut rng = RngStream::new(5, 0).rng();
        for k in 0..20u64 {
            let c: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() - 0.5).collect();
            let f = TestFunction::gaussian(c.clone(), 1.0).unwrap();
            let g = TestFunction::ball_indicator(c, 1.2).unwrap();
            let h = TestFunction::constant(d, -2.0).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() - 0.5).collect();
            let p =
                domination_probe(&f, &g, &h, &x, 20_000, RngStream::new(5, k + 1), 3.0).unwrap();
            assert!(p.holds, "{p:?}");
            assert!(p.pyramid.value.abs() <= 2.0);
        }
    }

    #[test]
    fn crn_multilinearity_and_translation() {
        let d = 5;
        let batch = SampleBatch::draw(d, 5000, RngStream::new(6, 0)).unwrap();
        let f1 = TestFunction::gaussian(vec![0.1, 0.0, 0.2, 0.0, 0.0], 1.0).unwrap();
        let f2 = TestFunction::product_decay(origin(d), 1.5).unwrap();
        let g = TestFunction::gaussian(origin(d), 1.4).unwrap();
        let h = TestFunction::ball_indicator(origin(d), 2.0).unwrap();
        let x = vec![0.3, -0.2, 0.1, 0.0, 0.4];
        let (a, b) = (1.7, -0.6);
        let lhs = pyramid_on_batch(
            |y| a * f1.eval(y) + b * f2.eval(y),
            |y| g.eval(y),
            |y| h.eval(y),
            &x,
            &batch,
        )
        .unwrap();
        let t1 =
            pyramid_on_batch(|y| f1.eval(y), |y| g.eval(y), |y| h.eval(y), &x, &batch).unwrap();
        let t2 =
            pyramid_on_batch(|y| f2.eval(y), |y| g.eval(y), |y| h.eval(y), &x, &batch).unwrap();
        let rhs = a * t1.value + b * t2.value;
        assert!((lhs.value - rhs).abs() <= 1e-10 * rhs.abs());

        let y = vec![0.5, 0.1, -0.3, 0.2, 0.0];
        let (fy, gy, hy) = (
            f1.translated(&y).unwrap(),
            g.translated(&y).unwrap(),
            f2.translated(&y).unwrap(),
        );
        let shifted =
            pyramid_on_batch(|z| fy.eval(z), |z| gy.eval(z), |z| hy.eval(z), &x, &batch).unwrap();
        let xm: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let plain =
            pyramid_on_batch(|z| f1.eval(z), |z| g.eval(z), |z| f2.eval(z), &xm, &batch).unwrap();
        assert!((shifted.value - plain.value).abs() <= 1e-10 * plain.value.abs());
    }

    #[test]
    fn closed_form_norms() {
        let d = 4;
        let g = TestFunction::gaussian(origin(d), 1.3).unwrap();
        // ‖g‖₂² = (w²/2)^{d/2}
        let n2 = g.lp_norm(&rat(1, 2)).unwrap().value;
        assert!((n2 * n2 - (1.69f64 / 2.0).powi(2)).abs() < 1e-14);
        assert_eq!(g.lp_norm(&rat(0, 1)).unwrap().value, 1.0);
        let b = TestFunction::ball_indicator(origin(d), 2.0).unwrap();
        assert!((b.lp_norm(&rat(1, 1)).unwrap().value - PI * PI / 2.0 * 16.0).abs() < 1e-12);
        let p = TestFunction::product_decay(origin(d), 1.0).unwrap();
        // ∫ (1+t²)^{−1} = π
        assert!((p.lp_norm(&rat(1, 1)).unwrap().value - PI.powi(4)).abs() < 1e-10);
        assert!(TestFunction::product_decay(origin(d), 0.25)
            .unwrap()
            .lp_norm(&rat(1, 1))
            .is_err());
        assert_eq!(
            TestFunction::constant(d, 1.0)
                .unwrap()
                .lp_norm(&rat(1, 2))
                .unwrap()
                .value,
            f64::INFINITY
        );
        assert!(TestFunction::gaussian(origin(d), 0.0).is_err());
    }

    #[test]
    fn spherical_average_ratio_at_banach_corner() {
        let d = 5;
        let f = TestFunction::gaussian(origin(d), 1.0).unwrap();
        let one = TestFunction::constant(d, 1.0).unwrap();
        let point = ExponentPoint::from_ints([(1, 1), (0, 1), (0, 1)]).unwrap();
        let r = norm_ratio_scan(
            &f,
            &one,
            &one,
            &point,
            GridSpec {
                nodes: 24,
                extent: None,
            },
            40_000,
            RngStream::new(7, 0),
        )
        .unwrap();
        assert_eq!(r.method, NormMethod::RadialQuadrature);
        // ‖σ∗f‖₁/‖f‖₁ from the exact sphere average, by radial quadrature
        let (xs, ws) = gauss_legendre(64);
        let top = r.extent;
        let exact: f64 = xs
            .iter()
            .zip(&ws)
            .map(|(t, w)| {
                let rho = 0.5 * top * (t + 1.0);
                0.5 * top
                    * w
                    * gaussian_sphere_average(d, 1.0, 1.0, rho).unwrap()
                    * sphere_area(d)
                    * rho.powi(d as i32 - 1)
            })
            .sum();
        assert!((exact - 1.0).abs() < 1e-9);
        // one shared batch read along a single ray: MC error is correlated
        // across nodes and does not average out
        assert!((r.base.ratio - exact).abs() < 0.1, "{r:?}");
        assert!(r.stable);
    }

    #[test]
    fn centre_point_ratio_is_stable() {
        let d = 5;
        let f = TestFunction::gaussian(origin(d), 1.0).unwrap();
        let point = ExponentPoint::from_ints([(1, 2), (1, 2), (1, 2)]).unwrap();
        let r = norm_ratio_scan(
            &f,
            &f,
            &f,
            &point,
            GridSpec {
                nodes: 24,
                extent: None,
            },
            4000,
            RngStream::new(8, 0),
        )
        .unwrap();
        assert!(r.base.ratio.is_finite() && r.base.ratio > 0.0);
        assert!((r.refined.ratio / r.base.ratio - 1.0).abs() < 0.05);
        let outside = ExponentPoint::from_ints([(1, 1), (1, 1), (0, 1)]).unwrap();
        assert!(norm_ratio_scan(
            &f,
            &f,
            &f,
            &outside,
            GridSpec {
                nodes: 8,
                extent: None
            },
            100,
            RngStream::new(8, 1)
        )
        .is_err());
    }
}
