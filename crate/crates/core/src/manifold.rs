//! The manifold of unit regular tetrahedra with one vertex at the origin and
//! Monte Carlo integration against its rotation-invariant probability
//! measure.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::rotation::{sample_frame_with, Rotation};
use crate::stats::{run_blocks, ComplexEstimate, ComplexMeanVar};

/// Coefficients of the canonical vertices in the orthonormal frame
/// `(f₁, f₂, f₃)`: `v₀ = V_A f₁ + V_B f₂`, `w₀ = W_A f₁ + W_B f₂ + W_C f₃`.
pub const V_A: f64 = 0.5;
pub const V_B: f64 = 0.866_025_403_784_438_6;
pub const W_A: f64 = 0.5;
pub const W_B: f64 = 0.288_675_134_594_812_9;
pub const W_C: f64 = 0.816_496_580_927_726;

/// Non-origin vertices `(u, v, w)` of a unit tetrahedron.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PyramidVertices {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl PyramidVertices {
    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// Vertices spanned by the first three vectors of an orthonormal frame.
    pub fn from_frame(f1: &[f64], f2: &[f64], f3: &[f64]) -> Self {
        let u = f1.to_vec();
        let v = f1.iter().zip(f2).map(|(a, b)| V_A * a + V_B * b).collect();
        let w = f1
            .iter()
            .zip(f2)
            .zip(f3)
            .map(|((a, b), c)| W_A * a + W_B * b + W_C * c)
            .collect();
        Self { u, v, w }
    }

    /// Largest deviation among the six metric constraints (three unit
    /// norms, three unit edges).
    pub fn metric_defect(&self) -> f64 {
        let n = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dist = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        [
            n(&self.u),
            n(&self.v),
            n(&self.w),
            dist(&self.u, &self.v),
            dist(&self.v, &self.w),
            dist(&self.w, &self.u),
        ]
        .iter()
        .map(|x| (x - 1.0).abs())
        .fold(0.0, f64::max)
    }

    pub fn rotated(&self, q: &Rotation) -> Self {
        Self {
            u: q.apply(&self.u),
            v: q.apply(&self.v),
            w: q.apply(&self.w),
        }
    }
}

fn unit(d: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[k] = 1.0;
    e
}

/// `(e₁, ½e₁ + (√3/2)e₂, ½e₁ + (1/(2√3))e₂ + √(2/3)e₃)`.
pub fn canonical_vertices(d: usize) -> Result<PyramidVertices> {
    if d < 3 {
        return Err(invalid("canonical_vertices requires d >= 3"));
    }
    Ok(PyramidVertices::from_frame(
        &unit(d, 0),
        &unit(d, 1),
        &unit(d, 2),
    ))
}

/// `(Re₁, Rv₀, Rw₀)` for Haar `R`, drawn from `rng`. Only the first three
/// columns of `R` enter, so only those are sampled.
pub fn sample_manifold_with<R: Rng + ?Sized>(d: usize, rng: &mut R) -> PyramidVertices {
    let f = sample_frame_with(d, 3, rng);
    PyramidVertices::from_frame(&f[0], &f[1], &f[2])
}

pub fn sample_manifold(d: usize, stream: RngStream) -> Result<PyramidVertices> {
    if d < 4 {
        return Err(invalid("sample_manifold requires d >= 4"));
    }
    Ok(sample_manifold_with(d, &mut stream.rng()))
}

/// Monte Carlo estimate of `∫_M F dμ` with `μ` a probability measure.
pub fn surface_integral_mc<F>(
    f: F,
    d: usize,
    n: usize,
    stream: RngStream,
) -> Result<ComplexEstimate>
where
    F: Fn(&PyramidVertices) -> Complex64 + Sync,
{
    if d < 4 {
        return Err(invalid("surface_integral_mc requires d >= 4"));
    }
    if n < 100 {
        return Err(invalid("surface_integral_mc requires n >= 100"));
    }
    let (acc, bad): (ComplexMeanVar, Vec<usize>) = run_blocks(n, stream, |rng, count, start| {
        let mut acc = ComplexMeanVar::default();
        let mut bad = Vec::new();
        for i in 0..count {
            let z = f(&sample_manifold_with(d, rng));
            if z.is_finite() {
                acc.push(z);
            } else if bad.is_empty() {
                bad.push(start + i);
            }
        }
        (acc, bad)
    });
    if let Some(&index) = bad.first() {
        return Err(Error::NonFiniteSample { index });
    }
    Ok(acc.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::sample_haar;
    use crate::special::{normalized_sphere_ft, SphereDim};
    use crate::stats::ks_one_sample;
    use std::f64::consts::PI;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn frame_constants() {
        assert_eq!(V_B, 3f64.sqrt() / 2.0);
        assert!((W_B - 1.0 / (2.0 * 3f64.sqrt())).abs() < 1e-16);
        assert!((W_C - (2.0f64 / 3.0).sqrt()).abs() < 1e-16);
    }

    #[test]
    fn canonical_is_unit_tetrahedron() {
        for d in [3, 4, 7] {
            let p = canonical_vertices(d).unwrap();
            assert!(p.metric_defect() < 1e-12);
            assert!((dot(&p.u, &p.v) - 0.5).abs() < 1e-15);
            for x in [&p.u, &p.v, &p.w] {
                assert!(x[3..].iter().all(|&c| c == 0.0));
            }
        }
        assert!(canonical_vertices(2).is_err());
    }

    #[test]
    fn samples_satisfy_metric_and_uniform_marginal() {
        let d = 5;
        let mut rng = RngStream::new(7, 0).rng();
        let samples: Vec<PyramidVertices> = (0..10_000)
            .map(|_| sample_manifold_with(d, &mut rng))
            .collect();
        assert!(samples.iter().all(|p| p.metric_defect() < 1e-10));
        // u₁ on 𝕊⁴ has density ∝ (1−x²) on [−1,1]
        let xs: Vec<f64> = samples.iter().map(|p| p.u[0]).collect();
        let cdf = |x: f64| {
            let x = x.clamp(-1.0, 1.0);
            (3.0 * x - x.powi(3) + 2.0) / 4.0
        };
        let (_, p) = ks_one_sample(&xs, cdf);
        assert!(p > 0.01, "p = {p}");
        let mean_uv = samples.iter().map(|p| dot(&p.u, &p.v)).sum::<f64>() / 1e4;
        assert!((mean_uv - 0.5).abs() < 4.0 / 100.0);
        assert!(sample_manifold(3, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn constant_and_inner_product_integrals() {
        let c = Complex64::new(0.3, -2.0);
        let e = surface_integral_mc(|_| c, 4, 500, RngStream::new(1, 0)).unwrap();
        assert!((e.value - c).norm() < 1e-14);
        assert_eq!(e.stderr_re, 0.0);

        let e = surface_integral_mc(
            |p| Complex64::new(dot(&p.u, &p.v), 0.0),
            6,
            1000,
            RngStream::new(1, 1),
        )
        .unwrap();
        assert!((e.value.re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn plane_wave_matches_sphere_transform() {
        for d in [4, 5] {
            let mut xi = vec![0.0; d];
            xi[1] = 0.4;
            xi[3] = -0.3;
            let e = surface_integral_mc(
                |p| Complex64::from_polar(1.0, -2.0 * PI * dot(&xi, &p.u)),
                d,
                40_000,
                RngStream::new(2, d as u64),
            )
            .unwrap();
            let exact = normalized_sphere_ft(SphereDim::new(d as u32 - 1).unwrap(), 0.5).unwrap();
            assert!(
                (e.value.re - exact).abs() <= 3.0 * e.stderr_re,
                "{} vs {exact}",
                e.value.re
            );
            assert!(e.value.im.abs() <= 3.0 * e.stderr_im);
        }
    }

    #[test]
    fn rotation_invariance_of_measure() {
        let d = 5;
        let q = sample_haar(d, RngStream::new(3, 3)).unwrap();
        let g = |p: &PyramidVertices| Complex64::new((p.u[0] + 2.0 * p.v[1] - p.w[2]).powi(2), 0.0);
        let a = surface_integral_mc(g, d, 20_000, RngStream::new(3, 0)).unwrap();
        let b =
            surface_integral_mc(|p| g(&p.rotated(&q)), d, 20_000, RngStream::new(3, 1)).unwrap();
        assert!(a.agrees_with(&b, 3.0));
    }

    #[test]
    fn non_finite_sample_reported() {
        let e = surface_integral_mc(
            |_| Complex64::new(f64::NAN, 0.0),
            4,
            200,
            RngStream::new(0, 0),
        )
        .unwrap_err();
        assert_eq!(e, Error::NonFiniteSample { index: 0 });
    }
}
