//! Monte Carlo accumulators, block-parallel driver and Kolmogorov–Smirnov
//! helpers.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::rng::RngStream;

/// Samples per independent RNG block. Fixed so results do not depend on the
/// thread count.
pub const BLOCK_SIZE: usize = 4096;

/// Real-valued estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// `|a - b| ≤ k·sqrt(σa² + σb²)`.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        (self.value - other.value).abs() <= k * self.stderr.hypot(other.stderr)
    }

    /// Difference in units of the combined standard error.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let s = self.stderr.hypot(other.stderr);
        let diff = (self.value - other.value).abs();
        if s == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / s
        }
    }
}

/// Complex-valued estimate with per-component standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComplexEstimate {
    pub value: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
}

impl ComplexEstimate {
    pub fn exact(value: Complex64) -> Self {
        Self {
            value,
            stderr_re: 0.0,
            stderr_im: 0.0,
        }
    }

    pub fn re(&self) -> Estimate {
        Estimate {
            value: self.value.re,
            stderr: self.stderr_re,
        }
    }

    pub fn im(&self) -> Estimate {
        Estimate {
            value: self.value.im,
            stderr: self.stderr_im,
        }
    }

    /// Both components within `k` combined standard errors.
    pub fn agrees_with(&self, other: &ComplexEstimate, k: f64) -> bool {
        self.re().agrees_with(&other.re(), k) && self.im().agrees_with(&other.im(), k)
    }

    /// Worst per-component z-score against `other`.
    pub fn z_score(&self, other: &ComplexEstimate) -> f64 {
        self.re()
            .z_score(&other.re())
            .max(self.im().z_score(&other.im()))
    }

    /// Combined standard error of the modulus (upper bound).
    pub fn stderr(&self) -> f64 {
        self.stderr_re.hypot(self.stderr_im)
    }
}

/// Welford mean/variance accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct MeanVar {
    n: u64,
    mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &MeanVar) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn estimate(&self) -> Estimate {
        let stderr = if self.n > 1 {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            0.0
        };
        Estimate {
            value: self.mean,
            stderr,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ComplexMeanVar {
    pub re: MeanVar,
    pub im: MeanVar,
}

impl ComplexMeanVar {
    pub fn push(&mut self, z: Complex64) {
        self.re.push(z.re);
        self.im.push(z.im);
    }

    pub fn merge(&mut self, other: &ComplexMeanVar) {
        self.re.merge(&other.re);
        self.im.merge(&other.im);
    }

    pub fn estimate(&self) -> ComplexEstimate {
        let re = self.re.estimate();
        let im = self.im.estimate();
        ComplexEstimate {
            value: Complex64::new(re.value, im.value),
            stderr_re: re.stderr,
            stderr_im: im.stderr,
        }
    }
}

/// Runs `n` samples split into fixed blocks, each block on its own
/// substream, and merges block accumulators in block order.
///
/// `block` receives the block RNG and the number of samples to draw, plus the
/// index of the block's first sample.
pub fn run_blocks<A, F>(n: usize, stream: RngStream, block: F) -> A
where
    A: Default + Send,
    F: Fn(&mut ChaCha8Rng, usize, usize) -> A + Sync,
    A: Mergeable,
{
    let nblocks = n.div_ceil(BLOCK_SIZE);
    let parts: Vec<A> = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_SIZE;
            let count = BLOCK_SIZE.min(n - start);
            let mut rng = stream.substream(b as u64).rng();
            block(&mut rng, count, start)
        })
        .collect();
    let mut acc = A::default();
    for p in &parts {
        acc.merge_from(p);
    }
    acc
}

pub trait Mergeable {
    fn merge_from(&mut self, other: &Self);
}

impl Mergeable for MeanVar {
    fn merge_from(&mut self, other: &Self) {
        self.merge(other);
    }
}

impl Mergeable for ComplexMeanVar {
    fn merge_from(&mut self, other: &Self) {
        self.merge(other);
    }
}

impl<A: Mergeable, B: Mergeable> Mergeable for (A, B) {
    fn merge_from(&mut self, other: &Self) {
        self.0.merge_from(&other.0);
        self.1.merge_from(&other.1);
    }
}

impl<T: Clone> Mergeable for Vec<T> {
    fn merge_from(&mut self, other: &Self) {
        self.extend_from_slice(other);
    }
}

/// Asymptotic p-value of the Kolmogorov distribution, `P(K > λ)`.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test against a continuous CDF; returns `(D, p)`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    (d, kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d))
}

/// Two-sample KS test; returns `(D, p)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len(), xb.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = xa[i].min(xb[j]);
        while i < na && xa[i] <= x {
            i += 1;
        }
        while j < nb && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64 / (na + nb) as f64).sqrt();
    (d, kolmogorov_tail((ne + 0.12 + 0.11 / ne) * d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut whole = MeanVar::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut a = MeanVar::default();
        let mut b = MeanVar::default();
        xs[..333].iter().for_each(|&x| a.push(x));
        xs[333..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.estimate().value - whole.estimate().value).abs() < 1e-12);
        assert!((a.estimate().stderr - whole.estimate().stderr).abs() < 1e-12);
    }

    #[test]
    fn ks_accepts_uniform_and_rejects_shifted() {
        let mut rng = RngStream::new(1, 0).rng();
        let u: Vec<f64> = (0..5000).map(|_| rng.gen::<f64>()).collect();
        let (_, p) = ks_one_sample(&u, |x| x.clamp(0.0, 1.0));
        assert!(p > 0.01);
        let shifted: Vec<f64> = u.iter().map(|x| x * 0.9).collect();
        let (_, p) = ks_one_sample(&shifted, |x| x.clamp(0.0, 1.0));
        assert!(p < 1e-6);
        let v: Vec<f64> = (0..5000).map(|_| rng.gen::<f64>()).collect();
        assert!(ks_two_sample(&u, &v).1 > 0.01);
        assert!(ks_two_sample(&u, &shifted).1 < 1e-6);
    }

    #[test]
    fn block_results_are_deterministic() {
        let s = RngStream::new(3, 9);
        let f = |rng: &mut ChaCha8Rng, n: usize, _| {
            let mut m = MeanVar::default();
            (0..n).for_each(|_| m.push(rng.gen::<f64>()));
            m
        };
        let a = run_blocks(10_000, s, f).estimate();
        let b = run_blocks(10_000, s, f).estimate();
        assert_eq!(a, b);
        assert!((a.value - 0.5).abs() < 4.0 * a.stderr);
    }
}
