//! Dyadic partitions of frequency space in `|(η,δ)|`, `|η|/|δ|`, `|sin θ|`,
//! `|ξ|` and `|cos θ₁|`, the multiplier pieces they cut out, support-volume
//! estimates and the L² exponent bookkeeping.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{invalid, Degeneracy, Error, Result};
use crate::multiplier::FrequencyTriple;
use crate::rng::RngStream;
use crate::rotation::reduce_frequencies_lenient;
use crate::stats::{run_blocks, MeanVar};

pub const DEFAULT_EPSILON: f64 = 0.01;

/// `0` for `t ≤ 0`, `1` for `t ≥ 1`, `f(t)/(f(t)+f(1−t))` between, with
/// `f(t) = e^{−1/t}`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// Angular and radial data of a point that the cutoffs read.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointGeometry {
    pub xi_norm: f64,
    pub delta_norm: f64,
    pub eta_norm: f64,
    /// `|(η, δ)|`.
    pub pair_norm: f64,
    /// `|sin θ(δ, η)|`, undefined when `δ` or `η` vanishes.
    pub sin_theta: Option<f64>,
    /// `|cos θ₁|`, the normalized component of `ξ` off `span(δ, η)`;
    /// undefined unless `ξ ≠ 0` and the plane is two-dimensional.
    pub cos_theta1: Option<f64>,
}

impl PointGeometry {
    pub fn new(point: &FrequencyTriple) -> Result<Self> {
        if point.dim() < 4 {
            return Err(invalid("cutoffs require d >= 4"));
        }
        let r = reduce_frequencies_lenient(&point.xi, &point.delta, &point.eta)?;
        let f = r.frame;
        let pair_defined = f.delta_norm > 0.0 && f.eta_norm > 0.0;
        let plane = pair_defined && r.degeneracy != Some(Degeneracy::Parallel);
        Ok(Self {
            xi_norm: f.xi_norm,
            delta_norm: f.delta_norm,
            eta_norm: f.eta_norm,
            pair_norm: f.delta_norm.hypot(f.eta_norm),
            sin_theta: pair_defined.then_some(f.a3.abs()),
            cos_theta1: (plane && f.xi_norm > 0.0).then_some(f.b1.abs()),
        })
    }

    /// `log₂|η| − log₂|δ|`.
    pub fn log_ratio(&self) -> Option<f64> {
        (self.delta_norm > 0.0 && self.eta_norm > 0.0)
            .then(|| self.eta_norm.log2() - self.delta_norm.log2())
    }

    /// `min(|η|,|δ|) / max(|η|,|δ|)`.
    pub fn ratio(&self) -> Option<f64> {
        self.log_ratio().map(|l| (-l.abs()).exp2())
    }

    fn require_ratio(&self) -> Result<f64> {
        self.log_ratio()
            .ok_or(Error::DegenerateFrame(if self.delta_norm == 0.0 {
                Degeneracy::ZeroDelta
            } else {
                Degeneracy::ZeroEta
            }))
    }

    fn require_sin(&self) -> Result<f64> {
        self.sin_theta
            .ok_or(Error::DegenerateFrame(if self.delta_norm == 0.0 {
                Degeneracy::ZeroDelta
            } else {
                Degeneracy::ZeroEta
            }))
    }

    fn require_cos1(&self) -> Result<f64> {
        self.cos_theta1
            .ok_or(Error::DegenerateFrame(if self.xi_norm == 0.0 {
                Degeneracy::ZeroXi
            } else if self.delta_norm == 0.0 {
                Degeneracy::ZeroDelta
            } else if self.eta_norm == 0.0 {
                Degeneracy::ZeroEta
            } else {
                Degeneracy::Parallel
            }))
    }
}

/// The five cutoff families, parameterized by the ratio-partition overlap
/// `ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cutoffs {
    pub epsilon: f64,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl Cutoffs {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.1) {
            return Err(invalid("epsilon must lie in (0, 0.1)"));
        }
        Ok(Self { epsilon })
    }

    /// Radial profile `Φ₀`: 1 on `[0,1]`, 0 from 2 on. Also the `|ξ|`
    /// profile.
    pub fn ball_profile(&self, rho: f64) -> f64 {
        1.0 - smooth_step(rho - 1.0)
    }

    /// `Ψ`: 1 on `[0,1]`, 0 outside `(−ε, 1+ε)`.
    pub fn interval_profile(&self, t: f64) -> f64 {
        let e = self.epsilon;
        smooth_step((t + e) / e) * smooth_step((1.0 + e - t) / e)
    }

    /// `P`: 1 on `[−1,1]`, 0 outside `(−2,2)`.
    pub fn plateau_profile(&self, t: f64) -> f64 {
        1.0 - smooth_step(t.abs() - 1.0)
    }

    fn annulus(&self, i: u32, rho: f64) -> f64 {
        if i == 0 {
            self.ball_profile(rho)
        } else {
            self.ball_profile(rho * (-(i as f64)).exp2())
                - self.ball_profile(rho * (1.0 - i as f64).exp2())
        }
    }

    /// `φᵢ`, localizing `|(η,δ)|` near `2ⁱ`.
    pub fn phi(&self, i: u32, g: &PointGeometry) -> f64 {
        self.annulus(i, g.pair_norm)
    }

    /// `ζᵢ`, localizing `|ξ|` near `2ⁱ`.
    pub fn zeta(&self, i: u32, g: &PointGeometry) -> f64 {
        self.annulus(i, g.xi_norm)
    }

    /// `Ψᵢ(t) = Ψ(t−i) / Σₖ Ψ(t−k)`.
    pub fn normalized_interval(&self, i: i64, t: f64) -> f64 {
        let num = self.interval_profile(t - i as f64);
        if num == 0.0 {
            return 0.0;
        }
        let lo = (t - 1.0 - self.epsilon).floor() as i64;
        let hi = (t + self.epsilon).ceil() as i64;
        let den: f64 = (lo..=hi).map(|k| self.interval_profile(t - k as f64)).sum();
        num / den
    }

    /// `ψⱼ = Ψⱼ(L) + Ψ_{−j−1}(L)`, `L = log₂|η| − log₂|δ|`.
    pub fn psi(&self, j: u32, g: &PointGeometry) -> Result<f64> {
        let l = g.require_ratio()?;
        let j = j as i64;
        Ok(self.normalized_interval(j, l) + self.normalized_interval(-j - 1, l))
    }

    /// `ψ^i = Σ_{k≥i} ψₖ`.
    pub fn psi_upper(&self, i: u32, g: &PointGeometry) -> Result<f64> {
        if i == 0 {
            return Ok(1.0);
        }
        let l = g.require_ratio()?;
        // only finitely many Ψₖ(L) are nonzero; summing those keeps exact zeros
        let lo = (l - 1.0 - self.epsilon).floor() as i64;
        let hi = (l + self.epsilon).ceil() as i64;
        let i = i as i64;
        Ok((lo..=hi)
            .filter(|&k| k >= i || k < -i)
            .map(|k| self.normalized_interval(k, l))
            .sum())
    }

    /// Angular band `k` of the partition in `x = sin²` or `cos²`.
    fn angular(&self, k: u32, x: f64) -> f64 {
        if k == 0 {
            1.0 - self.plateau_profile(4.0 * x)
        } else {
            self.plateau_profile((2.0 * k as f64).exp2() * x)
                - self.plateau_profile((2.0 * k as f64 + 2.0).exp2() * x)
        }
    }

    fn angular_upper(&self, k: u32, x: f64) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.plateau_profile((2.0 * k as f64).exp2() * x)
        }
    }

    /// `ρₖ`, localizing `|sin θ|` near `2^{−k}`.
    pub fn rho(&self, k: u32, g: &PointGeometry) -> Result<f64> {
        let s = g.require_sin()?;
        Ok(self.angular(k, s * s))
    }

    /// `ρ^k = Σ_{m≥k} ρₘ`.
    pub fn rho_upper(&self, k: u32, g: &PointGeometry) -> Result<f64> {
        if k == 0 {
            return Ok(1.0);
        }
        let s = g.require_sin()?;
        Ok(self.angular_upper(k, s * s))
    }

    /// `ρ₁,ₖ`, localizing `|cos θ₁|` near `2^{−k}`.
    pub fn rho1(&self, k: u32, g: &PointGeometry) -> Result<f64> {
        let c = g.require_cos1()?;
        Ok(self.angular(k, c * c))
    }

    pub fn rho1_upper(&self, k: u32, g: &PointGeometry) -> Result<f64> {
        if k == 0 {
            return Ok(1.0);
        }
        let c = g.require_cos1()?;
        Ok(self.angular_upper(k, c * c))
    }

    /// Product of the cutoffs selecting piece `idx`. Factors are evaluated
    /// in order and a zero short-circuits, so undefined angles are only an
    /// error where the piece could be nonzero.
    pub fn piece_weight(&self, idx: PieceIndex, g: &PointGeometry) -> Result<f64> {
        let mut w = self.phi(idx.i, g) * self.zeta(idx.i, g);
        if w == 0.0 || idx.i == 0 {
            return Ok(w);
        }
        if idx.j == idx.i {
            return Ok(w * self.psi_upper(idx.i, g)?);
        }
        w *= self.psi(idx.j, g)?;
        if w == 0.0 {
            return Ok(0.0);
        }
        let top = idx.angular_levels();
        w *= if idx.k == top {
            self.rho_upper(idx.k, g)?
        } else {
            self.rho(idx.k, g)?
        };
        if w == 0.0 {
            return Ok(0.0);
        }
        w *= if idx.n == top {
            self.rho1_upper(idx.n, g)?
        } else {
            self.rho1(idx.n, g)?
        };
        Ok(w)
    }
}

/// Index of a multiplier piece: level `i` in `|(η,δ)|` and `|ξ|`, ratio
/// level `j`, `|sin θ|` level `k` and `|cos θ₁|` level `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PieceIndex {
    pub i: u32,
    pub j: u32,
    pub k: u32,
    pub n: u32,
}

impl PieceIndex {
    pub fn new(i: u32, j: u32, k: u32, n: u32) -> Result<Self> {
        let idx = Self { i, j, k, n };
        let ok = if i == 0 || j == i {
            j == i && k == 0 && n == 0
        } else {
            j < i && k <= idx.angular_levels() && n <= idx.angular_levels()
        };
        if ok {
            Ok(idx)
        } else {
            Err(invalid(format!("invalid piece index ({i}, {j}, {k}, {n})")))
        }
    }

    /// The piece with both angular levels equal to `k`.
    pub fn diagonal(i: u32, j: u32, k: u32) -> Result<Self> {
        Self::new(i, j, k, k)
    }

    /// `⌊(i−j)/2⌋`, the border angular level.
    pub fn angular_levels(&self) -> u32 {
        (self.i - self.j) / 2
    }

    pub fn is_typical(&self) -> bool {
        self.i > 0
            && self.j < self.i
            && self.k < self.angular_levels()
            && self.n < self.angular_levels()
    }

    /// Every valid index at level `i`.
    pub fn level(i: u32) -> Vec<PieceIndex> {
        if i == 0 {
            return vec![PieceIndex {
                i: 0,
                j: 0,
                k: 0,
                n: 0,
            }];
        }
        let mut out = Vec::new();
        for j in 0..i {
            let top = (i - j) / 2;
            for k in 0..=top {
                for n in 0..=top {
                    out.push(PieceIndex { i, j, k, n });
                }
            }
        }
        out.push(PieceIndex {
            i,
            j: i,
            k: 0,
            n: 0,
        });
        out
    }

    /// The diagonal family `n = k` at level `i`.
    pub fn diagonal_level(i: u32) -> Vec<PieceIndex> {
        Self::level(i).into_iter().filter(|p| p.k == p.n).collect()
    }
}

/// A closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn within(&self, other: &Band) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }
}

/// Region outside which a piece vanishes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupportBox {
    pub pair_norm: Band,
    pub xi_norm: Band,
    pub ratio: Band,
    pub sin_theta: Band,
    pub cos_theta1: Band,
}

fn scale_band(i: u32) -> Band {
    if i == 0 {
        Band { lo: 0.0, hi: 2.0 }
    } else {
        Band {
            lo: (i as f64 - 1.0).exp2(),
            hi: (i as f64 + 1.0).exp2(),
        }
    }
}

fn angular_band(k: u32, top: u32) -> Band {
    if top == 0 {
        Band { lo: 0.0, hi: 1.0 }
    } else if k == top {
        Band {
            lo: 0.0,
            hi: (0.5 - k as f64).exp2().min(1.0),
        }
    } else if k == 0 {
        Band { lo: 0.5, hi: 1.0 }
    } else {
        Band {
            lo: (-(k as f64) - 1.0).exp2(),
            hi: (0.5 - k as f64).exp2(),
        }
    }
}

impl SupportBox {
    /// Bands implied by the cutoff construction.
    pub fn of(idx: PieceIndex, cutoffs: &Cutoffs) -> Self {
        let e = cutoffs.epsilon;
        let full = Band { lo: 0.0, hi: 1.0 };
        let ratio = if idx.i == 0 {
            full
        } else if idx.j == idx.i {
            Band {
                lo: 0.0,
                hi: (e - idx.i as f64).exp2().min(1.0),
            }
        } else {
            Band {
                lo: (-e - idx.j as f64 - 1.0).exp2(),
                hi: (e - idx.j as f64).exp2().min(1.0),
            }
        };
        let top = if idx.i == 0 || idx.j == idx.i {
            0
        } else {
            idx.angular_levels()
        };
        Self {
            pair_norm: scale_band(idx.i),
            xi_norm: scale_band(idx.i),
            ratio,
            sin_theta: angular_band(idx.k, top),
            cos_theta1: angular_band(idx.n, top),
        }
    }

    /// Whether `g` lies in the box. Undefined angles and ratios count as
    /// inside only when the corresponding band reaches zero.
    pub fn contains(&self, g: &PointGeometry) -> bool {
        let opt = |b: &Band, v: Option<f64>| v.map_or(b.lo == 0.0, |x| b.contains(x));
        self.pair_norm.contains(g.pair_norm)
            && self.xi_norm.contains(g.xi_norm)
            && opt(&self.ratio, g.ratio())
            && opt(&self.sin_theta, g.sin_theta)
            && opt(&self.cos_theta1, g.cos_theta1)
    }
}

/// `m · (cutoffs of idx)` at `point`; `m` is only evaluated where the
/// cutoff product is nonzero.
pub fn piece_multiplier<F>(
    idx: PieceIndex,
    point: &FrequencyTriple,
    cutoffs: &Cutoffs,
    m_eval: F,
) -> Result<f64>
where
    F: Fn(&FrequencyTriple) -> Result<f64>,
{
    let w = cutoffs.piece_weight(idx, &PointGeometry::new(point)?)?;
    if w == 0.0 {
        return Ok(0.0);
    }
    Ok(w * m_eval(point)?)
}

/// Sum of all pieces at level `i` against `m·φᵢ·ζᵢ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Telescoping {
    pub pieces_sum: f64,
    pub target: f64,
    pub residual: f64,
}

pub fn level_telescoping(
    i: u32,
    point: &FrequencyTriple,
    cutoffs: &Cutoffs,
    m_value: f64,
) -> Result<Telescoping> {
    let g = PointGeometry::new(point)?;
    let mut sum = 0.0;
    for idx in PieceIndex::level(i) {
        sum += cutoffs.piece_weight(idx, &g)? * m_value;
    }
    let target = m_value * cutoffs.phi(i, &g) * cutoffs.zeta(i, &g);
    Ok(Telescoping {
        pieces_sum: sum,
        target,
        residual: (sum - target).abs(),
    })
}

/// Residuals of the five partitions, piece telescoping and support probes
/// over random points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionReport {
    pub d: usize,
    pub points: usize,
    pub levels: u32,
    pub phi_residual: f64,
    pub zeta_residual: f64,
    pub psi_residual: f64,
    pub rho_residual: f64,
    pub rho1_residual: f64,
    /// `|Σ pieces − φᵢζᵢ|` with the multiplier factored out.
    pub telescoping_residual: f64,
    /// Nonzero pieces found outside their support box.
    pub band_violations: usize,
    /// Points with ratio below `2^{−i−ε}` where `ψ^i` differs from 1 by more
    /// than the tolerance.
    pub upper_psi_violations: usize,
    pub tolerance: f64,
    pub pass: bool,
}

pub const PARTITION_TOLERANCE: f64 = 1e-12;

/// A point with `|(η,δ)|` spread over `2^{−2}..2^{10}` and the norm ratio
/// and `|ξ|` spread over several octaves, so every cutoff family is
/// exercised.
pub fn spread_point<R: Rng + ?Sized>(d: usize, rng: &mut R) -> FrequencyTriple {
    let scale = (rng.gen::<f64>() * 12.0 - 2.0).exp2();
    let mut p = FrequencyTriple::random(d, scale, rng);
    let a = (rng.gen::<f64>() * 8.0 - 4.0).exp2();
    let b = (rng.gen::<f64>() * 4.0 - 2.0).exp2();
    p.eta.iter_mut().for_each(|x| *x *= a);
    p.xi.iter_mut().for_each(|x| *x *= b);
    p
}

pub fn partition_check(
    d: usize,
    n: usize,
    cutoffs: &Cutoffs,
    stream: RngStream,
) -> Result<PartitionReport> {
    if d < 4 {
        return Err(invalid("partition_check requires d >= 4"));
    }
    let levels = 16u32;
    let angular = 6u32;
    let mut rng = stream.rng();
    let mut r = PartitionReport {
        d,
        points: n,
        levels,
        phi_residual: 0.0,
        zeta_residual: 0.0,
        psi_residual: 0.0,
        rho_residual: 0.0,
        rho1_residual: 0.0,
        telescoping_residual: 0.0,
        band_violations: 0,
        upper_psi_violations: 0,
        tolerance: PARTITION_TOLERANCE,
        pass: false,
    };
    let boxes: Vec<(PieceIndex, SupportBox)> = (0..levels)
        .flat_map(PieceIndex::level)
        .map(|idx| (idx, SupportBox::of(idx, cutoffs)))
        .collect();
    for _ in 0..n {
        let p = spread_point(d, &mut rng);
        let g = PointGeometry::new(&p)?;
        let sum_over = |f: &dyn Fn(u32) -> f64| (0..2 * levels + 8).map(f).sum::<f64>();
        r.phi_residual = r
            .phi_residual
            .max((sum_over(&|i| cutoffs.phi(i, &g)) - 1.0).abs());
        r.zeta_residual = r
            .zeta_residual
            .max((sum_over(&|i| cutoffs.zeta(i, &g)) - 1.0).abs());
        let mut psi = 0.0;
        for j in 0..2 * levels + 8 {
            psi += cutoffs.psi(j, &g)?;
        }
        r.psi_residual = r.psi_residual.max((psi - 1.0).abs());
        let mut rho = cutoffs.rho_upper(angular, &g)?;
        let mut rho1 = cutoffs.rho1_upper(angular, &g)?;
        for k in 0..angular {
            rho += cutoffs.rho(k, &g)?;
            rho1 += cutoffs.rho1(k, &g)?;
        }
        r.rho_residual = r.rho_residual.max((rho - 1.0).abs());
        r.rho1_residual = r.rho1_residual.max((rho1 - 1.0).abs());
        let ratio = g.ratio().unwrap_or(0.0);
        for i in 0..levels {
            if ratio < (-cutoffs.epsilon - i as f64).exp2()
                && (cutoffs.psi_upper(i, &g)? - 1.0).abs() > PARTITION_TOLERANCE
            {
                r.upper_psi_violations += 1;
            }
            let target = cutoffs.phi(i, &g) * cutoffs.zeta(i, &g);
            if target != 0.0 {
                let mut sum = 0.0;
                for idx in PieceIndex::level(i) {
                    sum += cutoffs.piece_weight(idx, &g)?;
                }
                r.telescoping_residual = r.telescoping_residual.max((sum - target).abs());
            }
        }
        for (idx, b) in &boxes {
            if !b.contains(&g) && cutoffs.piece_weight(*idx, &g)? != 0.0 {
                r.band_violations += 1;
            }
        }
    }
    r.pass = [
        r.phi_residual,
        r.zeta_residual,
        r.psi_residual,
        r.rho_residual,
        r.rho1_residual,
        r.telescoping_residual,
    ]
    .iter()
    .all(|&x| x <= PARTITION_TOLERANCE)
        && r.band_violations == 0
        && r.upper_psi_violations == 0;
    Ok(r)
}

/// Monte Carlo volume with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub stderr: f64,
    pub rel_stderr: f64,
    /// Relative standard error above [`UNDERPOWERED_REL_STDERR`].
    pub underpowered: bool,
}

pub const UNDERPOWERED_REL_STDERR: f64 = 0.2;

impl VolumeEstimate {
    pub fn require_powered(self) -> Result<Self> {
        if self.underpowered {
            Err(Error::Underpowered {
                rel_stderr: self.rel_stderr,
                limit: UNDERPOWERED_REL_STDERR,
            })
        } else {
            Ok(self)
        }
    }
}

fn ball_volume(d: usize, radius: f64) -> f64 {
    let h = 0.5 * d as f64;
    (h * PI.ln() - ln_gamma(h + 1.0) + d as f64 * radius.ln()).exp()
}

fn unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit vector uniform on the sphere of `span(basis)^⊥`.
fn unit_vector_orthogonal<R: Rng + ?Sized>(d: usize, basis: &[&[f64]], rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for b in basis {
                let p: f64 = v.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b.iter()).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Region `{min(|η|,|δ|) ≤ 2^{i−j+2}; |ξ|, max(|η|,|δ|) ≤ 2^{i+1};
/// |sin θ|, |cos θ₁| ≤ 2^{−(k−1)}}` of a piece.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VolumeRegion {
    pub outer: f64,
    pub inner: f64,
    pub angle: f64,
}

impl VolumeRegion {
    pub fn of(idx: PieceIndex) -> Self {
        Self {
            outer: (idx.i as f64 + 1.0).exp2(),
            inner: (idx.i as f64 - idx.j as f64 + 2.0).exp2(),
            angle: (1.0 - idx.k as f64).exp2(),
        }
    }

    pub fn contains(&self, point: &FrequencyTriple) -> Result<bool> {
        let g = PointGeometry::new(point)?;
        let (lo, hi) = if g.delta_norm < g.eta_norm {
            (g.delta_norm, g.eta_norm)
        } else {
            (g.eta_norm, g.delta_norm)
        };
        let ang = |v: Option<f64>| v.is_none_or(|x| x <= self.angle);
        Ok(lo <= self.inner
            && hi <= self.outer
            && g.xi_norm <= self.outer
            && ang(g.sin_theta)
            && ang(g.cos_theta1))
    }
}

/// `∫₀^π sin^{d−2}θ dθ`.
fn sine_power_mass(d: usize) -> f64 {
    let a = 0.5 * (d as f64 - 1.0);
    (0.5 * PI.ln() + ln_gamma(a) - ln_gamma(a + 0.5)).exp()
}

/// Importance-sampled Lebesgue volume of [`VolumeRegion::of`]`(idx)` in
/// `ℝ^{3d}`.
///
/// Each of `ξ, δ, η` is drawn uniformly from the ball of radius `2^{i+1}`.
/// The angle between `δ` and `η` and the off-plane cosine of `ξ` are drawn
/// from an even mixture of their exact laws' supports and the constrained
/// subsets; samples are weighted by the density ratio and the region is
/// tested on the assembled vectors.
pub fn support_volume_mc(
    idx: PieceIndex,
    d: usize,
    n: usize,
    stream: RngStream,
) -> Result<VolumeEstimate> {
    if !(4..=6).contains(&d) {
        return Err(invalid("support_volume_mc supports 4 <= d <= 6"));
    }
    if n < 100 {
        return Err(invalid("support_volume_mc requires n >= 100"));
    }
    let region = VolumeRegion::of(idx);
    let c = region.angle.min(1.0);
    let theta_cut = c.asin();
    let sine_mass = sine_power_mass(d);
    let df = d as f64;
    let acc: MeanVar = run_blocks(n, stream, |rng, count, _| {
        let mut acc = MeanVar::default();
        for _ in 0..count {
            let radius = |rng: &mut _| region.outer * Rng::gen::<f64>(rng).powf(1.0 / df);
            let (rx, rd, re) = (radius(rng), radius(rng), radius(rng));

            // θ ∈ [0, π] with density sin^{d−2}θ / mass
            let theta = if rng.gen::<bool>() || c >= 1.0 {
                rng.gen::<f64>() * PI
            } else {
                let t = rng.gen::<f64>() * theta_cut;
                if rng.gen::<bool>() {
                    t
                } else {
                    PI - t
                }
            };
            let q_theta = 0.5 / PI
                + if c < 1.0 && theta.sin() <= c {
                    0.5 / (2.0 * theta_cut)
                } else {
                    0.0
                };
            let q_theta = if c >= 1.0 { 1.0 / PI } else { q_theta };
            let p_theta = theta.sin().powi(d as i32 - 2) / sine_mass;

            // off-plane cosine b ∈ [0,1] with density (d−2) b^{d−3}
            let b = if rng.gen::<bool>() || c >= 1.0 {
                rng.gen::<f64>()
            } else {
                rng.gen::<f64>() * c
            };
            let q_b = if c >= 1.0 {
                1.0
            } else {
                0.5 + if b <= c { 0.5 / c } else { 0.0 }
            };
            let p_b = (df - 2.0) * b.powi(d as i32 - 3);

            let eta_dir = unit_vector(d, rng);
            let w = unit_vector_orthogonal(d, &[&eta_dir], rng);
            let delta_dir: Vec<f64> = eta_dir
                .iter()
                .zip(&w)
                .map(|(e, w)| theta.cos() * e + theta.sin() * w)
                .collect();
            let off = unit_vector_orthogonal(d, &[&eta_dir, &w], rng);
            let phi = rng.gen::<f64>() * 2.0 * PI;
            let in_plane: Vec<f64> = eta_dir
                .iter()
                .zip(&w)
                .map(|(e, w)| phi.cos() * e + phi.sin() * w)
                .collect();
            let sb = (1.0 - b * b).max(0.0).sqrt();
            let xi: Vec<f64> = off
                .iter()
                .zip(&in_plane)
                .map(|(o, p)| rx * (b * o + sb * p))
                .collect();
            let point = FrequencyTriple {
                xi,
                delta: delta_dir.iter().map(|x| rd * x).collect(),
                eta: eta_dir.iter().map(|x| re * x).collect(),
            };
            let inside = region.contains(&point).unwrap_or(false);
            acc.push(if inside {
                p_theta / q_theta * p_b / q_b
            } else {
                0.0
            });
        }
        acc
    });
    let scale = ball_volume(d, region.outer).powi(3);
    let e = acc.estimate();
    let value = scale * e.value;
    let stderr = scale * e.stderr;
    let rel_stderr = if value > 0.0 {
        stderr / value
    } else {
        f64::INFINITY
    };
    Ok(VolumeEstimate {
        value,
        stderr,
        rel_stderr,
        underpowered: rel_stderr > UNDERPOWERED_REL_STDERR,
    })
}

/// `2^{2di} 2^{d(i−j)} 2^{−2k(d−3)}`, the claimed volume scale of a piece.
pub fn volume_scale(idx: PieceIndex, d: usize) -> f64 {
    let (i, j, k, d) = (idx.i as f64, idx.j as f64, idx.k as f64, d as f64);
    (2.0 * d * i + d * (i - j) - 2.0 * k * (d - 3.0)).exp2()
}

/// A volume estimate next to its claimed scale.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VolumeRow {
    pub index: PieceIndex,
    pub volume: VolumeEstimate,
    pub scale: f64,
    pub normalized: f64,
}

/// Volume ratio between two pieces against its expected value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VolumeRatio {
    pub from: PieceIndex,
    pub to: PieceIndex,
    pub ratio: f64,
    /// Standard error of the ratio by the delta method.
    pub stderr: f64,
    pub expected: f64,
    pub log2_ratio: f64,
    pub log2_expected: f64,
    /// `ratio / expected ∈ [1/2, 2]`.
    pub within_factor_two: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VolumeScalingReport {
    pub d: usize,
    pub samples: usize,
    pub rows: Vec<VolumeRow>,
    pub level_ratio: VolumeRatio,
    pub angular_ratio: VolumeRatio,
    /// `max(volume / scale)` over the rows.
    pub fitted_constant: f64,
    pub underpowered: bool,
    pub pass: bool,
}

fn volume_ratio(a: &VolumeRow, b: &VolumeRow, expected: f64) -> VolumeRatio {
    let ratio = b.volume.value / a.volume.value;
    let stderr = ratio * b.volume.rel_stderr.hypot(a.volume.rel_stderr);
    let q = ratio / expected;
    VolumeRatio {
        from: a.index,
        to: b.index,
        ratio,
        stderr,
        expected,
        log2_ratio: ratio.log2(),
        log2_expected: expected.log2(),
        within_factor_two: (0.5..=2.0).contains(&q),
    }
}

/// Volume ratios across consecutive levels `(3,1,0) → (4,1,0)` (expected
/// `2^{3d}`) and consecutive angular levels `(6,0,2) → (6,0,3)` (expected
/// `2^{−2(d−3)}`). Below `k = 2` the angular constraint is vacuous.
pub fn volume_scaling(d: usize, n: usize, stream: RngStream) -> Result<VolumeScalingReport> {
    let indices = [
        PieceIndex::diagonal(3, 1, 0)?,
        PieceIndex::diagonal(4, 1, 0)?,
        PieceIndex::diagonal(6, 0, 2)?,
        PieceIndex::diagonal(6, 0, 3)?,
    ];
    let mut rows = Vec::with_capacity(indices.len());
    for (s, idx) in indices.iter().enumerate() {
        let volume = support_volume_mc(*idx, d, n, stream.substream(s as u64))?;
        let scale = volume_scale(*idx, d);
        rows.push(VolumeRow {
            index: *idx,
            volume,
            scale,
            normalized: volume.value / scale,
        });
    }
    let df = d as f64;
    let level_ratio = volume_ratio(&rows[0], &rows[1], (3.0 * df).exp2());
    let angular_ratio = volume_ratio(&rows[2], &rows[3], (-2.0 * (df - 3.0)).exp2());
    let underpowered = rows.iter().any(|r| r.volume.underpowered);
    Ok(VolumeScalingReport {
        d,
        samples: n,
        fitted_constant: rows.iter().map(|r| r.normalized).fold(0.0, f64::max),
        pass: !underpowered && level_ratio.within_factor_two && angular_ratio.within_factor_two,
        underpowered,
        rows,
        level_ratio,
        angular_ratio,
    })
}

/// Exponent bookkeeping for the level-`i` operator bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct L2ExponentReport {
    pub d: u32,
    /// Coefficients of `(i, j, k)` in the log₂ of the piece bound
    /// `2^{−(3i/2)(d−3)} 2^{j(d−3)/2} 2^{k(d−3)} (2^{2di}2^{d(i−j)}2^{−2k(d−3)})^{1/3}`.
    pub piece_exponent: [String; 3],
    /// Per-level rate obtained by bounding the `j` and `k` sums by their
    /// largest terms separately: `−d/6 + 5/2`.
    pub per_i_exponent: String,
    pub per_i_value: f64,
    pub summable: bool,
    /// Least `d` with a negative per-level rate.
    pub threshold: u32,
    /// Per-level rate from the largest term of the joint `(j, k)` range.
    pub joint_exponent: String,
    pub joint_threshold: u32,
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// `(i, j, k)` coefficients of the piece bound's exponent.
fn piece_coefficients(d: u32) -> [BigRational; 3] {
    let d = d as i64;
    // −(3/2)(d−3) + (2d + d)/3
    let ci = rat(-3 * (d - 3), 2) + rat(3 * d, 3);
    // (d−3)/2 − d/3
    let cj = rat(d - 3, 2) - rat(d, 3);
    // (d−3) − 2(d−3)/3
    let ck = rat(d - 3, 1) - rat(2 * (d - 3), 3);
    [ci, cj, ck]
}

/// Rate from bounding the `j` sum by its `j = i` term and the `k` sum by
/// its `k = i/2` term, each independently.
pub fn per_i_exponent(d: u32) -> BigRational {
    let [ci, cj, ck] = piece_coefficients(d);
    ci + cj + ck * rat(1, 2)
}

/// Rate from the largest exponent over `0 ≤ j ≤ i`, `0 ≤ k ≤ (i−j)/2`.
pub fn joint_exponent(d: u32) -> BigRational {
    let [ci, cj, ck] = piece_coefficients(d);
    let half = rat(1, 2);
    // linear in (j, k): the maximum sits at a vertex of the triangle
    let vertices = [
        (rat(0, 1), rat(0, 1)),
        (rat(1, 1), rat(0, 1)),
        (rat(0, 1), half.clone()),
    ];
    let best = vertices
        .iter()
        .map(|(j, k)| cj.clone() * j + ck.clone() * k)
        .max()
        .expect("three vertices");
    ci + best
}

fn first_negative(f: impl Fn(u32) -> BigRational) -> u32 {
    (4..)
        .find(|&d| f(d).is_negative())
        .expect("rate decreases in d")
}

fn show(r: &BigRational) -> String {
    if r.denom() == &BigInt::from(1) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

pub fn l2_exponent_report(d: u32) -> Result<L2ExponentReport> {
    if d < 4 {
        return Err(invalid("l2_exponent_report requires d >= 4"));
    }
    let coeffs = piece_coefficients(d);
    let per_i = per_i_exponent(d);
    let joint = joint_exponent(d);
    Ok(L2ExponentReport {
        d,
        piece_exponent: [show(&coeffs[0]), show(&coeffs[1]), show(&coeffs[2])],
        per_i_value: to_f64(&per_i),
        summable: per_i.is_negative(),
        per_i_exponent: show(&per_i),
        threshold: first_negative(per_i_exponent),
        joint_exponent: show(&joint),
        joint_threshold: first_negative(joint_exponent),
    })
}
