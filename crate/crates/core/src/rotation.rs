//! Haar sampling on SO(d), frame-mapping rotations and the reduction of a
//! frequency triple to its rotation-invariant frame data.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, Degeneracy, Error, Result};
use crate::rng::RngStream;
use crate::stats::{run_blocks, ComplexEstimate, ComplexMeanVar};

/// Tolerance below which a sine/cosine in the frame reduction counts as zero.
pub const FRAME_TOL: f64 = 1e-12;

/// A `d×d` special orthogonal matrix, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Rotation {
    dim: usize,
    data: Vec<f64>,
}

impl Rotation {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    /// Builds a rotation from its columns, checking orthonormality and
    /// orientation.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let dim = cols.len();
        if cols.iter().any(|c| c.len() != dim) {
            return Err(invalid("rotation columns must all have length d"));
        }
        let mut data = vec![0.0; dim * dim];
        for (j, c) in cols.iter().enumerate() {
            for (i, &v) in c.iter().enumerate() {
                data[i * dim + j] = v;
            }
        }
        let r = Self { dim, data };
        if r.orthogonality_defect() > 1e-10 {
            return Err(invalid("columns are not orthonormal"));
        }
        if (r.det() - 1.0).abs() > 1e-10 {
            return Err(invalid("columns have negative orientation"));
        }
        Ok(r)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// `R e_j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, j)).collect()
    }

    /// `R v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                self.data[i * d..(i + 1) * d]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `Rᵀ v`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                out[j] += self.data[i * d + j] * v[i];
            }
        }
        out
    }

    /// `self · other`.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                for j in 0..d {
                    data[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        Rotation { dim: d, data }
    }

    pub fn transpose(&self) -> Rotation {
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                data[j * d + i] = self.data[i * d + j];
            }
        }
        Rotation { dim: d, data }
    }

    /// `‖RᵀR − I‖_max`.
    pub fn orthogonality_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                let dot: f64 = (0..d)
                    .map(|i| self.data[i * d + a] * self.data[i * d + b])
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    pub fn det(&self) -> f64 {
        determinant(self.dim, self.data.clone())
    }

    /// Embeds a rotation of the last `d−1` coordinates (fixing `e₁`).
    pub fn embed_stabilizer(inner: &Rotation) -> Rotation {
        let d = inner.dim + 1;
        let mut data = vec![0.0; d * d];
        data[0] = 1.0;
        for i in 0..inner.dim {
            for j in 0..inner.dim {
                data[(i + 1) * d + j + 1] = inner.get(i, j);
            }
        }
        Rotation { dim: d, data }
    }
}

/// LU with partial pivoting on a row-major copy.
fn determinant(d: usize, mut a: Vec<f64>) -> f64 {
    let mut det = 1.0;
    for k in 0..d {
        let p = (k..d)
            .max_by(|&x, &y| a[x * d + k].abs().total_cmp(&a[y * d + k].abs()))
            .unwrap_or(k);
        if a[p * d + k] == 0.0 {
            return 0.0;
        }
        if p != k {
            for j in 0..d {
                a.swap(k * d + j, p * d + j);
            }
            det = -det;
        }
        let pivot = a[k * d + k];
        det *= pivot;
        for i in (k + 1)..d {
            let f = a[i * d + k] / pivot;
            for j in k..d {
                a[i * d + j] -= f * a[k * d + j];
            }
        }
    }
    det
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Draws a Haar-distributed rotation from `rng`.
///
/// Orthonormalizes the columns of a standard Gaussian matrix (Gram–Schmidt
/// with reorthogonalization, which is QR with a positive triangular
/// diagonal), then negates the last column if the determinant is −1.
pub fn sample_haar_with<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Rotation {
    let cols = sample_frame_with(d, d, rng);
    let mut data = vec![0.0; d * d];
    for (j, c) in cols.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            data[i * d + j] = v;
        }
    }
    let mut r = Rotation { dim: d, data };
    if r.det() < 0.0 {
        for i in 0..d {
            r.data[i * d + d - 1] = -r.data[i * d + d - 1];
        }
    }
    r
}

/// The first `k ≤ d` columns of a Haar rotation (uniform on the Stiefel
/// manifold), without forming the full matrix.
pub fn sample_frame_with<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    debug_assert!(k <= d);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for c in &cols {
                let p = dot(&v, c);
                axpy(&mut v, -p, c);
            }
        }
        let n = norm(&v);
        if n < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= n);
        cols.push(v);
    }
    cols
}

/// One Haar sample drawn from the start of `stream`.
pub fn sample_haar(d: usize, stream: RngStream) -> Result<Rotation> {
    if d < 2 {
        return Err(invalid("sample_haar requires d >= 2"));
    }
    Ok(sample_haar_with(d, &mut stream.rng()))
}

/// `n` consecutive Haar samples from `stream`.
pub fn sample_haar_batch(d: usize, n: usize, stream: RngStream) -> Result<Vec<Rotation>> {
    if d < 2 {
        return Err(invalid("sample_haar requires d >= 2"));
    }
    Ok(run_blocks(n, stream, |rng, count, _| {
        (0..count)
            .map(|_| sample_haar_with(d, rng))
            .collect::<Vec<_>>()
    }))
}

fn check_orthonormal(vs: &[Vec<f64>], d: usize, what: &str) -> Result<()> {
    for (i, a) in vs.iter().enumerate() {
        if a.len() != d {
            return Err(invalid(format!(
                "{what} vector {i} has length {} (d = {d})",
                a.len()
            )));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("{what} vector {i}")));
        }
        for (j, b) in vs.iter().enumerate().take(i + 1) {
            let target = if i == j { 1.0 } else { 0.0 };
            if (dot(a, b) - target).abs() > 1e-10 {
                return Err(invalid(format!("{what} vectors are not orthonormal")));
            }
        }
    }
    Ok(())
}

/// Extends an orthonormal list to a basis of ℝᵈ, each time adding the
/// canonical vector with the largest residual after projection.
fn complete_basis(mut basis: Vec<Vec<f64>>, d: usize) -> Vec<Vec<f64>> {
    while basis.len() < d {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for k in 0..d {
            let mut v = vec![0.0; d];
            v[k] = 1.0;
            for _ in 0..2 {
                for b in &basis {
                    let p = dot(&v, b);
                    axpy(&mut v, -p, b);
                }
            }
            let n = norm(&v);
            if best.as_ref().is_none_or(|(bn, _)| n > *bn + 1e-12) {
                best = Some((n, v));
            }
        }
        let (n, mut v) = best.expect("d >= 1");
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }
    basis
}

/// A rotation `Q ∈ SO(d)` with `Q·source[i] = target[i]`.
///
/// Both lists are completed to orthonormal bases deterministically; when the
/// lists are shorter than `d` the orientation is fixed by negating the last
/// completion vector of the target basis.
pub fn frame_rotation(source: &[Vec<f64>], target: &[Vec<f64>], d: usize) -> Result<Rotation> {
    if source.len() != target.len() {
        return Err(invalid("source and target must have the same length"));
    }
    if source.len() > d {
        return Err(invalid("more frame vectors than dimensions"));
    }
    check_orthonormal(source, d, "source")?;
    check_orthonormal(target, d, "target")?;
    let m = source.len();
    let s = complete_basis(source.to_vec(), d);
    let mut t = complete_basis(target.to_vec(), d);
    // Q = T Sᵀ
    let build = |t: &[Vec<f64>]| {
        let mut data = vec![0.0; d * d];
        for k in 0..d {
            for i in 0..d {
                let tik = t[k][i];
                if tik == 0.0 {
                    continue;
                }
                for j in 0..d {
                    data[i * d + j] += tik * s[k][j];
                }
            }
        }
        Rotation { dim: d, data }
    };
    let mut q = build(&t);
    if q.det() < 0.0 {
        if m == d {
            return Err(invalid("full frames have incompatible orientation"));
        }
        t[d - 1].iter_mut().for_each(|x| *x = -*x);
        q = build(&t);
    }
    Ok(q)
}

/// Rotation-invariant data of a frequency triple `(ξ, δ, η)`.
///
/// In the orthonormal frame `ê₂ = η/|η|`, `ê₃ ∝ δ − (δ·ê₂)ê₂`,
/// `ê₁ ∝ ξ − (ξ·ê₂)ê₂ − (ξ·ê₃)ê₃`:
/// `η = |η|ê₂`, `δ = |δ|(a₂ê₂ + a₃ê₃)`, `ξ = |ξ|(b₁ê₁ + b₂ê₂ + b₃ê₃)`.
/// Sign conventions: `a₃ ≥ 0` and `b₁ ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReducedFrame {
    pub xi_norm: f64,
    pub delta_norm: f64,
    pub eta_norm: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

/// Frame reduction together with the frame itself and the first
/// degeneracy encountered, if any.
#[derive(Clone, Debug)]
pub struct FrameReduction {
    pub frame: ReducedFrame,
    /// `[ê₁, ê₂, ê₃]`.
    pub basis: [Vec<f64>; 3],
    pub degeneracy: Option<Degeneracy>,
}

impl FrameReduction {
    /// Degeneracies under which the reduced multiplier formulas are not
    /// used: `δ ∥ η` and `ξ ∈ span(δ,η)` with all three vectors nonzero.
    /// Zero vectors are admissible since their frame slots carry no weight.
    pub fn admissible(self) -> Result<ReducedFrame> {
        match self.degeneracy {
            Some(g @ (Degeneracy::Parallel | Degeneracy::XiInPlane)) => {
                Err(Error::DegenerateFrame(g))
            }
            _ => Ok(self.frame),
        }
    }
}

/// Frame reduction that completes the frame canonically when a vector is
/// zero or the triple is degenerate, recording the first degeneracy.
pub fn reduce_frequencies_lenient(
    xi: &[f64],
    delta: &[f64],
    eta: &[f64],
) -> Result<FrameReduction> {
    let d = xi.len();
    if delta.len() != d || eta.len() != d {
        return Err(invalid("xi, delta, eta must have equal length"));
    }
    if d < 4 {
        return Err(invalid("frame reduction requires d >= 4"));
    }
    if xi.iter().chain(delta).chain(eta).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("frequency triple".into()));
    }
    let (nx, nd, ne) = (norm(xi), norm(delta), norm(eta));
    let mut degeneracy = None;
    let mut flag = |g: Degeneracy| {
        if degeneracy.is_none() {
            degeneracy = Some(g);
        }
    };
    if nx == 0.0 {
        flag(Degeneracy::ZeroXi);
    }
    if nd == 0.0 {
        flag(Degeneracy::ZeroDelta);
    }
    if ne == 0.0 {
        flag(Degeneracy::ZeroEta);
    }

    // Gram–Schmidt in the order η, δ, ξ; canonical completion where a
    // direction is missing.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(3);
    let push_residual = |basis: &mut Vec<Vec<f64>>, v: &[f64], scale: f64| -> bool {
        if scale == 0.0 {
            return false;
        }
        let mut r = v.to_vec();
        for _ in 0..2 {
            for b in basis.iter() {
                let p = dot(&r, b);
                axpy(&mut r, -p, b);
            }
        }
        let n = norm(&r);
        if n <= FRAME_TOL * scale {
            return false;
        }
        r.iter_mut().for_each(|x| *x /= n);
        basis.push(r);
        true
    };
    // ê₂
    let e2_from_eta = push_residual(&mut basis, eta, ne);
    if !e2_from_eta && !push_residual(&mut basis, delta, nd) && !push_residual(&mut basis, xi, nx) {
        basis = complete_basis(basis, d);
        basis.truncate(1);
    }
    // ê₃
    let e3_from_delta = push_residual(&mut basis, delta, nd);
    if e2_from_eta && nd > 0.0 && !e3_from_delta {
        flag(Degeneracy::Parallel);
    }
    if basis.len() < 2 && !push_residual(&mut basis, xi, nx) {
        basis = complete_basis(basis, d);
        basis.truncate(2);
    }
    // ê₁
    let e1_from_xi = push_residual(&mut basis, xi, nx);
    if nx > 0.0 && !e1_from_xi && e2_from_eta && e3_from_delta {
        flag(Degeneracy::XiInPlane);
    }
    if basis.len() < 3 {
        basis = complete_basis(basis, d);
        basis.truncate(3);
    }
    let e2 = basis[0].clone();
    let e3 = basis[1].clone();
    let e1 = basis[2].clone();

    let cos = |v: &[f64], n: f64, e: &[f64]| if n > 0.0 { dot(v, e) / n } else { 0.0 };
    let mut frame = ReducedFrame {
        xi_norm: nx,
        delta_norm: nd,
        eta_norm: ne,
        a2: cos(delta, nd, &e2),
        a3: cos(delta, nd, &e3),
        b1: cos(xi, nx, &e1),
        b2: cos(xi, nx, &e2),
        b3: cos(xi, nx, &e3),
    };
    if nd == 0.0 {
        // direction of a zero vector is immaterial; keep a₂²+a₃²=1
        frame.a2 = 1.0;
    }
    Ok(FrameReduction {
        frame,
        basis: [e1, e2, e3],
        degeneracy,
    })
}

/// Reduces `(ξ, δ, η)` to its [`ReducedFrame`], failing on any degeneracy.
pub fn reduce_frequencies(xi: &[f64], delta: &[f64], eta: &[f64]) -> Result<ReducedFrame> {
    let r = reduce_frequencies_lenient(xi, delta, eta)?;
    match r.degeneracy {
        Some(g) => Err(Error::DegenerateFrame(g)),
        None => Ok(r.frame),
    }
}

/// Both sides of the quotient integral formula for the stabilizer of `e₁`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuotientCheck {
    /// `∫ f(R) dR`.
    pub direct: ComplexEstimate,
    /// `∫∫ f(R R′) dR′ dR` with `R′` Haar on the embedded SO(d−1).
    pub quotient: ComplexEstimate,
}

/// Monte Carlo estimates of both sides of the quotient integral formula.
pub fn quotient_check<F>(d: usize, f: F, n: usize, stream: RngStream) -> Result<QuotientCheck>
where
    F: Fn(&Rotation) -> Complex64 + Sync,
{
    if d < 3 {
        return Err(invalid("quotient_check requires d >= 3"));
    }
    if n < 1000 {
        return Err(invalid("quotient_check requires n >= 1000"));
    }
    let direct = run_blocks(n, stream.substream(0), |rng, count, _| {
        let mut acc = ComplexMeanVar::default();
        for _ in 0..count {
            acc.push(f(&sample_haar_with(d, rng)));
        }
        acc
    });
    let quotient = run_blocks(n, stream.substream(1), |rng, count, _| {
        let mut acc = ComplexMeanVar::default();
        for _ in 0..count {
            let r = sample_haar_with(d, rng);
            let inner = Rotation::embed_stabilizer(&sample_haar_with(d - 1, rng));
            acc.push(f(&r.compose(&inner)));
        }
        acc
    });
    Ok(QuotientCheck {
        direct: direct.estimate(),
        quotient: quotient.estimate(),
    })
}
