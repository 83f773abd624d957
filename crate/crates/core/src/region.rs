//! Exact-rational geometry of Lebesgue exponent regions `(1/p, 1/q, 1/s)`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Serialize, Serializer};

use crate::error::{invalid, Result};

pub type Rational = BigRational;

fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

fn show(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn serialize_rational<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&show(r))
}

fn serialize_rationals<S: Serializer>(
    r: &[Rational],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(r.iter().map(show))
}

/// `(1/p, 1/q, 1/s)` with each coordinate in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExponentPoint {
    coords: [Rational; 3],
}

impl ExponentPoint {
    pub fn new(inv_p: Rational, inv_q: Rational, inv_s: Rational) -> Result<Self> {
        let coords = [inv_p, inv_q, inv_s];
        if coords
            .iter()
            .any(|c| c.is_negative() || *c > Rational::one())
        {
            return Err(invalid("exponent coordinates must lie in [0, 1]"));
        }
        Ok(Self { coords })
    }

    pub fn from_ints(p: [(i64, i64); 3]) -> Result<Self> {
        for &(_, den) in &p {
            if den == 0 {
                return Err(invalid("zero denominator"));
            }
        }
        Self::new(
            rat(p[0].0, p[0].1),
            rat(p[1].0, p[1].1),
            rat(p[2].0, p[2].1),
        )
    }

    pub fn coords(&self) -> &[Rational; 3] {
        &self.coords
    }

    pub fn inv_p(&self) -> &Rational {
        &self.coords[0]
    }

    pub fn inv_q(&self) -> &Rational {
        &self.coords[1]
    }

    pub fn inv_s(&self) -> &Rational {
        &self.coords[2]
    }
}

impl fmt::Display for ExponentPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {})",
            show(&self.coords[0]),
            show(&self.coords[1]),
            show(&self.coords[2])
        )
    }
}

impl FromStr for ExponentPoint {
    type Err = crate::error::Error;

    /// Three comma-separated rationals such as `1/2,1/2,1/2`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(invalid(format!(
                "expected three coordinates, got {}",
                parts.len()
            )));
        }
        let mut c = Vec::with_capacity(3);
        for p in parts {
            c.push(
                Rational::from_str(p)
                    .map_err(|_| invalid(format!("cannot parse rational {p:?}")))?,
            );
        }
        let [a, b, d]: [Rational; 3] = c.try_into().expect("three parts");
        Self::new(a, b, d)
    }
}

impl Serialize for ExponentPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        serialize_rationals(&self.coords, s)
    }
}

/// `1/r = 1/p + 1/q + 1/s`.
pub fn r_exponent(point: &ExponentPoint) -> Rational {
    point.coords.iter().sum()
}

/// `p₀ = 5d/(3d−2)`.
pub fn p0(d: u32) -> Result<Rational> {
    if d == 0 {
        return Err(invalid("p0 requires d >= 1"));
    }
    Ok(rat(5 * d as i64, 3 * d as i64 - 2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum HullLabel {
    /// The simplex of unit vectors.
    #[serde(rename = "banach")]
    Banach,
    /// Unit vectors, the centre `(½,½,½)` and the three `1/p₀` pair points.
    #[serde(rename = "thm1_S")]
    Thm1S,
    /// Unit vectors, the origin and the three `1/p₀` pair points.
    #[serde(rename = "sec10_S")]
    Sec10S,
    /// `Sec10S` together with `(½,½,½)`.
    #[serde(rename = "sec10_Sprime")]
    Sec10Sprime,
}

impl HullLabel {
    pub const ALL: [HullLabel; 4] = [
        HullLabel::Banach,
        HullLabel::Thm1S,
        HullLabel::Sec10S,
        HullLabel::Sec10Sprime,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            HullLabel::Banach => "banach",
            HullLabel::Thm1S => "thm1_S",
            HullLabel::Sec10S => "sec10_S",
            HullLabel::Sec10Sprime => "sec10_Sprime",
        }
    }
}

impl FromStr for HullLabel {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        HullLabel::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown hull label {s:?}")))
    }
}

impl fmt::Display for HullLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HullSpec {
    pub label: HullLabel,
    pub d: u32,
    pub vertices: Vec<ExponentPoint>,
}

pub fn hull(label: HullLabel, d: u32) -> Result<HullSpec> {
    if d < 4 {
        return Err(invalid("hull requires d >= 4"));
    }
    let a = p0(d)?.recip();
    let z = Rational::zero;
    let o = Rational::one;
    let h = || rat(1, 2);
    let pt = |x: Rational, y: Rational, w: Rational| {
        ExponentPoint::new(x, y, w).expect("coordinates in [0,1]")
    };
    let units = vec![pt(o(), z(), z()), pt(z(), o(), z()), pt(z(), z(), o())];
    let pairs = vec![
        pt(a.clone(), a.clone(), z()),
        pt(a.clone(), z(), a.clone()),
        pt(z(), a.clone(), a.clone()),
    ];
    let vertices = match label {
        HullLabel::Banach => units,
        HullLabel::Thm1S => {
            let mut v = units;
            v.push(pt(h(), h(), h()));
            v.extend(pairs);
            v
        }
        HullLabel::Sec10S => {
            let mut v = units;
            v.push(pt(z(), z(), z()));
            v.extend(pairs);
            v
        }
        HullLabel::Sec10Sprime => {
            let mut v = units;
            v.push(pt(z(), z(), z()));
            v.extend(pairs);
            v.push(pt(h(), h(), h()));
            v
        }
    };
    Ok(HullSpec { label, d, vertices })
}

/// Outcome of an exact membership query in a closed convex hull.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Membership {
    /// `Σ tᵥ v = point`, `Σ tᵥ = 1`, `tᵥ ≥ 0`.
    Inside {
        #[serde(serialize_with = "serialize_rationals")]
        coefficients: Vec<Rational>,
    },
    /// `normal · v ≤ offset` for every vertex and `normal · point > offset`.
    Excluded {
        #[serde(serialize_with = "serialize_rationals")]
        normal: Vec<Rational>,
        #[serde(serialize_with = "serialize_rational")]
        offset: Rational,
    },
}

impl Membership {
    pub fn is_inside(&self) -> bool {
        matches!(self, Membership::Inside { .. })
    }
}

fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Phase-one simplex for `A t = b, t ≥ 0` with `b ≥ 0`, Bland's rule.
/// Returns a feasible `t` or a `y` with `yᵀA ≤ 0` and `yᵀb > 0`.
fn feasibility(
    a: &[Vec<Rational>],
    b: &[Rational],
) -> std::result::Result<Vec<Rational>, Vec<Rational>> {
    let m = a.len();
    let n = a[0].len();
    let width = n + m + 1;
    // tableau rows [A | I | b]; basis starts on the artificials
    let mut t: Vec<Vec<Rational>> = (0..m)
        .map(|r| {
            let mut row = a[r].clone();
            row.extend((0..m).map(|k| {
                if k == r {
                    Rational::one()
                } else {
                    Rational::zero()
                }
            }));
            row.push(b[r].clone());
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();
    let cost = |j: usize| {
        if j >= n {
            Rational::one()
        } else {
            Rational::zero()
        }
    };
    loop {
        // reduced cost of column j: c_j − Σ_r c_B(r) T[r][j]
        let entering = (0..n + m).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let z: Rational = (0..m).map(|r| cost(basis[r]) * &t[r][j]).sum();
            (cost(j) - z).is_negative()
        });
        let Some(j) = entering else { break };
        let mut leave: Option<(usize, Rational)> = None;
        for r in 0..m {
            if t[r][j].is_positive() {
                let ratio = &t[r][width - 1] / &t[r][j];
                let better = match &leave {
                    None => true,
                    Some((lr, best)) => ratio < *best || (ratio == *best && basis[r] < basis[*lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        // phase one is bounded below by zero, so some row always qualifies
        let (r, _) = leave.expect("phase one objective is bounded");
        let piv = t[r][j].clone();
        t[r].iter_mut().for_each(|x| *x /= &piv);
        let pivot_row = t[r].clone();
        for (k, row) in t.iter_mut().enumerate() {
            if k != r && !row[j].is_zero() {
                let f = row[j].clone();
                row.iter_mut()
                    .zip(&pivot_row)
                    .for_each(|(x, p)| *x -= &f * p);
            }
        }
        basis[r] = j;
    }
    let objective: Rational = (0..m).map(|r| cost(basis[r]) * &t[r][width - 1]).sum();
    if objective.is_zero() {
        let mut x = vec![Rational::zero(); n];
        for r in 0..m {
            if basis[r] < n {
                x[basis[r]] = t[r][width - 1].clone();
            }
        }
        Ok(x)
    } else {
        // y = c_Bᵀ B⁻¹; B⁻¹ sits in the artificial columns
        Err((0..m)
            .map(|i| (0..m).map(|r| cost(basis[r]) * &t[r][n + i]).sum())
            .collect())
    }
}

/// Exact membership of `point` in the closed convex hull of `hull`.
pub fn contains(hull: &HullSpec, point: &ExponentPoint) -> Membership {
    let nv = hull.vertices.len();
    let mut a: Vec<Vec<Rational>> = (0..3)
        .map(|c| hull.vertices.iter().map(|v| v.coords[c].clone()).collect())
        .collect();
    a.push(vec![Rational::one(); nv]);
    let mut b: Vec<Rational> = point.coords.to_vec();
    b.push(Rational::one());
    match feasibility(&a, &b) {
        Ok(coefficients) => Membership::Inside { coefficients },
        Err(y) => Membership::Excluded {
            normal: y[..3].to_vec(),
            offset: -y[3].clone(),
        },
    }
}

/// Whether `m` is a valid certificate for `point` against `hull`.
pub fn verify_certificate(hull: &HullSpec, point: &ExponentPoint, m: &Membership) -> bool {
    match m {
        Membership::Inside { coefficients } => {
            if coefficients.len() != hull.vertices.len()
                || coefficients.iter().any(|c| c.is_negative())
            {
                return false;
            }
            let total: Rational = coefficients.iter().sum();
            let combo: Vec<Rational> = (0..3)
                .map(|c| {
                    hull.vertices
                        .iter()
                        .zip(coefficients)
                        .map(|(v, t)| &v.coords[c] * t)
                        .sum()
                })
                .collect();
            total.is_one() && combo == point.coords.to_vec()
        }
        Membership::Excluded { normal, offset } => {
            hull.vertices
                .iter()
                .all(|v| dot(normal, &v.coords) <= *offset)
                && dot(normal, &point.coords) > *offset
        }
    }
}

/// Whether every vertex of `inner` lies in `outer`.
pub fn hull_within(inner: &HullSpec, outer: &HullSpec) -> bool {
    inner
        .vertices
        .iter()
        .all(|v| contains(outer, v).is_inside())
}

/// The reduced two-variable system for the centre point against
/// `Sec10S`: `t + (2/p₀)s = 3/2`, `t + s = 1`, with `s` the total weight
/// on the pair points and `t` on the unit vectors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExclusionReport {
    pub d: u32,
    #[serde(serialize_with = "serialize_rational")]
    pub p0: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub t: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub s: Rational,
    /// Closed form `5d/(2d−8)`.
    #[serde(serialize_with = "serialize_rational")]
    pub witness: Rational,
    pub witness_matches_solution: bool,
    /// `s > 1`, so no weights in `[0, 1]` solve the system.
    pub witness_excludes: bool,
    pub lp: Membership,
    pub lp_certificate_valid: bool,
    pub agree: bool,
}

pub fn exclusion_check(d: u32) -> Result<ExclusionReport> {
    if d < 5 {
        return Err(invalid("exclusion_check requires d >= 5"));
    }
    let p0v = p0(d)?;
    let two_over = rat(2, 1) / &p0v;
    // subtract: (2/p₀ − 1) s = 1/2
    let s = rat(1, 2) / (&two_over - Rational::one());
    let t = Rational::one() - &s;
    let witness = rat(5 * d as i64, 2 * d as i64 - 8);
    let h = hull(HullLabel::Sec10S, d)?;
    let centre = ExponentPoint::from_ints([(1, 2), (1, 2), (1, 2)])?;
    let lp = contains(&h, &centre);
    let lp_certificate_valid = verify_certificate(&h, &centre, &lp);
    let witness_excludes = s > Rational::one();
    Ok(ExclusionReport {
        d,
        witness_matches_solution: witness == s,
        agree: witness_excludes == !lp.is_inside(),
        p0: p0v,
        t,
        s,
        witness,
        witness_excludes,
        lp,
        lp_certificate_valid,
    })
}

/// JSON-facing record of a hull query.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionQuery {
    pub hull: HullSpec,
    pub point: ExponentPoint,
    #[serde(serialize_with = "serialize_rational")]
    pub r_inverse: Rational,
    pub membership: Membership,
    pub certificate_valid: bool,
}

pub fn query(label: HullLabel, d: u32, point: ExponentPoint) -> Result<RegionQuery> {
    let h = hull(label, d)?;
    let membership = contains(&h, &point);
    Ok(RegionQuery {
        certificate_valid: verify_certificate(&h, &point, &membership),
        r_inverse: r_exponent(&point),
        hull: h,
        point,
        membership,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn centre() -> ExponentPoint {
        ExponentPoint::from_ints([(1, 2), (1, 2), (1, 2)]).unwrap()
    }

    #[test]
    fn p0_values() {
        assert_eq!(p0(16).unwrap(), rat(40, 23));
        assert!(p0(0).is_err());
        let mut last = p0(1).unwrap();
        for d in 2..200 {
            let v = p0(d).unwrap();
            assert!(v < last && v > rat(5, 3));
            assert!(v.recip() < rat(3, 5));
            last = v;
        }
    }

    #[test]
    fn hull_vertex_lists() {
        assert_eq!(hull(HullLabel::Banach, 16).unwrap().vertices.len(), 3);
        let t = hull(HullLabel::Thm1S, 16).unwrap();
        assert_eq!(t.vertices.len(), 7);
        assert!(!t
            .vertices
            .iter()
            .any(|v| v.coords.iter().all(Zero::is_zero)));
        let s = hull(HullLabel::Sec10S, 16).unwrap();
        assert_eq!(s.vertices.len(), 7);
        assert!(!s.vertices.contains(&centre()));
        let sp = hull(HullLabel::Sec10Sprime, 16).unwrap();
        assert_eq!(sp.vertices.len(), 8);
        assert!(sp.vertices.contains(&centre()));
        assert!(sp
            .vertices
            .contains(&ExponentPoint::from_ints([(23, 40), (23, 40), (0, 1)]).unwrap()));
        assert!(hull(HullLabel::Banach, 3).is_err());
        assert!("nope".parse::<HullLabel>().is_err());
        assert_eq!(
            "sec10_sprime".parse::<HullLabel>().unwrap(),
            HullLabel::Sec10Sprime
        );
    }

    #[test]
    fn vertices_are_members_with_certificates() {
        for label in HullLabel::ALL {
            let h = hull(label, 9).unwrap();
            for v in &h.vertices {
                let m = contains(&h, v);
                assert!(m.is_inside() && verify_certificate(&h, v, &m));
            }
        }
    }

    #[test]
    fn centre_excluded_from_sec10_s() {
        for d in 5..=100 {
            let r = exclusion_check(d).unwrap();
            assert!(
                r.witness_matches_solution
                    && r.witness_excludes
                    && r.agree
                    && r.lp_certificate_valid,
                "d={d}"
            );
            assert!(r.t.is_negative());
        }
        assert_eq!(exclusion_check(16).unwrap().witness, rat(10, 3));
        assert!(exclusion_check(4).is_err());
    }

    #[test]
    fn centre_in_sec10_sprime_and_thm1() {
        for label in [HullLabel::Sec10Sprime, HullLabel::Thm1S] {
            let q = query(label, 16, centre()).unwrap();
            assert!(q.membership.is_inside() && q.certificate_valid);
        }
    }

    #[test]
    fn hull_nesting_and_monotonicity() {
        for d in 4..40 {
            let b = hull(HullLabel::Banach, d).unwrap();
            let s = hull(HullLabel::Sec10S, d).unwrap();
            let sp = hull(HullLabel::Sec10Sprime, d).unwrap();
            assert!(hull_within(&b, &s) && hull_within(&s, &sp) && hull_within(&b, &sp));
            let next = hull(HullLabel::Sec10Sprime, d + 1).unwrap();
            assert!(hull_within(&sp, &next));
            assert!(!hull_within(&next, &sp));
        }
    }

    #[test]
    fn interior_and_exterior_points() {
        let h = hull(HullLabel::Banach, 5).unwrap();
        let inside = ExponentPoint::from_ints([(1, 3), (1, 3), (1, 3)]).unwrap();
        let m = contains(&h, &inside);
        assert_eq!(
            m,
            Membership::Inside {
                coefficients: vec![rat(1, 3); 3]
            }
        );
        let below = ExponentPoint::from_ints([(1, 4), (1, 4), (0, 1)]).unwrap();
        let m = contains(&h, &below);
        assert!(!m.is_inside() && verify_certificate(&h, &below, &m));
    }

    #[test]
    fn r_exponent_and_parsing() {
        assert_eq!(r_exponent(&centre()), rat(3, 2));
        assert_eq!(r_exponent(&"1,0,0".parse().unwrap()), Rational::one());
        assert_eq!(r_exponent(&"0,0,0".parse().unwrap()), Rational::zero());
        assert_eq!("1/2, 1/2,1/2".parse::<ExponentPoint>().unwrap(), centre());
        assert!("1/2,1/2".parse::<ExponentPoint>().is_err());
        assert!("3/2,0,0".parse::<ExponentPoint>().is_err());
        assert!("x,0,0".parse::<ExponentPoint>().is_err());
        assert_eq!(centre().to_string(), "(1/2, 1/2, 1/2)");
    }

    #[test]
    fn json_report_shape() {
        let q = query(HullLabel::Sec10S, 16, centre()).unwrap();
        let v = serde_json::to_value(&q).unwrap();
        assert_eq!(v["membership"]["verdict"], "excluded");
        assert_eq!(v["hull"]["label"], "sec10_S");
        assert_eq!(v["r_inverse"], "3/2");
        assert_eq!(v["point"][0], "1/2");
    }
}
