//! Property tests for invariants that hold for every admissible input.

use approx::assert_abs_diff_eq;
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

use pyramid_core::decomposition::{smooth_step, Cutoffs, PieceIndex, PointGeometry, SupportBox};
use pyramid_core::multiplier::{decay_bound, multiplier_reduced, FrequencyTriple};
use pyramid_core::operator::TestFunction;
use pyramid_core::quadrature::QuadratureSpec;
use pyramid_core::region::{contains, hull, verify_certificate, ExponentPoint, HullLabel};
use pyramid_core::rotation::{reduce_frequencies, sample_haar};
use pyramid_core::special::{normalized_sphere_ft, scaled_bessel, BesselOrder, SphereDim};
use pyramid_core::RngStream;

fn triple(d: usize) -> impl Strategy<Value = FrequencyTriple> {
    prop::collection::vec(-3.0f64..3.0, 3 * d).prop_map(|v| FrequencyTriple::from_flat(&v).unwrap())
}

fn label() -> impl Strategy<Value = HullLabel> {
    prop::sample::select(HullLabel::ALL.to_vec())
}

fn exponent_point() -> impl Strategy<Value = ExponentPoint> {
    prop::array::uniform3((0i64..=24, 1i64..=24))
        .prop_map(|c| ExponentPoint::from_ints(c.map(|(n, d)| (n.min(d), d))).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smooth_step_is_monotone_in_unit_range(a in -0.5f64..1.5, b in -0.5f64..1.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (x, y) = (smooth_step(lo), smooth_step(hi));
        prop_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
        prop_assert!(x <= y);
    }

    #[test]
    fn scale_partitions_sum_to_one(p in triple(5)) {
        let c = Cutoffs::default();
        let g = PointGeometry::new(&p).unwrap();
        let phi: f64 = (0..40).map(|i| c.phi(i, &g)).sum();
        let zeta: f64 = (0..40).map(|i| c.zeta(i, &g)).sum();
        prop_assert!((phi - 1.0).abs() <= 1e-12);
        prop_assert!((zeta - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn pieces_vanish_outside_support(p in triple(5), scale in 0.0f64..8.0) {
        let c = Cutoffs::default();
        let p = p.scaled(scale.exp2());
        let g = PointGeometry::new(&p).unwrap();
        for i in 0..10 {
            for idx in PieceIndex::level(i) {
                if !SupportBox::of(idx, &c).contains(&g) {
                    prop_assert_eq!(c.piece_weight(idx, &g).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn haar_samples_are_proper_rotations(d in 2usize..8, seed in any::<u64>()) {
        let q = sample_haar(d, RngStream::new(seed, 0)).unwrap();
        prop_assert!(q.orthogonality_defect() < 1e-12);
        prop_assert!((q.det() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reduced_frame_is_rotation_invariant(p in triple(5), seed in any::<u64>()) {
        let q = sample_haar(5, RngStream::new(seed, 1)).unwrap();
        let a = reduce_frequencies(&p.xi, &p.delta, &p.eta).unwrap();
        let r = p.rotated(&q);
        let b = reduce_frequencies(&r.xi, &r.delta, &r.eta).unwrap();
        for (x, y) in [(a.xi_norm, b.xi_norm), (a.delta_norm, b.delta_norm), (a.eta_norm, b.eta_norm),
                       (a.a2, b.a2), (a.a3, b.a3), (a.b1, b.b1), (a.b2, b.b2), (a.b3, b.b3)] {
            prop_assert!((x - y).abs() < 1e-9, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn decay_bound_is_a_decreasing_envelope(p in triple(5), lambda in 1.0f64..50.0) {
        let b1 = decay_bound(&p).unwrap();
        let b2 = decay_bound(&p.scaled(lambda)).unwrap();
        prop_assert!(b1 > 0.0 && b1 <= 1.0);
        prop_assert!(b2 <= b1 * (1.0 + 1e-12));
    }

    #[test]
    fn sphere_transform_is_bounded_and_even(n in 1u32..10, a in -20.0f64..20.0) {
        let n = SphereDim::new(n).unwrap();
        let v = normalized_sphere_ft(n, a).unwrap();
        prop_assert!(v.abs() <= 1.0 + 1e-12);
        prop_assert_eq!(v, normalized_sphere_ft(n, -a).unwrap());
    }

    #[test]
    fn scaled_bessel_is_continuous_at_zero(s2 in 0u32..10) {
        let order = BesselOrder::new(s2 as f64 / 2.0).unwrap();
        let at0 = scaled_bessel(order, 0.0).unwrap();
        let near = scaled_bessel(order, 1e-6).unwrap();
        assert_abs_diff_eq!(at0, near, epsilon = 1e-10);
    }

    #[test]
    fn hull_vertices_are_members(l in label(), d in 4u32..60) {
        let h = hull(l, d).unwrap();
        for v in &h.vertices {
            let m = contains(&h, v);
            prop_assert!(m.is_inside());
            prop_assert!(verify_certificate(&h, v, &m));
        }
    }

    #[test]
    fn membership_verdicts_carry_valid_certificates(l in label(), d in 4u32..40, p in exponent_point()) {
        let h = hull(l, d).unwrap();
        let m = contains(&h, &p);
        prop_assert!(verify_certificate(&h, &p, &m));
    }

    #[test]
    fn convex_combinations_stay_inside(l in label(), d in 4u32..40, w in prop::collection::vec(1i64..20, 7)) {
        let h = hull(l, d).unwrap();
        let weights: Vec<BigRational> = w.iter().take(h.vertices.len()).map(|&x| BigRational::from_integer(BigInt::from(x))).collect();
        let total: BigRational = weights.iter().sum();
        let mut coords = [BigRational::from_integer(0.into()), BigRational::from_integer(0.into()), BigRational::from_integer(0.into())];
        for (v, wt) in h.vertices.iter().zip(&weights) {
            for (c, x) in coords.iter_mut().zip(v.coords()) {
                *c += wt * x / &total;
            }
        }
        let [a, b, c] = coords;
        let p = ExponentPoint::new(a, b, c).unwrap();
        prop_assert!(contains(&h, &p).is_inside());
    }

    #[test]
    fn translation_commutes_with_evaluation(
        c in prop::collection::vec(-1.0f64..1.0, 4),
        y in prop::collection::vec(-1.0f64..1.0, 4),
        x in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let f = TestFunction::gaussian(c, 0.8).unwrap();
        let moved = f.translated(&y).unwrap();
        let back: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        assert_abs_diff_eq!(moved.eval(&x), f.eval(&back), epsilon = 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reduced_multiplier_is_even_and_rotation_invariant(p in triple(5), seed in any::<u64>()) {
        let spec = QuadratureSpec::default();
        let q = sample_haar(5, RngStream::new(seed, 2)).unwrap();
        let m = multiplier_reduced(&p, &spec).unwrap().value;
        let rotated = multiplier_reduced(&p.rotated(&q), &spec).unwrap().value;
        let negated = multiplier_reduced(&p.negated(), &spec).unwrap().value;
        prop_assert!((m - rotated).norm() < 1e-9);
        prop_assert!((m - negated).norm() < 1e-9);
        prop_assert!(m.norm() <= 1.0 + 1e-9);
    }
}
