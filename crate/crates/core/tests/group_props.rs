use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reparam::mobius::{
    in_compact_set, kak_decompose, random_element, CompactExhaustionIndex, GroupFamily, MobiusElement,
};
use reparam::sphere::{chart_coordinate, stereo_to_sphere, ChartPoint, Vec3};

fn family() -> impl Strategy<Value = GroupFamily> {
    prop_oneof![Just(GroupFamily::G0), Just(GroupFamily::G1), Just(GroupFamily::G2)]
}

fn element() -> impl Strategy<Value = MobiusElement> {
    (any::<u64>(), 1.0f64..8.0).prop_map(|(seed, bound)| random_element(bound, GroupFamily::G0, seed).unwrap())
}

fn unit_point() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(z, phi)| {
        let r = (1.0 - z * z).sqrt();
        Vec3::new(r * phi.cos(), r * phi.sin(), z)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn composition_is_associative(g1 in element(), g2 in element(), g3 in element()) {
        let lhs = g1.compose(&g2).compose(&g3);
        let rhs = g1.compose(&g2.compose(&g3));
        prop_assert!(lhs.distance(&rhs) <= 1e-12 * lhs.matrix().dist(&reparam::mobius::Mat2::IDENTITY).max(1.0));
    }

    #[test]
    fn identity_and_inverse(g in element()) {
        let e = MobiusElement::identity();
        prop_assert!(g.compose(&e).distance(&g) <= 1e-12);
        prop_assert!(e.compose(&g).distance(&g) <= 1e-12);
        prop_assert!(g.compose(&g.inverse()).distance(&e) <= 1e-12);
        prop_assert!(g.inverse().compose(&g).distance(&e) <= 1e-12);
    }

    #[test]
    fn action_is_compatible(g1 in element(), g2 in element(), p in unit_point()) {
        let a = g1.compose(&g2).apply(p);
        let b = g1.apply(g2.apply(p));
        prop_assert!((a - b).norm() <= 1e-10, "{a:?} {b:?}");
    }

    #[test]
    fn action_stays_on_sphere(g in element(), p in unit_point()) {
        prop_assert!((g.apply(p).norm() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn kak_reconstructs(g in element()) {
        let k = kak_decompose(&g);
        prop_assert!(k.a >= 1.0);
        prop_assert!(k.reconstruct().projective_dist(g.matrix()) <= 1e-10);
        prop_assert!(k.u1.unitarity_error() <= 1e-10 && k.u2.unitarity_error() <= 1e-10);
    }

    #[test]
    fn exhaustion_is_monotone(seed in any::<u64>(), bound in 1.0f64..20.0, fam in family()) {
        let g = random_element(bound, fam, seed).unwrap();
        let n0 = g.exhaustion_index(fam).unwrap();
        prop_assert!(n0 as f64 <= bound.ceil());
        for n in 1..=n0 + 3 {
            let inside = in_compact_set(&g, CompactExhaustionIndex::new(n, fam).unwrap()).unwrap();
            prop_assert_eq!(inside, n >= n0, "n = {}, n0 = {}", n, n0);
        }
    }

    #[test]
    fn serialized_elements_round_trip(g in element()) {
        let back = MobiusElement::from_array(g.to_array()).unwrap();
        prop_assert_eq!(back, g);
    }
}

#[test]
fn sign_representative_is_canonical() {
    let g = MobiusElement::affine(Complex64::new(2.0, 1.0), Complex64::new(-0.5, 0.3));
    let neg = MobiusElement::from_matrix(g.matrix().scale(Complex64::new(-1.0, 0.0))).unwrap();
    assert_eq!(neg, g);
}

#[test]
fn dilation_acts_on_the_chart() {
    // z ↦ 4z in the chart sends the equator to |z| = 4.
    let g = MobiusElement::dilation(Complex64::new(4.0, 0.0));
    let p = stereo_to_sphere(ChartPoint::Finite(Complex64::new(0.0, 1.0)));
    let z = chart_coordinate(g.apply(p)).unwrap();
    assert!((z - Complex64::new(0.0, 4.0)).norm() < 1e-12);
    assert_eq!(g.exhaustion_index(GroupFamily::G2).unwrap(), 4);
    assert_eq!(g.exhaustion_index(GroupFamily::G0).unwrap(), 4);
}

#[test]
fn stereographic_chart_is_conformal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-6;
    for _ in 0..200 {
        let z = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let at = |w: Complex64| stereo_to_sphere(ChartPoint::Finite(w));
        let dx = (at(z + h) - at(z)).norm();
        let dy = (at(z + Complex64::new(0.0, h)) - at(z)).norm();
        assert!((dx / dy - 1.0).abs() < 1e-3, "{z}");
    }
}
