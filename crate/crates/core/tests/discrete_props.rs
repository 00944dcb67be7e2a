use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reparam::functionals::{
    c0_distance, diameter, energy, random_map_pair, sobolev_norm, volume, SobolevParams,
};
use reparam::mapspace::{
    bump_perturb, constant_map, identity_map, power_map, pullback, DiscreteMap, TargetManifold,
};
use reparam::mobius::{random_element, random_element_with, GroupFamily, MobiusElement};
use reparam::sphere::{SphereMesh, SphericalRegion, Vec3};

fn mesh(level: u32) -> Arc<SphereMesh> {
    SphereMesh::shared(level).unwrap()
}

fn random_axis<R: Rng>(rng: &mut R) -> Vec3 {
    Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalized()
}

fn stock(m: &Arc<SphereMesh>, k: usize) -> DiscreteMap {
    match k % 4 {
        0 => identity_map(m),
        1 => power_map(m, 2).unwrap(),
        2 => power_map(m, 3).unwrap(),
        _ => bump_perturb(&identity_map(m), Vec3::new(0.2, 0.7, -0.4), 0.8, 0.3, 5).unwrap(),
    }
}

#[test]
fn quadrature_converges() {
    let errs: Vec<f64> = (2..=5).map(|l| (mesh(l).total_weight() - 4.0 * PI).abs()).collect();
    for w in errs.windows(2) {
        assert!(w[0] / w[1] >= 3.0, "{errs:?}");
    }
}

#[test]
fn cap_weights_match_cap_area() {
    let m = mesh(5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let axis = random_axis(&mut rng);
        let c = rng.gen_range(-0.9..0.9);
        let w = m.region_weight(&SphericalRegion::cap(axis, c).unwrap());
        let want = 2.0 * PI * (1.0 + c);
        assert!((w - want).abs() / want < 0.02, "c = {c}: {w} vs {want}");
    }
}

#[test]
fn pullback_is_an_action_up_to_resampling() {
    let m = mesh(4);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..50 {
        let f = stock(&m, i);
        let g1 = random_element_with(3.0, GroupFamily::G0, &mut rng).unwrap();
        let g2 = random_element_with(3.0, GroupFamily::G0, &mut rng).unwrap();
        let twice = pullback(&pullback(&f, &g2).unwrap(), &g1).unwrap();
        let once = pullback(&f, &g2.compose(&g1)).unwrap();
        let bound = 5.0 * f.lipschitz_resampling_bound();
        let d = c0_distance(&twice, &once).unwrap();
        assert!(d <= bound, "sample {i}: {d} > {bound}");
    }
}

#[test]
fn pullback_chains_stay_on_target() {
    let m = mesh(3);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut f = power_map(&m, 2).unwrap();
    for _ in 0..10 {
        f = pullback(&f, &random_element_with(4.0, GroupFamily::G0, &mut rng).unwrap()).unwrap();
    }
    assert!(f.max_target_deviation() <= 1e-8);
}

#[test]
fn constants_are_fixed_points() {
    let m = mesh(3);
    let c = constant_map(&m, TargetManifold::UnitSphere, &[0.6, 0.0, 0.8]).unwrap();
    for seed in 0..20 {
        let g = random_element(8.0, GroupFamily::G0, seed).unwrap();
        assert_eq!(pullback(&c, &g).unwrap(), c);
    }
}

#[test]
fn sobolev_norm_and_volume_are_not_conformally_invariant() {
    // Guards against testing the wrong invariance: energy is invariant, these are not.
    let m = mesh(5);
    let f = identity_map(&m);
    let g = MobiusElement::dilation(Complex64::new(4.0, 0.0));
    let h = pullback(&f, &g).unwrap();
    let p = SobolevParams::default();
    let rel = (sobolev_norm(&h, p) - sobolev_norm(&f, p)).abs() / sobolev_norm(&f, p);
    assert!(rel > 5.0 * 0.02, "{rel}");
    assert!((energy(&h) - energy(&f)).abs() / energy(&f) < 0.02);
    let tor = reparam::mapspace::axis_map(
        &m,
        TargetManifold::Ambient(3),
        Vec3::new(0.0, 0.0, 1.0),
        &[vec![0.0, 0.0, -1.0], vec![0.5, 0.0, 0.0], vec![0.0, 0.0, 1.0]],
    )
    .unwrap();
    let tor_h = pullback(&tor, &g).unwrap();
    assert!((volume(&tor_h) - volume(&tor)).abs() / volume(&tor) > 0.1);
}

#[test]
fn holomorphic_maps_attain_half_energy() {
    let m = mesh(5);
    for d in 1..=3 {
        let f = power_map(&m, d).unwrap();
        let (v, e) = (volume(&f), energy(&f));
        assert!((v - e / 2.0).abs() / v < 0.03, "d = {d}: {v} vs {e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn volume_is_at_most_half_energy(seed in any::<u64>()) {
        let m = mesh(3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, h) = random_map_pair(&m, &mut rng).unwrap();
        for x in [f, h] {
            prop_assert!(volume(&x) <= 0.5 * energy(&x) * 1.03 + 1e-12);
        }
    }

    #[test]
    fn diameter_grows_with_region(seed in any::<u64>(), r1 in 0.05f64..3.0, extra in 0.0f64..3.0) {
        let m = mesh(3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, _) = random_map_pair(&m, &mut rng).unwrap();
        let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let small = diameter(&f, &SphericalRegion::chart_disc(c, r1)).unwrap_or(0.0);
        let large = diameter(&f, &SphericalRegion::chart_disc(c, r1 + extra)).unwrap_or(0.0);
        let full = diameter(&f, &SphericalRegion::Full).unwrap();
        prop_assert!(small <= large + 1e-15 && large <= full + 1e-15);
        // Sphere-valued, so every value has norm 1.
        prop_assert!(full <= 2.0 + 1e-12);
    }

    #[test]
    fn energy_of_a_rotated_map_is_unchanged(seed in any::<u64>(), k in 0usize..4) {
        let m = mesh(3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = stock(&m, k);
        let axis = random_axis(&mut rng);
        let u = MobiusElement::rotation(axis, rng.gen_range(0.0..2.0 * PI));
        let h = pullback(&f, &u).unwrap();
        prop_assert!((energy(&h) - energy(&f)).abs() / energy(&f) < 0.25);
    }
}
