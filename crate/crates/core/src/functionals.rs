//! Scalar functionals of discrete maps: conformal energy, Sobolev norms and
//! distances, C⁰ distance, diameter over regions, image volume and the
//! m-dimensional energy, plus empirical calibration of the constants that
//! relate them.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapspace::{self, ambient_dist, DiscreteMap, Field, MapError, TargetManifold};
use crate::mobius::{random_element_with, GroupFamily, MobiusElement};
use crate::sphere::{SphereMesh, SphericalRegion, Vec3};

/// Region vertex count above which [`diameter`] switches to the heuristic.
pub const EXACT_DIAMETER_LIMIT: usize = 5000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error("Sobolev exponent k must be 1 or 2, got {0}")]
    BadOrder(u32),
    #[error("Sobolev exponent p must exceed 1, got {0}")]
    BadExponent(f64),
    #[error("k - 2/p = {0} must exceed 1")]
    NotEmbedded(f64),
    #[error("region contains no vertices")]
    EmptyRegion,
    #[error("calibration needs at least 10 samples, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Sobolev regularity `(k, p)` of the map space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevParams {
    k: u32,
    p: f64,
}

impl SobolevParams {
    /// Parameters for which maps are continuous: `m0 = k - 2/p > 1`.
    pub fn new(k: u32, p: f64) -> Result<Self, FunctionalError> {
        let params = Self::norm_only(k, p)?;
        if params.m0() <= 1.0 {
            return Err(FunctionalError::NotEmbedded(params.m0()));
        }
        Ok(params)
    }

    /// Parameters for evaluating norms only, without the `m0 > 1` requirement.
    pub fn norm_only(k: u32, p: f64) -> Result<Self, FunctionalError> {
        if !(1..=2).contains(&k) {
            return Err(FunctionalError::BadOrder(k));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(FunctionalError::BadExponent(p));
        }
        Ok(Self { k, p })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn m0(&self) -> f64 {
        self.k as f64 - 2.0 / self.p
    }

    pub fn is_embedded(&self) -> bool {
        self.m0() > 1.0
    }
}

impl Default for SobolevParams {
    fn default() -> Self {
        Self { k: 2, p: 4.0 }
    }
}

/// Gradient of each ambient component over one face.
fn face_gradients(mesh: &SphereMesh, field: &Field, face: usize) -> Vec<Vec3> {
    let f = mesh.faces()[face];
    let geo = &mesh.face_geometry()[face];
    (0..field.dim)
        .map(|k| {
            // Written with differences so that constant fields have exactly zero gradient.
            let base = field.at(f[0])[k];
            geo.grad[1] * (field.at(f[1])[k] - base) + geo.grad[2] * (field.at(f[2])[k] - base)
        })
        .collect()
}

fn frobenius_sqr(grads: &[Vec3]) -> f64 {
    grads.iter().map(|g| g.norm_sqr()).sum()
}

/// Largest singular value of the differential restricted to the face plane.
fn operator_norm(grads: &[Vec3], frame: &[Vec3; 2]) -> f64 {
    let (mut g11, mut g12, mut g22) = (0.0, 0.0, 0.0);
    for g in grads {
        let d1 = g.dot(frame[0]);
        let d2 = g.dot(frame[1]);
        g11 += d1 * d1;
        g12 += d1 * d2;
        g22 += d2 * d2;
    }
    let half_tr = (g11 + g22) / 2.0;
    let disc = ((g11 - g22) / 2.0).hypot(g12);
    (half_tr + disc).max(0.0).sqrt()
}

/// Per-face squared Frobenius norm of the P1 differential.
pub fn face_energy_density(mesh: &SphereMesh, field: &Field) -> Vec<f64> {
    (0..mesh.face_count()).map(|t| frobenius_sqr(&face_gradients(mesh, field, t))).collect()
}

/// Area-weighted average of per-face quantities at each vertex.
fn average_to_vertices(mesh: &SphereMesh, per_face: &[f64]) -> Vec<f64> {
    let geo = mesh.face_geometry();
    (0..mesh.vertex_count())
        .map(|v| {
            let (mut num, mut den) = (0.0, 0.0);
            for &t in mesh.vertex_faces(v) {
                num += geo[t].area * per_face[t];
                den += geo[t].area;
            }
            num / den
        })
        .collect()
}

/// Magnitude of the cotangent Laplacian (lumped mass) at each vertex.
pub fn laplacian_magnitude(mesh: &SphereMesh, field: &Field) -> Vec<f64> {
    let dim = field.dim;
    let mut acc = vec![0.0; mesh.vertex_count() * dim];
    for &(i, j, w) in mesh.edges() {
        for k in 0..dim {
            let d = w * (field.at(j)[k] - field.at(i)[k]);
            acc[i * dim + k] += d;
            acc[j * dim + k] -= d;
        }
    }
    let weights = mesh.vertex_weights();
    acc.chunks(dim)
        .zip(weights)
        .map(|(c, w)| c.iter().map(|x| x * x).sum::<f64>().sqrt() / w)
        .collect()
}

/// Discrete conformal energy `∫ |df|²`: the sum over faces of the Dirichlet
/// energy of the P1 interpolant (Frobenius norm of the differential).
pub fn energy(f: &DiscreteMap) -> f64 {
    field_energy(f.mesh(), f.values())
}

pub fn field_energy(mesh: &SphereMesh, field: &Field) -> f64 {
    let geo = mesh.face_geometry();
    face_energy_density(mesh, field).iter().zip(geo).map(|(d, g)| d * g.area).sum()
}

/// `(Σ_{j<=k} ∫ |D^j u|^p)^{1/p}` for an ambient field `u`, with `|Du|` the
/// vertex average of the face differentials and `|D²u|` the magnitude of the
/// cotangent Laplacian.
pub fn field_sobolev_norm(mesh: &SphereMesh, field: &Field, params: SobolevParams) -> f64 {
    let p = params.p;
    let w = mesh.vertex_weights();
    let mut total: f64 = field.magnitudes().iter().zip(w).map(|(m, w)| w * m.powf(p)).sum();
    let d1 = average_to_vertices(mesh, &face_energy_density(mesh, field));
    total += d1.iter().zip(w).map(|(e, w)| w * e.powf(p / 2.0)).sum::<f64>();
    if params.k >= 2 {
        let d2 = laplacian_magnitude(mesh, field);
        total += d2.iter().zip(w).map(|(m, w)| w * m.powf(p)).sum::<f64>();
    }
    total.powf(1.0 / p)
}

pub fn sobolev_norm(f: &DiscreteMap, params: SobolevParams) -> f64 {
    field_sobolev_norm(f.mesh(), f.values(), params)
}

pub fn sobolev_distance(f: &DiscreteMap, h: &DiscreteMap, params: SobolevParams) -> Result<f64, FunctionalError> {
    let d = mapspace::map_difference(f, h)?;
    Ok(field_sobolev_norm(f.mesh(), &d, params))
}

/// Largest ambient distance between corresponding vertex values.
pub fn c0_distance(f: &DiscreteMap, h: &DiscreteMap) -> Result<f64, FunctionalError> {
    f.check_compatible(h)?;
    Ok((0..f.vertex_count()).map(|i| ambient_dist(f.value(i), h.value(i))).fold(0.0, f64::max))
}

/// Exact largest pairwise distance among the values at `idx`.
pub fn diameter_exact(f: &DiscreteMap, idx: &[usize]) -> f64 {
    let mut best: f64 = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            best = best.max(ambient_dist(f.value(i), f.value(j)));
        }
    }
    best
}

/// Furthest-point sweeps from 8 deterministic starts; a lower bound on the
/// diameter that is exact whenever a sweep reaches a diametral pair.
pub fn diameter_heuristic(f: &DiscreteMap, idx: &[usize]) -> f64 {
    if idx.len() < 2 {
        return 0.0;
    }
    let furthest = |from: usize| -> (usize, f64) {
        let mut best = (from, 0.0);
        for &j in idx {
            let d = ambient_dist(f.value(from), f.value(j));
            if d > best.1 {
                best = (j, d);
            }
        }
        best
    };
    let mut best: f64 = 0.0;
    let restarts = 8.min(idx.len());
    for r in 0..restarts {
        let mut cur = idx[r * idx.len() / restarts];
        let mut last = -1.0;
        for _ in 0..16 {
            let (next, d) = furthest(cur);
            best = best.max(d);
            if d <= last {
                break;
            }
            last = d;
            cur = next;
        }
    }
    best
}

/// Diameter of the image of a region.
pub fn diameter(f: &DiscreteMap, region: &SphericalRegion) -> Result<f64, FunctionalError> {
    let idx = f.mesh().region_vertices(region);
    if idx.is_empty() {
        return Err(FunctionalError::EmptyRegion);
    }
    Ok(if idx.len() < EXACT_DIAMETER_LIMIT { diameter_exact(f, &idx) } else { diameter_heuristic(f, &idx) })
}

fn triangle_area(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let (mut uu, mut vv, mut uv) = (0.0, 0.0, 0.0);
    for k in 0..a.len() {
        let u = b[k] - a[k];
        let v = c[k] - a[k];
        uu += u * u;
        vv += v * v;
        uv += u * v;
    }
    0.5 * (uu * vv - uv * uv).max(0.0).sqrt()
}

/// Per-face area of the image triangle.
pub fn face_image_areas(f: &DiscreteMap) -> Vec<f64> {
    f.mesh()
        .faces()
        .iter()
        .map(|t| triangle_area(f.value(t[0]), f.value(t[1]), f.value(t[2])))
        .collect()
}

/// Image area counted with multiplicity.
pub fn volume(f: &DiscreteMap) -> f64 {
    face_image_areas(f).iter().sum()
}

/// Image area of the faces whose three vertices all lie in `region`.
pub fn volume_restricted(f: &DiscreteMap, region: &SphericalRegion) -> f64 {
    let mask = f.mesh().region_mask(region);
    volume_masked(f, &mask)
}

pub fn volume_masked(f: &DiscreteMap, mask: &[bool]) -> f64 {
    f.mesh()
        .faces()
        .iter()
        .filter(|t| t.iter().all(|&i| mask[i]))
        .map(|t| triangle_area(f.value(t[0]), f.value(t[1]), f.value(t[2])))
        .sum()
}

/// `∫ ‖df‖^m` with `‖df‖` the operator norm, averaged from faces to vertices.
pub fn v1_energy(f: &DiscreteMap, m: u32) -> f64 {
    let mesh = f.mesh();
    let geo = mesh.face_geometry();
    let per_face: Vec<f64> = (0..mesh.face_count())
        .map(|t| operator_norm(&face_gradients(mesh, f.values(), t), &geo[t].frame))
        .collect();
    average_to_vertices(mesh, &per_face)
        .iter()
        .zip(mesh.vertex_weights())
        .map(|(n, w)| w * n.powi(m as i32))
        .sum()
}

/// `|E(f) - E(h)| / ((‖f‖ + ‖h‖) ‖f - h‖)`, or `None` when the denominator vanishes.
pub fn energy_bound_ratio(f: &DiscreteMap, h: &DiscreteMap, params: SobolevParams) -> Result<Option<f64>, FunctionalError> {
    let dist = sobolev_distance(f, h, params)?;
    let den = (sobolev_norm(f, params) + sobolev_norm(h, params)) * dist;
    if !(den > 1e-12) {
        return Ok(None);
    }
    Ok(Some((energy(f) - energy(h)).abs() / den))
}

/// Empirical value of a constant the theory only asserts to exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub quantity: String,
    pub constant_estimate: f64,
    pub sample_count: usize,
    pub excluded: usize,
    pub max_ratio_observed: f64,
    pub params: SobolevParams,
    pub mesh_level: u32,
    pub seed: u64,
}

/// Random map pairs on a sphere target: orbit pairs, local bumps and unrelated
/// stock maps, all deterministic in `rng`.
pub fn random_map_pair<R: Rng + ?Sized>(
    mesh: &Arc<SphereMesh>,
    rng: &mut R,
) -> Result<(DiscreteMap, DiscreteMap), MapError> {
    let stock = |k: u32, rng: &mut R| -> Result<DiscreteMap, MapError> {
        let base = match k {
            0 => mapspace::identity_map(mesh),
            1 => mapspace::power_map(mesh, 2)?,
            2 => mapspace::power_map(mesh, 3)?,
            3 => {
                let q = random_unit(rng);
                mapspace::constant_map(mesh, TargetManifold::UnitSphere, &q.to_array())?
            }
            _ => {
                let c = random_unit(rng);
                mapspace::bump_perturb(&mapspace::identity_map(mesh), c, 0.8, 0.4, rng.gen())?
            }
        };
        let g = random_element_with(2.0, GroupFamily::G0, rng).expect("bound >= 1");
        mapspace::pullback(&base, &g)
    };
    let f = stock(rng.gen_range(0..5), rng)?;
    let h = match rng.gen_range(0..4) {
        0 => stock(rng.gen_range(0..5), rng)?,
        1 => {
            let u = MobiusElement::rotation(random_unit(rng), rng.gen_range(0.0..PI));
            mapspace::pullback(&f, &u)?
        }
        _ => {
            let c = random_unit(rng);
            let radius = rng.gen_range(0.3..1.2);
            let amp = rng.gen_range(0.01..0.4);
            mapspace::bump_perturb(&f, c, radius, amp, rng.gen())?
        }
    };
    Ok((f, h))
}

pub(crate) fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v * (1.0 / n);
        }
    }
}

fn calibrate<F>(
    quantity: &str,
    mesh: &Arc<SphereMesh>,
    samples: usize,
    params: SobolevParams,
    seed: u64,
    mut ratio: F,
) -> Result<CalibrationReport, FunctionalError>
where
    F: FnMut(&DiscreteMap, &DiscreteMap) -> Result<Option<f64>, FunctionalError>,
{
    if samples < 10 {
        return Err(FunctionalError::TooFewSamples(samples));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    let mut excluded = 0;
    for _ in 0..samples {
        let (f, h) = random_map_pair(mesh, &mut rng)?;
        if f == h {
            excluded += 1;
            continue;
        }
        match ratio(&f, &h)? {
            Some(r) => max_ratio = max_ratio.max(r),
            None => excluded += 1,
        }
    }
    Ok(CalibrationReport {
        quantity: quantity.to_string(),
        constant_estimate: max_ratio,
        sample_count: samples,
        excluded,
        max_ratio_observed: max_ratio,
        params,
        mesh_level: mesh.level(),
        seed,
    })
}

/// Empirical constant `C` in `|E(f) - E(h)| <= C (‖f‖ + ‖h‖) ‖f - h‖`.
pub fn calibrate_energy_bound(
    mesh: &Arc<SphereMesh>,
    samples: usize,
    params: SobolevParams,
    seed: u64,
) -> Result<CalibrationReport, FunctionalError> {
    calibrate("energy_difference_bound", mesh, samples, params, seed, |f, h| energy_bound_ratio(f, h, params))
}

/// Empirical constant of the discrete embedding `‖f - h‖_{C⁰} <= C ‖f - h‖_{k,p}`.
pub fn calibrate_c0_embedding(
    mesh: &Arc<SphereMesh>,
    samples: usize,
    params: SobolevParams,
    seed: u64,
) -> Result<CalibrationReport, FunctionalError> {
    calibrate("c0_sobolev_embedding", mesh, samples, params, seed, |f, h| {
        let s = sobolev_distance(f, h, params)?;
        if !(s > 1e-12) {
            return Ok(None);
        }
        Ok(Some(c0_distance(f, h)? / s))
    })
}

/// Whether a sphere-valued map is constant up to `tol` in every component.
pub fn is_constant(f: &DiscreteMap, tol: f64) -> bool {
    let first = f.value(0);
    (1..f.vertex_count()).all(|i| ambient_dist(first, f.value(i)) <= tol)
}

/// Whether the target supports the sphere-specific bounds below.
pub fn is_sphere_valued(f: &DiscreteMap) -> bool {
    f.target() == TargetManifold::UnitSphere
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapspace::{antipodal_map, axis_map, constant_map, identity_map, power_map, pullback};

    fn mesh(level: u32) -> Arc<SphereMesh> {
        SphereMesh::shared(level).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn params_validation() {
        assert!(SobolevParams::new(2, 4.0).is_ok());
        assert!(matches!(SobolevParams::new(1, 4.0), Err(FunctionalError::NotEmbedded(_))));
        assert!(matches!(SobolevParams::new(2, 2.0), Err(FunctionalError::NotEmbedded(_))));
        assert!(SobolevParams::norm_only(1, 4.0).is_ok());
        assert_eq!(SobolevParams::norm_only(3, 4.0), Err(FunctionalError::BadOrder(3)));
        assert_eq!(SobolevParams::norm_only(1, 1.0), Err(FunctionalError::BadExponent(1.0)));
    }

    #[test]
    fn constant_map_functionals_vanish() {
        let m = mesh(3);
        let q = [0.0, 0.6, -0.8];
        let f = constant_map(&m, TargetManifold::UnitSphere, &q).unwrap();
        assert!(energy(&f) <= 1e-12);
        assert_eq!(volume(&f), 0.0);
        assert_eq!(v1_energy(&f, 2), 0.0);
        assert_eq!(diameter(&f, &SphericalRegion::Full).unwrap(), 0.0);
        let params = SobolevParams::norm_only(1, 3.0).unwrap();
        let expected = (m.total_weight() * 1.0f64.powf(3.0)).powf(1.0 / 3.0);
        assert!(rel(sobolev_norm(&f, params), expected) < 1e-12);
    }

    #[test]
    fn identity_energy_and_volume() {
        let m = mesh(5);
        let f = identity_map(&m);
        assert!(rel(energy(&f), 8.0 * PI) < 0.01);
        assert!(rel(volume(&f), 4.0 * PI) < 0.01);
        assert!(rel(v1_energy(&f, 2), 4.0 * PI) < 0.02);
    }

    #[test]
    fn identity_sobolev_norm_k1_p4() {
        let m = mesh(5);
        let params = SobolevParams::norm_only(1, 4.0).unwrap();
        let n = sobolev_norm(&identity_map(&m), params);
        assert!(rel(n, (20.0 * PI).powf(0.25)) < 0.02, "{n}");
    }

    #[test]
    fn distances_basic() {
        let m = mesh(3);
        let f = identity_map(&m);
        let a = antipodal_map(&m);
        assert_eq!(c0_distance(&f, &f).unwrap(), 0.0);
        assert!((c0_distance(&f, &a).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(sobolev_distance(&f, &f, SobolevParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn identity_diameter() {
        let m = mesh(3);
        let f = identity_map(&m);
        assert!((diameter(&f, &SphericalRegion::Full).unwrap() - 2.0).abs() < 1e-12);
        let cap = SphericalRegion::cap(Vec3::new(0.0, 0.0, 1.0), 0.0).unwrap();
        assert!((diameter(&f, &cap).unwrap() - 2.0).abs() < 1e-3);
        let empty = SphericalRegion::cap(Vec3::new(0.0, 0.0, 1.0), -1.5).unwrap();
        assert_eq!(diameter(&f, &empty), Err(FunctionalError::EmptyRegion));
    }

    #[test]
    fn heuristic_diameter_matches_exact_on_small_meshes() {
        for level in 0..=3 {
            let m = mesh(level);
            let all: Vec<usize> = (0..m.vertex_count()).collect();
            let profile = vec![vec![0.0, 0.0, -1.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.3]];
            let maps = vec![
                identity_map(&m),
                power_map(&m, 2).unwrap(),
                power_map(&m, 3).unwrap(),
                axis_map(&m, TargetManifold::UnitSphere, Vec3::new(0.0, 0.0, 1.0), &profile).unwrap(),
                pullback(&identity_map(&m), &MobiusElement::dilation(num_complex::Complex64::new(3.0, 1.0))).unwrap(),
            ];
            for f in &maps {
                let exact = diameter_exact(f, &all);
                let heur = diameter_heuristic(f, &all);
                assert!((exact - heur).abs() <= 1e-12, "level {level}: {exact} vs {heur}");
            }
        }
    }

    #[test]
    fn power_map_volume_and_energy() {
        let m = mesh(5);
        for d in 2..=3u32 {
            let f = power_map(&m, d).unwrap();
            assert!(rel(energy(&f), 8.0 * PI * d as f64) < 0.02);
            assert!(rel(volume(&f), 4.0 * PI * d as f64) < 0.02);
        }
    }

    #[test]
    fn volume_below_half_energy() {
        let m = mesh(4);
        for f in [identity_map(&m), power_map(&m, 2).unwrap(), crate::mapspace::bump_perturb(&identity_map(&m), Vec3::new(0.0, 1.0, 0.0), 0.7, 0.3, 9).unwrap()] {
            assert!(volume(&f) <= 0.5 * energy(&f) * 1.03);
        }
    }

    #[test]
    fn calibration_is_deterministic() {
        let m = mesh(2);
        let params = SobolevParams::default();
        let a = calibrate_energy_bound(&m, 12, params, 5).unwrap();
        let b = calibrate_energy_bound(&m, 12, params, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.constant_estimate >= a.max_ratio_observed);
        assert_eq!(calibrate_energy_bound(&m, 5, params, 5), Err(FunctionalError::TooFewSamples(5)));
    }

    #[test]
    fn rotation_pairs_have_tiny_ratio() {
        let m = mesh(4);
        let f = identity_map(&m);
        let u = MobiusElement::rotation(Vec3::new(1.0, 2.0, 0.5), 0.9);
        let h = pullback(&f, &u).unwrap();
        let r = energy_bound_ratio(&f, &h, SobolevParams::default()).unwrap().unwrap();
        assert!(r < 1e-2, "{r}");
    }
}
