//! The pseudo-moment map of the rotation group acting on maps from the
//! sphere, and a centering solver over the non-compact directions.
//!
//! For a direction `ξ` the lower region is the closed hemisphere
//! `{p : <p, ξ> <= c}` with `c` the midpoint of the height function's range,
//! and `<m(f), ξ> = v(f)/2 - v(f | lower region)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functionals::{face_image_areas, volume};
use crate::mapspace::{pullback, DiscreteMap, MapError};
use crate::mobius::{Mat2, MobiusElement};
use crate::sphere::{SphereMesh, SphericalRegion, Vec3};

/// Default v-stability floor: `1e-6 × 4π`.
pub const DEFAULT_VOLUME_FLOOR: f64 = 1e-6 * 4.0 * std::f64::consts::PI;

/// Finite-difference step in the Hermitian-exponential parameters.
const FD_STEP: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("map is not v-stable: volume {volume:e} <= floor {floor:e}")]
    NotVStable { volume: f64, floor: f64 },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("rotation axis must be nonzero")]
    ZeroAxis,
    #[error(transparent)]
    Map(#[from] MapError),
}

/// A point of SU(2) blown up at `±1`: the axis survives at angle `0` and `π`.
///
/// `angle` is the SU(2) parameter `ψ` of `cos ψ + i sin ψ (n·σ)`; the induced
/// rotation of the sphere is by `2ψ` about `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRotation {
    axis: Vec3,
    angle: f64,
}

impl OrientedRotation {
    pub fn new(axis: Vec3, angle: f64) -> Result<Self, MomentError> {
        let n = axis.norm();
        if !(n > 0.0) {
            return Err(MomentError::ZeroAxis);
        }
        let mut angle = angle.rem_euclid(2.0 * std::f64::consts::PI);
        let mut axis = axis * (1.0 / n);
        if angle > std::f64::consts::PI {
            // cos ψ + i sin ψ n = cos(2π-ψ) + i sin(2π-ψ) (-n)
            angle = 2.0 * std::f64::consts::PI - angle;
            axis = -axis;
        }
        Ok(Self { axis, angle })
    }

    /// Lift of the blown-up rotation to an element acting on the sphere.
    pub fn to_mobius(&self) -> MobiusElement {
        MobiusElement::rotation(self.axis, 2.0 * self.angle)
    }

    /// Oriented rotation of a (near-)unitary representative, or `None` at `±1`
    /// where the axis is not determined by the matrix alone.
    pub fn from_unitary(m: &Mat2) -> Option<Self> {
        // m = cos ψ I + i sin ψ (nx σx - ny σy + nz σz)
        let cos = (m.a.re + m.d.re) / 2.0;
        let sx = (m.b.im + m.c.im) / 2.0;
        let sy = (m.c.re - m.b.re) / 2.0;
        let sz = (m.a.im - m.d.im) / 2.0;
        let v = Vec3::new(sx, sy, sz);
        let sin = v.norm();
        if sin < 1e-14 {
            return None;
        }
        Some(Self { axis: v * (1.0 / sin), angle: sin.atan2(cos) })
    }

    pub fn axis(&self) -> Vec3 {
        self.axis
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }
}

/// Evaluations of the pseudo-moment map on the rotation generators about
/// the x, y and z axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub components: [f64; 3],
}

impl MomentVector {
    pub fn norm(&self) -> f64 {
        self.components.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Cap level for an axis: midpoint of the height function over the mesh.
pub fn cap_level(mesh: &SphereMesh, axis: Vec3) -> f64 {
    let (lo, hi) = mesh
        .vertices()
        .iter()
        .map(|v| v.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), h| (lo.min(h), hi.max(h)));
    (hi + lo) / 2.0
}

fn lower_region(mesh: &SphereMesh, axis: Vec3, shift: f64) -> SphericalRegion {
    let axis = axis.normalized();
    SphericalRegion::cap(axis, cap_level(mesh, axis) + shift).expect("unit axis")
}

fn pair_with_areas(f: &DiscreteMap, areas: &[f64], axis: Vec3, shift: f64) -> f64 {
    let mesh = f.mesh();
    let mask = mesh.region_mask(&lower_region(mesh, axis, shift));
    let total: f64 = areas.iter().sum();
    let lower: f64 = mesh
        .faces()
        .iter()
        .zip(areas)
        .filter(|(t, _)| t.iter().all(|&i| mask[i]))
        .map(|(_, a)| a)
        .sum();
    total / 2.0 - lower
}

/// `m(f, g) = v(f)/2 - v(f | lower half for the axis of g)`; depends on the
/// rotation only through its oriented axis.
pub fn pseudo_moment_pair(f: &DiscreteMap, rot: &OrientedRotation) -> f64 {
    pseudo_moment_axis(f, rot.axis())
}

pub fn pseudo_moment_axis(f: &DiscreteMap, axis: Vec3) -> f64 {
    pair_with_areas(f, &face_image_areas(f), axis.normalized(), 0.0)
}

/// A pairing together with its discretization diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingDiagnostics {
    pub value: f64,
    pub cap_level: f64,
    /// Largest change when the cap level moves by one mesh edge either way.
    pub level_sensitivity: f64,
    /// Image area of the faces that are in neither closed half.
    pub straddling_area: f64,
}

pub fn pseudo_moment_diagnostics(f: &DiscreteMap, axis: Vec3) -> PairingDiagnostics {
    let axis = axis.normalized();
    let areas = face_image_areas(f);
    let h = f.mesh().max_edge_length();
    let value = pair_with_areas(f, &areas, axis, 0.0);
    let up = pair_with_areas(f, &areas, axis, h);
    let down = pair_with_areas(f, &areas, axis, -h);
    PairingDiagnostics {
        value,
        cap_level: cap_level(f.mesh(), axis),
        level_sensitivity: (up - value).abs().max((down - value).abs()),
        straddling_area: straddling_area(f, axis),
    }
}

/// Image area of faces lying in neither the lower half for `axis` nor the
/// lower half for `-axis`.
pub fn straddling_area(f: &DiscreteMap, axis: Vec3) -> f64 {
    let mesh = f.mesh();
    let lo = mesh.region_mask(&lower_region(mesh, axis, 0.0));
    let hi = mesh.region_mask(&lower_region(mesh, -axis, 0.0));
    mesh.faces()
        .iter()
        .zip(face_image_areas(f))
        .filter(|(t, _)| !t.iter().all(|&i| lo[i]) && !t.iter().all(|&i| hi[i]))
        .map(|(_, a)| a)
        .sum()
}

const AXES: [Vec3; 3] = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];

/// Lower-half masks of the three coordinate axes for a mesh.
struct AxisMasks {
    masks: [Vec<bool>; 3],
}

impl AxisMasks {
    fn new(mesh: &SphereMesh) -> Self {
        Self { masks: AXES.map(|a| mesh.region_mask(&lower_region(mesh, a, 0.0))) }
    }

    fn moment(&self, f: &DiscreteMap) -> MomentVector {
        let areas = face_image_areas(f);
        let total: f64 = areas.iter().sum();
        let faces = f.mesh().faces();
        let components = [0, 1, 2].map(|k| {
            let mask = &self.masks[k];
            let lower: f64 = faces
                .iter()
                .zip(&areas)
                .filter(|(t, _)| t.iter().all(|&i| mask[i]))
                .map(|(_, a)| a)
                .sum();
            total / 2.0 - lower
        });
        MomentVector { components }
    }
}

/// The pseudo-moment map evaluated on the three coordinate generators.
pub fn pseudo_moment(f: &DiscreteMap) -> MomentVector {
    AxisMasks::new(f.mesh()).moment(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringStatus {
    Converged,
    NoConvergence,
}

/// Result of [`center_map`]; on `NoConvergence` the fields hold the best iterate.
#[derive(Debug, Clone)]
pub struct CenteringOutcome {
    pub g: MobiusElement,
    /// Parameters `t` of `g = exp(H(t))`.
    pub params: [f64; 3],
    pub f_centered: DiscreteMap,
    pub moment: MomentVector,
    pub residual: f64,
    pub iterations: usize,
    pub status: CenteringStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenteringOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub volume_floor: f64,
}

impl CenteringOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self { tol, max_iter, volume_floor: DEFAULT_VOLUME_FLOOR }
    }
}

struct Residual<'a> {
    f: &'a DiscreteMap,
    masks: AxisMasks,
}

impl Residual<'_> {
    fn eval(&self, t: [f64; 3]) -> Result<(DiscreteMap, MomentVector), MapError> {
        let g = MobiusElement::hermitian_exp(t);
        let h = pullback(self.f, &g)?;
        let m = self.masks.moment(&h);
        Ok((h, m))
    }
}

fn solve3(j: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(j);
    let scale = j.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(d.abs() > 1e-14 * scale.powi(3)) {
        return None;
    }
    let mut x = [0.0; 3];
    for c in 0..3 {
        let mut m = j;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        x[c] = det(m) / d;
    }
    Some(x)
}

/// Finds a pure non-compact `g = exp(H)` (H traceless Hermitian) for which
/// `f∘g` has pseudo-moment below `tol`, by damped quasi-Newton iteration on
/// the three parameters of `H` with a finite-difference Jacobian and a
/// coordinate bisection fallback.
pub fn center_map(f: &DiscreteMap, opts: CenteringOptions) -> Result<CenteringOutcome, MomentError> {
    if !(opts.tol > 0.0) {
        return Err(MomentError::BadTolerance(opts.tol));
    }
    let v = volume(f);
    if !(v > opts.volume_floor) {
        return Err(MomentError::NotVStable { volume: v, floor: opts.volume_floor });
    }
    let res = Residual { f, masks: AxisMasks::new(f.mesh()) };
    let mut t = [0.0; 3];
    let mut cur_map = f.clone();
    let mut cur = res.masks.moment(f);
    let mut iterations = 0;
    while cur.norm() > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let mut jac = [[0.0; 3]; 3];
        for c in 0..3 {
            let mut tp = t;
            tp[c] += FD_STEP;
            let (_, mp) = res.eval(tp)?;
            for r in 0..3 {
                jac[r][c] = (mp.components[r] - cur.components[r]) / FD_STEP;
            }
        }
        let rhs = cur.components.map(|x| -x);
        let mut improved = false;
        if let Some(step) = solve3(jac, rhs) {
            let mut lambda = 1.0;
            for _ in 0..10 {
                let trial = [0, 1, 2].map(|k| t[k] + lambda * step[k]);
                let (h, m) = res.eval(trial)?;
                if m.norm() < cur.norm() {
                    t = trial;
                    cur = m;
                    cur_map = h;
                    improved = true;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if !improved {
            match bisect_dominant(&res, t, cur, &jac)? {
                Some((tn, h, m)) => {
                    t = tn;
                    cur = m;
                    cur_map = h;
                }
                None => break,
            }
        }
    }
    let status = if cur.norm() <= opts.tol { CenteringStatus::Converged } else { CenteringStatus::NoConvergence };
    Ok(CenteringOutcome {
        g: MobiusElement::hermitian_exp(t),
        params: t,
        f_centered: cur_map,
        moment: cur,
        residual: cur.norm(),
        iterations,
        status,
    })
}

/// Bisection on the sign of the dominant moment component along its own
/// parameter direction.
fn bisect_dominant(
    res: &Residual<'_>,
    t: [f64; 3],
    cur: MomentVector,
    jac: &[[f64; 3]; 3],
) -> Result<Option<([f64; 3], DiscreteMap, MomentVector)>, MapError> {
    let k = (0..3)
        .max_by(|&a, &b| cur.components[a].abs().total_cmp(&cur.components[b].abs()))
        .expect("three components");
    let slope = jac[k][k];
    let dir = if slope == 0.0 { -cur.components[k].signum() } else { -(cur.components[k] / slope).signum() };
    let at = |s: f64| {
        let mut tt = t;
        tt[k] += dir * s;
        tt
    };
    let sign0 = cur.components[k].signum();
    let mut hi = 0.05;
    let mut bracket = None;
    while hi <= 8.0 {
        let (_, m) = res.eval(at(hi))?;
        if m.components[k].signum() != sign0 {
            bracket = Some(hi);
            break;
        }
        hi *= 2.0;
    }
    let Some(mut hi) = bracket else { return Ok(None) };
    let mut lo = 0.0;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let (_, m) = res.eval(at(mid))?;
        if m.components[k].signum() == sign0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let best = [lo, hi]
        .into_iter()
        .map(|s| res.eval(at(s)).map(|(h, m)| (at(s), h, m)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .min_by(|a, b| a.2.norm().total_cmp(&b.2.norm()))
        .expect("two candidates");
    if best.2.norm() < cur.norm() {
        Ok(Some(best))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapspace::{constant_map, identity_map, TargetManifold};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn dilated_identity(level: u32, factor: f64) -> DiscreteMap {
        let m = SphereMesh::shared(level).unwrap();
        pullback(&identity_map(&m), &MobiusElement::dilation(Complex64::new(factor, 0.0))).unwrap()
    }

    #[test]
    fn identity_is_centered() {
        let m = SphereMesh::shared(4).unwrap();
        let f = identity_map(&m);
        let mv = pseudo_moment(&f);
        // Only the faces straddling each equator bias the value.
        for (k, axis) in AXES.iter().enumerate() {
            assert!(mv.components[k].abs() <= straddling_area(&f, *axis), "{mv:?}");
        }
        assert!(mv.max_abs() < 0.02 * volume(&f) / 2.0, "{mv:?}");
    }

    #[test]
    fn pairing_ignores_rotation_angle() {
        let f = dilated_identity(3, 3.0);
        let a = pseudo_moment_pair(&f, &OrientedRotation::new(Vec3::new(0.3, 0.1, 1.0), 0.4).unwrap());
        let b = pseudo_moment_pair(&f, &OrientedRotation::new(Vec3::new(0.3, 0.1, 1.0), 2.9).unwrap());
        assert_eq!(a, b);
        // The blown-up boundary keeps its axis.
        let at_identity = OrientedRotation::new(Vec3::new(0.0, 1.0, 0.0), 0.0).unwrap();
        assert_eq!(at_identity.axis(), Vec3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn oriented_rotation_round_trip() {
        let r = OrientedRotation::new(Vec3::new(1.0, -2.0, 0.5), 1.2).unwrap();
        let back = OrientedRotation::from_unitary(r.to_mobius().matrix()).unwrap();
        let same = (back.axis() - r.axis()).norm() < 1e-12 && (back.angle() - r.angle()).abs() < 1e-12;
        let flipped = (back.axis() + r.axis()).norm() < 1e-12 && (back.angle() - (PI - r.angle())).abs() < 1e-12;
        assert!(same || flipped, "{r:?} vs {back:?}");
        assert_eq!(OrientedRotation::new(Vec3::new(0.0, 0.0, 0.0), 1.0), Err(MomentError::ZeroAxis));
    }

    #[test]
    fn constant_map_is_not_v_stable() {
        let m = SphereMesh::shared(3).unwrap();
        let f = constant_map(&m, TargetManifold::UnitSphere, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(pseudo_moment(&f).components, [0.0; 3]);
        assert!(matches!(center_map(&f, CenteringOptions::new(1e-3, 10)), Err(MomentError::NotVStable { .. })));
    }

    #[test]
    fn centered_map_needs_no_iterations() {
        let m = SphereMesh::shared(3).unwrap();
        let f = identity_map(&m);
        let out = center_map(&f, CenteringOptions::new(1e-3 * volume(&f), 20)).unwrap();
        assert!(out.iterations <= 1, "{}", out.iterations);
        assert!(out.g.a_factor() < 1.05, "{}", out.g.a_factor());
        assert_eq!(out.status, CenteringStatus::Converged);
    }

    #[test]
    fn hemisphere_split_is_bounded_by_straddling_area() {
        let f = dilated_identity(3, 2.5);
        for axis in [Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.4, -0.3, 0.8)] {
            let s = pseudo_moment_axis(&f, axis) + pseudo_moment_axis(&f, -axis);
            assert!((s - straddling_area(&f, axis)).abs() < 1e-12);
        }
    }

    #[test]
    fn dilation_toward_zero_has_positive_z_component() {
        let f = dilated_identity(4, 0.5);
        let mv = pseudo_moment(&f);
        assert!(mv.components[2] > 0.0);
        for k in 0..2 {
            assert!(mv.components[k].abs() <= straddling_area(&f, AXES[k]), "{mv:?}");
        }
    }

    // Lower hemisphere |z| <= 1 maps onto the chart disc of radius R, whose
    // spherical area is 4πR²/(1+R²).
    fn dilation_oracle(r: f64) -> f64 {
        2.0 * PI - 4.0 * PI * r * r / (1.0 + r * r)
    }

    #[test]
    fn dilation_matches_cap_area_oracle() {
        for r in [2.0, 4.0] {
            let f = dilated_identity(4, r);
            let got = pseudo_moment(&f).components[2];
            let want = dilation_oracle(r);
            assert!((got - want).abs() < 0.03 * want.abs(), "R={r}: {got} vs {want}");
        }
        assert!((dilation_oracle(2.0) + 6.0 * PI / 5.0).abs() < 1e-12);
    }

    #[test]
    fn centering_undoes_a_dilation() {
        let f = dilated_identity(4, 4.0);
        let tol = 1e-3 * volume(&f);
        let out = center_map(&f, CenteringOptions::new(tol, 30)).unwrap();
        assert_eq!(out.status, CenteringStatus::Converged);
        assert!(out.residual <= tol);
        assert!((out.g.a_factor() - 2.0).abs() < 0.1, "{}", out.g.a_factor());
    }

    #[test]
    fn bad_tolerance_rejected() {
        let f = dilated_identity(2, 1.0);
        assert_eq!(center_map(&f, CenteringOptions::new(0.0, 5)).unwrap_err(), MomentError::BadTolerance(0.0));
    }
}
