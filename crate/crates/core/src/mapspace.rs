//! Discrete maps from the sphere into a target embedded in `R^m`, the
//! reparametrization action `f ↦ f∘g` by resampling, and stock generators.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mobius::MobiusElement;
use crate::sphere::{geodesic_distance, sphere_to_homogeneous, homogeneous_to_sphere, SphereError, SphereMesh, Vec3};

/// Distance from the target tolerated for stored map values.
pub const TARGET_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("maps live on different meshes (levels {0} and {1})")]
    MeshMismatch(u32, u32),
    #[error("maps have different targets ({0} and {1})")]
    TargetMismatch(TargetManifold, TargetManifold),
    #[error("bad profile: {0}")]
    BadProfile(String),
    #[error("bump amplitude {0} is too large for the target")]
    BadAmplitude(f64),
    #[error("point {0:?} has no nearest point on {1}")]
    ProjectionUndefined(Vec<f64>, TargetManifold),
    #[error("value {0:?} is not on {1}")]
    NotOnTarget(Vec<f64>, TargetManifold),
    #[error("expected {expected} values, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("degree must be at least 1")]
    BadDegree,
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error("bad map file: {0}")]
    BadFile(String),
}

/// The target manifold `M` with its Euclidean embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetManifold {
    /// Unit sphere in `R^3`.
    UnitSphere,
    /// Product of two unit circles in `R^4`.
    FlatTorus,
    /// All of `R^m`.
    Ambient(usize),
}

impl TargetManifold {
    pub fn dim(&self) -> usize {
        match self {
            TargetManifold::UnitSphere => 3,
            TargetManifold::FlatTorus => 4,
            TargetManifold::Ambient(m) => *m,
        }
    }

    /// Nearest-point projection onto the target.
    pub fn project(&self, x: &[f64], out: &mut [f64]) -> Result<(), MapError> {
        match self {
            TargetManifold::Ambient(_) => out.copy_from_slice(x),
            TargetManifold::UnitSphere => {
                let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                if !(n > 1e-12) {
                    return Err(MapError::ProjectionUndefined(x.to_vec(), *self));
                }
                for k in 0..3 {
                    out[k] = x[k] / n;
                }
            }
            TargetManifold::FlatTorus => {
                for pair in 0..2 {
                    let (u, v) = (x[2 * pair], x[2 * pair + 1]);
                    let n = u.hypot(v);
                    if !(n > 1e-12) {
                        return Err(MapError::ProjectionUndefined(x.to_vec(), *self));
                    }
                    out[2 * pair] = u / n;
                    out[2 * pair + 1] = v / n;
                }
            }
        }
        Ok(())
    }

    /// Distance from `x` to the target.
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        match self {
            TargetManifold::Ambient(_) => 0.0,
            TargetManifold::UnitSphere => ((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() - 1.0).abs(),
            TargetManifold::FlatTorus => {
                let a = x[0].hypot(x[1]) - 1.0;
                let b = x[2].hypot(x[3]) - 1.0;
                a.hypot(b)
            }
        }
    }

    /// Largest bump amplitude for which projection stays well defined.
    fn max_amplitude(&self) -> f64 {
        match self {
            TargetManifold::Ambient(_) => f64::INFINITY,
            _ => 0.5,
        }
    }
}

impl fmt::Display for TargetManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetManifold::UnitSphere => f.write_str("unit_sphere_in_R3"),
            TargetManifold::FlatTorus => f.write_str("flat_torus_in_R4"),
            TargetManifold::Ambient(m) => write!(f, "ambient_R{m}"),
        }
    }
}

impl std::str::FromStr for TargetManifold {
    type Err = MapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit_sphere_in_R3" => Ok(TargetManifold::UnitSphere),
            "flat_torus_in_R4" => Ok(TargetManifold::FlatTorus),
            other => other
                .strip_prefix("ambient_R")
                .and_then(|m| m.parse::<usize>().ok())
                .filter(|&m| m > 0)
                .map(TargetManifold::Ambient)
                .ok_or_else(|| MapError::BadFile(format!("unknown target `{other}`"))),
        }
    }
}

impl Serialize for TargetManifold {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TargetManifold {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A per-vertex field in `R^m` (e.g. the difference of two maps).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(dim: usize, n: usize) -> Self {
        Field { dim, data: vec![0.0; dim * n] }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Pointwise Euclidean magnitudes.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.chunks(self.dim).map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect()
    }
}

/// A map from the icosphere into a target, sampled at the vertices.
#[derive(Debug, Clone)]
pub struct DiscreteMap {
    mesh: Arc<SphereMesh>,
    target: TargetManifold,
    values: Field,
}

impl PartialEq for DiscreteMap {
    fn eq(&self, other: &Self) -> bool {
        self.mesh.level() == other.mesh.level() && self.target == other.target && self.values == other.values
    }
}

#[derive(Serialize, Deserialize)]
struct MapFile {
    mesh_level: u32,
    target: TargetManifold,
    values: Vec<Vec<f64>>,
}

fn same_value(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

impl DiscreteMap {
    /// Builds a map from raw ambient values, projecting each onto the target.
    pub fn from_ambient(mesh: Arc<SphereMesh>, target: TargetManifold, data: Vec<f64>) -> Result<Self, MapError> {
        let dim = target.dim();
        let expected = mesh.vertex_count() * dim;
        if data.len() != expected {
            return Err(MapError::WrongLength { expected, got: data.len() });
        }
        let mut out = vec![0.0; data.len()];
        for (x, o) in data.chunks(dim).zip(out.chunks_mut(dim)) {
            target.project(x, o)?;
        }
        Ok(DiscreteMap { mesh, target, values: Field { dim, data: out } })
    }

    /// Builds a map from values that must already lie on the target.
    pub fn from_values(mesh: Arc<SphereMesh>, target: TargetManifold, data: Vec<f64>) -> Result<Self, MapError> {
        let dim = target.dim();
        let expected = mesh.vertex_count() * dim;
        if data.len() != expected {
            return Err(MapError::WrongLength { expected, got: data.len() });
        }
        if let Some(bad) = data.chunks(dim).find(|x| !(target.distance_to(x) <= TARGET_TOL)) {
            return Err(MapError::NotOnTarget(bad.to_vec(), target));
        }
        Ok(DiscreteMap { mesh, target, values: Field { dim, data } })
    }

    pub fn mesh(&self) -> &Arc<SphereMesh> {
        &self.mesh
    }

    pub fn target(&self) -> TargetManifold {
        self.target
    }

    pub fn dim(&self) -> usize {
        self.values.dim
    }

    pub fn values(&self) -> &Field {
        &self.values
    }

    pub fn value(&self, i: usize) -> &[f64] {
        self.values.at(i)
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    pub fn check_compatible(&self, other: &DiscreteMap) -> Result<(), MapError> {
        if self.mesh.level() != other.mesh.level() {
            return Err(MapError::MeshMismatch(self.mesh.level(), other.mesh.level()));
        }
        if self.target != other.target {
            return Err(MapError::TargetMismatch(self.target, other.target));
        }
        Ok(())
    }

    /// P1 interpolation at a sphere point, projected to the target. When the
    /// three corner values coincide the shared value is returned unchanged.
    pub fn evaluate(&self, p: Vec3, out: &mut [f64]) -> Result<(), MapError> {
        let loc = self.mesh.locate(p)?;
        let f = self.mesh.faces()[loc.face];
        let (a, b, c) = (self.value(f[0]), self.value(f[1]), self.value(f[2]));
        if same_value(a, b) && same_value(a, c) {
            out.copy_from_slice(a);
            return Ok(());
        }
        let raw: Vec<f64> = (0..self.dim())
            .map(|k| loc.bary[0] * a[k] + loc.bary[1] * b[k] + loc.bary[2] * c[k])
            .collect();
        self.target.project(&raw, out)
    }

    /// Largest difference quotient over mesh edges.
    pub fn lipschitz_bound(&self) -> f64 {
        let verts = self.mesh.vertices();
        self.mesh
            .edges()
            .iter()
            .map(|&(i, j, _)| ambient_dist(self.value(i), self.value(j)) / (verts[i] - verts[j]).norm())
            .fold(0.0, f64::max)
    }

    /// A priori interpolation error bound: mesh size times Lipschitz bound.
    pub fn lipschitz_resampling_bound(&self) -> f64 {
        self.mesh.max_edge_length() * self.lipschitz_bound()
    }

    /// Largest distance of a stored value from the target.
    pub fn max_target_deviation(&self) -> f64 {
        self.values.data.chunks(self.dim()).map(|x| self.target.distance_to(x)).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(MapFile {
            mesh_level: self.mesh.level(),
            target: self.target,
            values: self.values.data.chunks(self.dim()).map(|c| c.to_vec()).collect(),
        })
        .expect("map serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, MapError> {
        let file: MapFile = serde_json::from_value(value.clone()).map_err(|e| MapError::BadFile(e.to_string()))?;
        let mesh = SphereMesh::shared(file.mesh_level)?;
        let dim = file.target.dim();
        if let Some(bad) = file.values.iter().find(|v| v.len() != dim) {
            return Err(MapError::BadFile(format!("value of length {} for target {}", bad.len(), file.target)));
        }
        let data = file.values.into_iter().flatten().collect();
        Self::from_values(mesh, file.target, data)
    }
}

pub(crate) fn ambient_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The reparametrized map `f∘g`: each vertex takes the interpolated value of
/// `f` at the image of the vertex under `g`.
pub fn pullback(f: &DiscreteMap, g: &MobiusElement) -> Result<DiscreteMap, MapError> {
    if g.is_identity() {
        return Ok(f.clone());
    }
    let dim = f.dim();
    let verts = f.mesh.vertices();
    let rows: Vec<Result<Vec<f64>, MapError>> = verts
        .par_iter()
        .map(|&v| {
            let mut out = vec![0.0; dim];
            f.evaluate(g.apply(v), &mut out)?;
            Ok(out)
        })
        .collect();
    let mut data = Vec::with_capacity(verts.len() * dim);
    for r in rows {
        data.extend_from_slice(&r?);
    }
    Ok(DiscreteMap { mesh: Arc::clone(&f.mesh), target: f.target, values: Field { dim, data } })
}

/// Ambient displacement field `f - h`.
pub fn map_difference(f: &DiscreteMap, h: &DiscreteMap) -> Result<Field, MapError> {
    f.check_compatible(h)?;
    let data = f.values.data.iter().zip(&h.values.data).map(|(a, b)| a - b).collect();
    Ok(Field { dim: f.dim(), data })
}

pub fn identity_map(mesh: &Arc<SphereMesh>) -> DiscreteMap {
    let data = mesh.vertices().iter().flat_map(|v| v.to_array()).collect();
    DiscreteMap { mesh: Arc::clone(mesh), target: TargetManifold::UnitSphere, values: Field { dim: 3, data } }
}

pub fn antipodal_map(mesh: &Arc<SphereMesh>) -> DiscreteMap {
    let data = mesh.vertices().iter().flat_map(|v| (-*v).to_array()).collect();
    DiscreteMap { mesh: Arc::clone(mesh), target: TargetManifold::UnitSphere, values: Field { dim: 3, data } }
}

pub fn constant_map(mesh: &Arc<SphereMesh>, target: TargetManifold, q: &[f64]) -> Result<DiscreteMap, MapError> {
    if q.len() != target.dim() {
        return Err(MapError::WrongLength { expected: target.dim(), got: q.len() });
    }
    if !(target.distance_to(q) <= TARGET_TOL) {
        return Err(MapError::NotOnTarget(q.to_vec(), target));
    }
    let data = q.iter().copied().cycle().take(q.len() * mesh.vertex_count()).collect();
    Ok(DiscreteMap { mesh: Arc::clone(mesh), target, values: Field { dim: q.len(), data } })
}

/// Degree-`d` map `z ↦ z^d` of the chart, computed in homogeneous coordinates
/// so that the poles map to themselves.
pub fn power_map(mesh: &Arc<SphereMesh>, d: u32) -> Result<DiscreteMap, MapError> {
    if d == 0 {
        return Err(MapError::BadDegree);
    }
    if d == 1 {
        return Ok(identity_map(mesh));
    }
    let data = mesh
        .vertices()
        .iter()
        .flat_map(|&v| {
            let mut h = sphere_to_homogeneous(v);
            h.z = h.z.powu(d);
            h.w = h.w.powu(d);
            homogeneous_to_sphere(h).to_array()
        })
        .collect();
    Ok(DiscreteMap { mesh: Arc::clone(mesh), target: TargetManifold::UnitSphere, values: Field { dim: 3, data } })
}

/// Map constant on the circles `<p, axis> = t`: the value at height `t` is the
/// piecewise-linear interpolation of `profile`, sampled uniformly on `[-1, 1]`.
pub fn axis_map(
    mesh: &Arc<SphereMesh>,
    target: TargetManifold,
    axis: Vec3,
    profile: &[Vec<f64>],
) -> Result<DiscreteMap, MapError> {
    if profile.len() < 2 {
        return Err(MapError::BadProfile(format!("need at least 2 samples, got {}", profile.len())));
    }
    let dim = target.dim();
    if let Some(p) = profile.iter().find(|p| p.len() != dim || p.iter().any(|x| !x.is_finite())) {
        return Err(MapError::BadProfile(format!("sample {p:?} is not a finite point of R^{dim}")));
    }
    let axis_n = axis.norm();
    if !(axis_n > 0.0) {
        return Err(MapError::BadProfile("axis is zero".into()));
    }
    let axis = axis * (1.0 / axis_n);
    let segments = profile.len() - 1;
    let mut data = Vec::with_capacity(mesh.vertex_count() * dim);
    let mut out = vec![0.0; dim];
    for &v in mesh.vertices() {
        let t = v.dot(axis).clamp(-1.0, 1.0);
        let s = (t + 1.0) / 2.0 * segments as f64;
        let k = (s.floor() as usize).min(segments - 1);
        let frac = s - k as f64;
        let raw: Vec<f64> = (0..dim).map(|j| (1.0 - frac) * profile[k][j] + frac * profile[k + 1][j]).collect();
        target
            .project(&raw, &mut out)
            .map_err(|_| MapError::BadProfile(format!("profile passes through {raw:?}, off the target's domain")))?;
        data.extend_from_slice(&out);
    }
    Ok(DiscreteMap { mesh: Arc::clone(mesh), target, values: Field { dim, data } })
}

/// Adds a smooth bump `amplitude · (1 - s^2)^2 · u` (with `s` the geodesic
/// distance to `center` over `radius` and `u` a seeded random unit vector)
/// and projects back to the target.
pub fn bump_perturb(f: &DiscreteMap, center: Vec3, radius: f64, amplitude: f64, seed: u64) -> Result<DiscreteMap, MapError> {
    if !(amplitude.abs() < f.target.max_amplitude()) {
        return Err(MapError::BadAmplitude(amplitude));
    }
    if !(radius > 0.0) {
        return Err(MapError::BadProfile(format!("bump radius {radius} must be positive")));
    }
    let center = center.normalized();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = f.dim();
    let mut dir: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    dir.iter_mut().for_each(|x| *x /= n);
    let mut data = f.values.data.clone();
    let mut out = vec![0.0; dim];
    for (i, &v) in f.mesh.vertices().iter().enumerate() {
        let s = geodesic_distance(v, center) / radius;
        if s >= 1.0 {
            continue;
        }
        let w = amplitude * (1.0 - s * s).powi(2);
        let row = &mut data[i * dim..(i + 1) * dim];
        for k in 0..dim {
            row[k] += w * dir[k];
        }
        f.target.project(row, &mut out)?;
        row.copy_from_slice(&out);
    }
    Ok(DiscreteMap { mesh: Arc::clone(&f.mesh), target: f.target, values: Field { dim, data } })
}
