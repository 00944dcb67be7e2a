use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::locate::{LocateIndex, Location};
use super::region::SphericalRegion;
use super::{SphereError, Vec3};

/// Resource guard on the subdivision depth.
pub const MAX_LEVEL: u32 = 8;

/// Per-face quantities of the flat triangle spanned by the face's vertices.
#[derive(Debug, Clone, Copy)]
pub struct FaceGeometry {
    pub area: f64,
    /// Gradients of the three barycentric basis functions (in the face plane).
    pub grad: [Vec3; 3],
    /// Cotangent of the angle at each corner.
    pub cot: [f64; 3],
    /// Orthonormal basis of the face plane.
    pub frame: [Vec3; 2],
}

/// Subdivided icosahedron projected to the unit sphere, with lumped-mass
/// vertex weights (one third of the incident flat-face area).
#[derive(Debug)]
pub struct SphereMesh {
    level: u32,
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    vertex_weights: Vec<f64>,
    face_geometry: Vec<FaceGeometry>,
    vertex_faces: Vec<Vec<usize>>,
    /// Undirected edges `(i, j)` with `i < j` and their cotangent weight
    /// `(cot α + cot β) / 2`.
    edges: Vec<(usize, usize, f64)>,
    max_edge: f64,
    index: LocateIndex,
}

#[derive(Serialize, Deserialize)]
struct MeshFile {
    level: u32,
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
}

fn icosahedron() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let vertices = raw.iter().map(|v| Vec3::from(*v).normalized()).collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, faces)
}

fn subdivide(vertices: &mut Vec<Vec3>, faces: &[[usize; 3]]) -> Vec<[usize; 3]> {
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |i: usize, j: usize, vertices: &mut Vec<Vec3>| -> usize {
        let key = (i.min(j), i.max(j));
        *midpoints.entry(key).or_insert_with(|| {
            vertices.push(((vertices[i] + vertices[j]) * 0.5).normalized());
            vertices.len() - 1
        })
    };
    let mut out = Vec::with_capacity(faces.len() * 4);
    for &[a, b, c] in faces {
        let ab = midpoint(a, b, vertices);
        let bc = midpoint(b, c, vertices);
        let ca = midpoint(c, a, vertices);
        out.push([a, ab, ca]);
        out.push([b, bc, ab]);
        out.push([c, ca, bc]);
        out.push([ab, bc, ca]);
    }
    out
}

fn face_geometry(p: [Vec3; 3]) -> FaceGeometry {
    let e = [p[2] - p[1], p[0] - p[2], p[1] - p[0]];
    let n = e[2].cross(-e[1]);
    let twice_area = n.norm();
    let unit_n = n * (1.0 / twice_area);
    // grad λ_i = (n × e_i) / (2A), e_i the edge opposite vertex i.
    let grad = [0, 1, 2].map(|i| unit_n.cross(e[i]) * (1.0 / twice_area));
    let cot = [0, 1, 2].map(|i| {
        let u = p[(i + 1) % 3] - p[i];
        let v = p[(i + 2) % 3] - p[i];
        u.dot(v) / u.cross(v).norm()
    });
    let f0 = e[2].normalized();
    let f1 = unit_n.cross(f0);
    FaceGeometry { area: twice_area / 2.0, grad, cot, frame: [f0, f1] }
}

impl SphereMesh {
    /// Icosphere at the given subdivision level: `10 * 4^level + 2` vertices.
    pub fn build(level: u32) -> Result<SphereMesh, SphereError> {
        if level > MAX_LEVEL {
            return Err(SphereError::LevelTooLarge(level));
        }
        let (mut vertices, mut faces) = icosahedron();
        for _ in 0..level {
            faces = subdivide(&mut vertices, &faces);
        }
        Ok(Self::from_parts(level, vertices, faces))
    }

    /// Shared, lazily built mesh for a level.
    pub fn shared(level: u32) -> Result<Arc<SphereMesh>, SphereError> {
        static CACHE: OnceLock<Mutex<HashMap<u32, Arc<SphereMesh>>>> = OnceLock::new();
        if level > MAX_LEVEL {
            return Err(SphereError::LevelTooLarge(level));
        }
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(m) = cache.lock().expect("mesh cache poisoned").get(&level) {
            return Ok(Arc::clone(m));
        }
        let mesh = Arc::new(Self::build(level)?);
        let mut guard = cache.lock().expect("mesh cache poisoned");
        Ok(Arc::clone(guard.entry(level).or_insert(mesh)))
    }

    fn from_parts(level: u32, vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> SphereMesh {
        let face_geometry: Vec<FaceGeometry> = faces
            .iter()
            .map(|f| face_geometry([vertices[f[0]], vertices[f[1]], vertices[f[2]]]))
            .collect();
        let mut vertex_weights = vec![0.0; vertices.len()];
        let mut vertex_faces = vec![Vec::new(); vertices.len()];
        let mut edge_map: HashMap<(usize, usize), f64> = HashMap::new();
        let mut max_edge: f64 = 0.0;
        for (fi, f) in faces.iter().enumerate() {
            let g = &face_geometry[fi];
            for k in 0..3 {
                vertex_weights[f[k]] += g.area / 3.0;
                vertex_faces[f[k]].push(fi);
                let (i, j) = (f[(k + 1) % 3], f[(k + 2) % 3]);
                *edge_map.entry((i.min(j), i.max(j))).or_insert(0.0) += 0.5 * g.cot[k];
                max_edge = max_edge.max((vertices[i] - vertices[j]).norm());
            }
        }
        let mut edges: Vec<(usize, usize, f64)> = edge_map.into_iter().map(|((i, j), w)| (i, j, w)).collect();
        edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let index = LocateIndex::build(&vertices, &faces, level);
        SphereMesh { level, vertices, faces, vertex_weights, face_geometry, vertex_faces, edges, max_edge, index }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_weights(&self) -> &[f64] {
        &self.vertex_weights
    }

    pub fn face_geometry(&self) -> &[FaceGeometry] {
        &self.face_geometry
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Longest chordal edge length.
    pub fn max_edge_length(&self) -> f64 {
        self.max_edge
    }

    pub fn total_weight(&self) -> f64 {
        self.vertex_weights.iter().sum()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    /// Face containing `p` and the barycentric coordinates of `p` in it.
    pub fn locate(&self, p: Vec3) -> Result<Location, SphereError> {
        let n = p.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(SphereError::NotUnit(n));
        }
        self.index.locate(&self.vertices, &self.faces, p)
    }

    /// Sorted indices of the vertices inside a (closed) region.
    pub fn region_vertices(&self, region: &SphericalRegion) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&i| region.contains(self.vertices[i])).collect()
    }

    /// Sorted indices of the vertices outside a region.
    pub fn complement_vertices(&self, region: &SphericalRegion) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&i| !region.contains(self.vertices[i])).collect()
    }

    /// Membership mask of a region over the vertices.
    pub fn region_mask(&self, region: &SphericalRegion) -> Vec<bool> {
        self.vertices.iter().map(|&v| region.contains(v)).collect()
    }

    /// Quadrature weight of a region.
    pub fn region_weight(&self, region: &SphericalRegion) -> f64 {
        self.region_vertices(region).iter().map(|&i| self.vertex_weights[i]).sum()
    }

    pub fn exact_area() -> f64 {
        4.0 * PI
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(MeshFile {
            level: self.level,
            vertices: self.vertices.iter().map(|v| v.to_array()).collect(),
            faces: self.faces.clone(),
        })
        .expect("mesh serializes")
    }

    /// Rebuilds a mesh from JSON; only `level` is needed, stored geometry is
    /// checked against the rebuilt mesh when present.
    pub fn from_json(value: &serde_json::Value) -> Result<Arc<SphereMesh>, SphereError> {
        let level = value
            .get("level")
            .and_then(|l| l.as_u64())
            .ok_or_else(|| SphereError::BadRegion("mesh JSON lacks `level`".into()))? as u32;
        let mesh = Self::shared(level)?;
        if let Some(verts) = value.get("vertices").and_then(|v| v.as_array()) {
            if verts.len() != mesh.vertex_count() {
                return Err(SphereError::BadRegion(format!(
                    "mesh JSON has {} vertices, level {} has {}",
                    verts.len(),
                    level,
                    mesh.vertex_count()
                )));
            }
        }
        Ok(mesh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let m0 = SphereMesh::build(0).unwrap();
        assert_eq!(m0.vertex_count(), 12);
        assert_eq!(m0.face_count(), 20);
        for level in 0..=4 {
            let m = SphereMesh::build(level).unwrap();
            assert_eq!(m.vertex_count(), 10 * 4usize.pow(level) + 2);
            assert_eq!(m.euler_characteristic(), 2);
        }
        assert_eq!(SphereMesh::build(3).unwrap().vertex_count(), 642);
        assert_eq!(SphereMesh::build(9).unwrap_err(), SphereError::LevelTooLarge(9));
    }

    #[test]
    fn faces_are_outward_and_positive() {
        let m = SphereMesh::build(3).unwrap();
        for (f, g) in m.faces().iter().zip(m.face_geometry()) {
            assert!(g.area > 0.0);
            let [a, b, c] = f.map(|i| m.vertices()[i]);
            assert!(Vec3::triple(a, b, c) > 0.0);
        }
        for v in m.vertices() {
            assert!((v.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn barycentric_gradients_sum_to_zero() {
        let m = SphereMesh::build(2).unwrap();
        for g in m.face_geometry() {
            let s = g.grad[0] + g.grad[1] + g.grad[2];
            assert!(s.norm() < 1e-9);
        }
        for (f, g) in m.faces().iter().zip(m.face_geometry()) {
            let [a, b, c] = f.map(|i| m.vertices()[i]);
            assert!((g.grad[0].dot(a - b) - 1.0).abs() < 1e-9);
            assert!((g.grad[1].dot(b - c) - 1.0).abs() < 1e-9);
            assert!((g.grad[2].dot(c - a) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_level4() {
        let m = SphereMesh::build(4).unwrap();
        let rel = (m.total_weight() - 4.0 * PI).abs() / (4.0 * PI);
        assert!(rel < 2e-3, "{rel}");
    }

    #[test]
    fn quadrature_converges() {
        let errs: Vec<f64> = (2..=5)
            .map(|l| (SphereMesh::build(l).unwrap().total_weight() - 4.0 * PI).abs())
            .collect();
        for w in errs.windows(2) {
            assert!(w[0] / w[1] >= 3.0, "{errs:?}");
        }
    }

    #[test]
    fn json_stores_level() {
        let m = SphereMesh::build(1).unwrap();
        let j = m.to_json();
        let back = SphereMesh::from_json(&j).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        let only_level = serde_json::json!({"level": 2});
        assert_eq!(SphereMesh::from_json(&only_level).unwrap().vertex_count(), 162);
    }
}
