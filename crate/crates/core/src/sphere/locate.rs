//! Point location on the icosphere through a cube-map bucket index.

use super::{SphereError, Vec3};

/// Containment slack for the orientation tests of a point against a face.
const INSIDE_TOL: f64 = 1e-13;

/// A located point: face index and barycentric coordinates of the central
/// projection of the point onto the flat face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub face: usize,
    pub bary: [f64; 3],
}

/// Buckets faces by the cube-map cells their spherical triangles overlap.
#[derive(Debug)]
pub struct LocateIndex {
    res: usize,
    cells: Vec<Vec<u32>>,
}

fn cube_cell(p: Vec3, res: usize) -> usize {
    let (ax, ay, az) = (p.x.abs(), p.y.abs(), p.z.abs());
    let (face, u, v, m) = if ax >= ay && ax >= az {
        (if p.x > 0.0 { 0 } else { 1 }, p.y, p.z, ax)
    } else if ay >= az {
        (if p.y > 0.0 { 2 } else { 3 }, p.x, p.z, ay)
    } else {
        (if p.z > 0.0 { 4 } else { 5 }, p.x, p.y, az)
    };
    let to_idx = |t: f64| -> usize {
        let s = ((t / m + 1.0) * 0.5 * res as f64).floor();
        (s.max(0.0) as usize).min(res - 1)
    };
    (face * res + to_idx(u)) * res + to_idx(v)
}

/// Signed orientation margins of `p` against the three edges of a face.
fn edge_margins(a: Vec3, b: Vec3, c: Vec3, p: Vec3) -> [f64; 3] {
    [Vec3::triple(a, b, p), Vec3::triple(b, c, p), Vec3::triple(c, a, p)]
}

fn barycentric(a: Vec3, b: Vec3, c: Vec3, p: Vec3) -> [f64; 3] {
    // Weights of the ray through p hitting the plane of (a, b, c).
    let w = [Vec3::triple(p, b, c), Vec3::triple(a, p, c), Vec3::triple(a, b, p)];
    let w = w.map(|x| x.max(0.0));
    let s = w[0] + w[1] + w[2];
    [w[0] / s, w[1] / s, w[2] / s]
}

impl LocateIndex {
    pub fn build(vertices: &[Vec3], faces: &[[usize; 3]], level: u32) -> LocateIndex {
        let res = 1usize << level.min(7);
        let mut cells: Vec<Vec<u32>> = vec![Vec::new(); 6 * res * res];
        // Sample each triangle densely enough that every interior point is
        // within one sample spacing of a sample, then mark neighbouring cells.
        let steps = 6;
        let mut touched: Vec<usize> = Vec::new();
        for (fi, f) in faces.iter().enumerate() {
            let [a, b, c] = f.map(|i| vertices[i]);
            touched.clear();
            for i in 0..=steps {
                for j in 0..=(steps - i) {
                    let k = steps - i - j;
                    let p = (a * i as f64 + b * j as f64 + c * k as f64).normalized();
                    touched.push(cube_cell(p, res));
                    for q in neighbours(p, res) {
                        touched.push(q);
                    }
                }
            }
            touched.sort_unstable();
            touched.dedup();
            for &cell in &touched {
                cells[cell].push(fi as u32);
            }
        }
        LocateIndex { res, cells }
    }

    pub fn locate(&self, vertices: &[Vec3], faces: &[[usize; 3]], p: Vec3) -> Result<Location, SphereError> {
        let p = p.normalized();
        let cell = cube_cell(p, self.res);
        if let Some(loc) = best_face(self.cells[cell].iter().map(|&f| f as usize), vertices, faces, p) {
            return Ok(loc);
        }
        best_face(0..faces.len(), vertices, faces, p).ok_or(SphereError::LocateFailure(p.to_array()))
    }
}

fn neighbours(p: Vec3, res: usize) -> impl Iterator<Item = usize> {
    // Perturb p by about half a cell in each tangent direction.
    let h = 0.75 / res as f64;
    let t1 = if p.x.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
    let u = p.cross(t1).normalized();
    let v = p.cross(u);
    let mut out = Vec::with_capacity(8);
    for du in [-1.0, 0.0, 1.0] {
        for dv in [-1.0, 0.0, 1.0] {
            if du == 0.0 && dv == 0.0 {
                continue;
            }
            out.push(cube_cell((p + u * (du * h) + v * (dv * h)).normalized(), res));
        }
    }
    out.into_iter()
}

/// First face (in the given order) that contains `p`; when rounding leaves no
/// face strictly containing it, the face with the largest minimum margin.
fn best_face(
    candidates: impl Iterator<Item = usize>,
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    p: Vec3,
) -> Option<Location> {
    let mut best: Option<(f64, usize)> = None;
    for fi in candidates {
        let [a, b, c] = faces[fi].map(|i| vertices[i]);
        if a.dot(p) <= 0.0 {
            continue;
        }
        let m = edge_margins(a, b, c, p);
        let worst = m[0].min(m[1]).min(m[2]);
        if worst >= 0.0 {
            return Some(Location { face: fi, bary: barycentric(a, b, c, p) });
        }
        if best.map_or(true, |(w, _)| worst > w) {
            best = Some((worst, fi));
        }
    }
    match best {
        Some((worst, fi)) if worst >= -INSIDE_TOL => {
            let [a, b, c] = faces[fi].map(|i| vertices[i]);
            Some(Location { face: fi, bary: barycentric(a, b, c, p) })
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::super::SphereMesh;
    use super::*;

    #[test]
    fn vertex_has_unit_weight() {
        let m = SphereMesh::build(3).unwrap();
        for (i, &v) in m.vertices().iter().enumerate().step_by(7) {
            let loc = m.locate(v).unwrap();
            let f = m.faces()[loc.face];
            let k = f.iter().position(|&x| x == i).expect("vertex belongs to located face");
            assert!((loc.bary[k] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_midpoint_splits_evenly() {
        let m = SphereMesh::build(2).unwrap();
        let [a, b, _] = m.faces()[5];
        let p = ((m.vertices()[a] + m.vertices()[b]) * 0.5).normalized();
        let loc = m.locate(p).unwrap();
        let mut w = loc.bary;
        w.sort_by(|x, y| y.partial_cmp(x).unwrap());
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12 && w[2].abs() < 1e-12);
    }

    #[test]
    fn non_unit_point_rejected() {
        let m = SphereMesh::build(1).unwrap();
        assert!(matches!(m.locate(Vec3::new(2.0, 0.0, 0.0)), Err(SphereError::NotUnit(_))));
    }
}
