//! The discretized domain: unit vectors, the stereographic chart, the
//! icosphere mesh with lumped quadrature, regions and point location.

mod locate;
mod mesh;
mod region;
mod vec3;

pub use locate::{Location, LocateIndex};
pub use mesh::{FaceGeometry, SphereMesh, MAX_LEVEL};
pub use region::SphericalRegion;
pub use vec3::Vec3;

use num_complex::Complex64;
use thiserror::Error;

use crate::mobius::Homogeneous;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SphereError {
    #[error("subdivision level {0} exceeds the maximum {MAX_LEVEL}")]
    LevelTooLarge(u32),
    #[error("could not locate point {0:?} on the mesh")]
    LocateFailure([f64; 3]),
    #[error("point is not on the unit sphere (|p| = {0})")]
    NotUnit(f64),
    #[error("bad region: {0}")]
    BadRegion(String),
}

/// A point of the extended complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChartPoint {
    Finite(Complex64),
    Infinity,
}

/// Inverse stereographic projection from the north pole: `0` is the south
/// pole, `∞` the north pole, `|z| = 1` the equator.
pub fn stereo_to_sphere(z: ChartPoint) -> Vec3 {
    match z {
        ChartPoint::Infinity => Vec3::new(0.0, 0.0, 1.0),
        ChartPoint::Finite(z) => {
            let r2 = z.norm_sqr();
            if !r2.is_finite() {
                return Vec3::new(0.0, 0.0, 1.0);
            }
            let den = 1.0 + r2;
            Vec3::new(2.0 * z.re / den, 2.0 * z.im / den, (r2 - 1.0) / den)
        }
    }
}

/// Stereographic projection from the north pole.
pub fn sphere_to_stereo(p: Vec3) -> ChartPoint {
    let h = sphere_to_homogeneous(p);
    if h.w.re == 0.0 && h.w.im == 0.0 {
        ChartPoint::Infinity
    } else {
        ChartPoint::Finite(h.z / h.w)
    }
}

/// Homogeneous chart coordinates `[z : w]` of a sphere point, using whichever
/// of the two equivalent forms is better conditioned.
pub fn sphere_to_homogeneous(p: Vec3) -> Homogeneous {
    if p.z <= 0.0 {
        Homogeneous { z: Complex64::new(p.x, p.y), w: Complex64::new(1.0 - p.z, 0.0) }
    } else {
        Homogeneous { z: Complex64::new(1.0 + p.z, 0.0), w: Complex64::new(p.x, -p.y) }
    }
}

pub fn homogeneous_to_sphere(h: Homogeneous) -> Vec3 {
    // Rescale first so that huge or tiny homogeneous coordinates stay finite.
    let s = h.z.norm().max(h.w.norm());
    let (z, w) = (h.z / s, h.w / s);
    let zw = z * w.conj();
    let nz = z.norm_sqr();
    let nw = w.norm_sqr();
    let den = nz + nw;
    Vec3::new(2.0 * zw.re / den, 2.0 * zw.im / den, (nz - nw) / den).normalized()
}

/// Chart coordinate of a sphere point, `None` at the north pole.
pub fn chart_coordinate(p: Vec3) -> Option<Complex64> {
    match sphere_to_stereo(p) {
        ChartPoint::Finite(z) => Some(z),
        ChartPoint::Infinity => None,
    }
}

/// Great-circle distance between unit vectors.
pub fn geodesic_distance(p: Vec3, q: Vec3) -> f64 {
    p.cross(q).norm().atan2(p.dot(q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_conventions() {
        assert_eq!(stereo_to_sphere(ChartPoint::Finite(Complex64::new(0.0, 0.0))), Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(stereo_to_sphere(ChartPoint::Infinity), Vec3::new(0.0, 0.0, 1.0));
        let e = stereo_to_sphere(ChartPoint::Finite(Complex64::new(1.0, 0.0)));
        assert!((e - Vec3::new(1.0, 0.0, 0.0)).norm() <= 1e-15);
        match sphere_to_stereo(e) {
            ChartPoint::Finite(z) => assert!((z - Complex64::new(1.0, 0.0)).norm() <= 1e-15),
            ChartPoint::Infinity => panic!("equator is finite"),
        }
        assert_eq!(sphere_to_stereo(Vec3::new(0.0, 0.0, 1.0)), ChartPoint::Infinity);
    }

    #[test]
    fn stereo_round_trip() {
        for k in 0..200 {
            let t = k as f64 * 0.173;
            let z = Complex64::from_polar((t * 0.37).exp() * 0.01, t);
            let p = stereo_to_sphere(ChartPoint::Finite(z));
            assert!((p.norm() - 1.0).abs() < 1e-15);
            match sphere_to_stereo(p) {
                ChartPoint::Finite(w) => assert!((w - z).norm() <= 1e-12 * (1.0 + z.norm_sqr())),
                ChartPoint::Infinity => panic!(),
            }
        }
    }

    #[test]
    fn stereo_is_conformal() {
        let h = 1e-6;
        for k in 0..50 {
            let z = Complex64::from_polar(0.1 + 0.13 * k as f64, 0.7 * k as f64);
            let p = stereo_to_sphere(ChartPoint::Finite(z));
            let dx = (stereo_to_sphere(ChartPoint::Finite(z + h)) - p).norm();
            let dy = (stereo_to_sphere(ChartPoint::Finite(z + Complex64::new(0.0, h))) - p).norm();
            assert!((dx / dy - 1.0).abs() < 1e-3);
        }
    }
}
