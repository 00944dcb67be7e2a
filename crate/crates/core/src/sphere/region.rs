use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{chart_coordinate, SphereError, Vec3};

/// Closed regions of the sphere used by the diameter and moment arguments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SphericalRegion {
    /// `{p : |chart(p) - center| <= radius}`; an infinite radius is the whole sphere.
    ChartDisc { center: [f64; 2], radius: f64 },
    /// Closure of the complement of a chart disc; always contains `∞`.
    ChartDiscComplement { center: [f64; 2], radius: f64 },
    /// `{p : <p, axis> <= level}`.
    Cap { axis: Vec3, level: f64 },
    Full,
}

impl SphericalRegion {
    pub fn chart_disc(center: Complex64, radius: f64) -> Self {
        SphericalRegion::ChartDisc { center: [center.re, center.im], radius }
    }

    pub fn chart_disc_complement(center: Complex64, radius: f64) -> Self {
        SphericalRegion::ChartDiscComplement { center: [center.re, center.im], radius }
    }

    pub fn cap(axis: Vec3, level: f64) -> Result<Self, SphereError> {
        let n = axis.norm();
        if !(n > 0.0) || !level.is_finite() {
            return Err(SphereError::BadRegion(format!("cap axis {axis:?} level {level}")));
        }
        Ok(SphericalRegion::Cap { axis: axis * (1.0 / n), level })
    }

    /// Closed geodesic ball (round metric) of `radius` about `center`.
    pub fn geodesic_ball(center: Vec3, radius: f64) -> Result<Self, SphereError> {
        Self::cap(-center, -radius.cos())
    }

    pub fn contains(&self, p: Vec3) -> bool {
        match *self {
            SphericalRegion::Full => true,
            SphericalRegion::Cap { axis, level } => p.dot(axis) <= level,
            SphericalRegion::ChartDisc { center, radius } => {
                if radius == f64::INFINITY {
                    return true;
                }
                match chart_coordinate(p) {
                    Some(z) => (z - Complex64::new(center[0], center[1])).norm() <= radius,
                    None => false,
                }
            }
            SphericalRegion::ChartDiscComplement { center, radius } => {
                if radius == f64::INFINITY {
                    return false;
                }
                match chart_coordinate(p) {
                    Some(z) => (z - Complex64::new(center[0], center[1])).norm() >= radius,
                    None => true,
                }
            }
        }
    }
}
