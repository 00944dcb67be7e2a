//! The Möbius group PSL(2,C), its marked-point subgroups, the KAK
//! decomposition and the fractional-linear action on the unit sphere.
//!
//! Elements are stored as a determinant-one representative with a fixed sign
//! rule, so two elements compare equal exactly when their stored matrices do.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sphere::Vec3;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Tolerance on the defining (vanishing) entries in subgroup membership tests.
pub const FAMILY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MobiusError {
    #[error("matrix is singular (|det| = {0:e})")]
    Singular(f64),
    #[error("determinant {0:e} is not 1 within 1e-12")]
    NotUnimodular(f64),
    #[error("element is not in subgroup {0}")]
    FamilyMismatch(GroupFamily),
    #[error("mode {mode:?} is not valid for family {family}")]
    InvalidMode { family: GroupFamily, mode: EscapeMode },
    #[error("exhaustion index must be positive")]
    ZeroIndex,
    #[error("bound must be >= 1, got {0}")]
    BadBound(f64),
}

/// A 2x2 complex matrix, row-major `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { a: ONE, b: ZERO, c: ZERO, d: ONE };

    pub const fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Self { a, b, c, d }
    }

    pub fn diag(a: Complex64, d: Complex64) -> Self {
        Self::new(a, ZERO, ZERO, d)
    }

    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn adjoint(&self) -> Self {
        Self::new(self.a.conj(), self.c.conj(), self.b.conj(), self.d.conj())
    }

    pub fn entries(&self) -> [Complex64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    /// Frobenius norm of `self - other`.
    pub fn dist(&self, other: &Mat2) -> f64 {
        self.entries()
            .iter()
            .zip(other.entries().iter())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Frobenius distance to the nearest of `±other`.
    pub fn projective_dist(&self, other: &Mat2) -> f64 {
        self.dist(other).min(self.dist(&other.scale(-ONE)))
    }

    /// Max entrywise deviation of `self^H self` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.adjoint() * *self;
        (p.a - ONE)
            .norm()
            .max(p.b.norm())
            .max(p.c.norm())
            .max((p.d - ONE).norm())
    }

    /// Matrix exponential of a traceless matrix, using `X^2 = -det(X) I`.
    pub fn exp_traceless(&self) -> Mat2 {
        let s = (-self.det()).sqrt();
        let (cosh, sinhc) = if s.norm() < 1e-4 {
            let s2 = s * s;
            (
                ONE + s2 / 2.0 + s2 * s2 / 24.0,
                ONE + s2 / 6.0 + s2 * s2 / 120.0,
            )
        } else {
            (s.cosh(), s.sinh() / s)
        };
        Mat2::new(
            cosh + sinhc * self.a,
            sinhc * self.b,
            sinhc * self.c,
            cosh + sinhc * self.d,
        )
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, r: Mat2) -> Mat2 {
        Mat2::new(
            self.a * r.a + self.b * r.c,
            self.a * r.b + self.b * r.d,
            self.c * r.a + self.d * r.c,
            self.c * r.b + self.d * r.d,
        )
    }
}

/// Subgroups of the Möbius group used by the properness arguments.
///
/// `G1` fixes the chart point ∞ (affine maps `z ↦ a(z - c)`), `G2` fixes both
/// `0` and `∞` (chart dilation-rotations `z ↦ a z`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupFamily {
    G0,
    G1,
    G2,
}

impl fmt::Display for GroupFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GroupFamily::G0 => "G0",
            GroupFamily::G1 => "G1",
            GroupFamily::G2 => "G2",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for GroupFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "G0" | "g0" => Ok(GroupFamily::G0),
            "G1" | "g1" => Ok(GroupFamily::G1),
            "G2" | "g2" => Ok(GroupFamily::G2),
            other => Err(format!("unknown group family `{other}` (expected G0, G1 or G2)")),
        }
    }
}

/// Ways of leaving every compact set of a subgroup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeMode {
    DilateToZero,
    DilateToInf,
    TranslateToInf,
}

impl std::str::FromStr for EscapeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dilate_to_zero" => Ok(EscapeMode::DilateToZero),
            "dilate_to_inf" => Ok(EscapeMode::DilateToInf),
            "translate_to_inf" => Ok(EscapeMode::TranslateToInf),
            other => Err(format!(
                "unknown escape mode `{other}` (expected dilate_to_zero, dilate_to_inf or translate_to_inf)"
            )),
        }
    }
}

/// Index of the compact set `K_n` of an exhaustion of `family`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompactExhaustionIndex {
    pub n: u32,
    pub family: GroupFamily,
}

impl CompactExhaustionIndex {
    pub fn new(n: u32, family: GroupFamily) -> Result<Self, MobiusError> {
        if n == 0 {
            return Err(MobiusError::ZeroIndex);
        }
        Ok(Self { n, family })
    }
}

/// `g = u1 · diag(a, 1/a) · u2` with `u1, u2 ∈ SU(2)` and `a >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KAKFactors {
    pub u1: Mat2,
    pub a: f64,
    pub u2: Mat2,
}

impl KAKFactors {
    pub fn reconstruct(&self) -> Mat2 {
        self.u1 * Mat2::diag(Complex64::new(self.a, 0.0), Complex64::new(1.0 / self.a, 0.0)) * self.u2
    }

    /// Dilation factor of the middle factor on the stereographic chart.
    pub fn chart_factor(&self) -> f64 {
        self.a * self.a
    }
}

/// A point of the Riemann sphere in homogeneous coordinates `[z : w]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homogeneous {
    pub z: Complex64,
    pub w: Complex64,
}

/// An element of PSL(2,C) stored as its canonical SL(2,C) representative.
#[derive(Clone, Copy, PartialEq)]
pub struct MobiusElement {
    m: Mat2,
}

impl fmt::Debug for MobiusElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.m;
        write!(f, "Mobius[[{}, {}], [{}, {}]]", m.a, m.b, m.c, m.d)
    }
}

fn is_nonzero(z: Complex64) -> bool {
    z.re != 0.0 || z.im != 0.0
}

/// Sign rule for `±M`: the first nonzero entry in row-major order gets an
/// argument in `[0, π)`.
fn canonicalize(m: Mat2) -> Mat2 {
    let lead = m.entries().into_iter().find(|z| is_nonzero(*z));
    match lead {
        Some(z) => {
            let arg = z.im.atan2(z.re);
            if (0.0..PI).contains(&arg) {
                m
            } else {
                m.scale(-ONE)
            }
        }
        None => m,
    }
}

impl MobiusElement {
    pub fn identity() -> Self {
        Self { m: Mat2::IDENTITY }
    }

    /// Normalizes an invertible matrix to determinant one and canonicalizes the sign.
    pub fn from_matrix(m: Mat2) -> Result<Self, MobiusError> {
        let det = m.det();
        if !(det.norm() > 1e-300) || !det.is_finite() {
            return Err(MobiusError::Singular(det.norm()));
        }
        let s = det.sqrt();
        Ok(Self { m: canonicalize(m.scale(s.inv())) })
    }

    /// Accepts an already unimodular matrix without rescaling it.
    pub fn from_unimodular(m: Mat2) -> Result<Self, MobiusError> {
        let det = m.det();
        if (det - ONE).norm() > 1e-12 {
            return Err(MobiusError::NotUnimodular(det.norm()));
        }
        Ok(Self { m: canonicalize(m) })
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.m
    }

    pub fn is_identity(&self) -> bool {
        self.m == Mat2::IDENTITY
    }

    /// Chart dilation-rotation `z ↦ factor · z` (an element of G2).
    pub fn dilation(factor: Complex64) -> Self {
        let s = factor.sqrt();
        Self::from_matrix(Mat2::diag(s, s.inv())).expect("nonzero dilation factor")
    }

    /// Chart translation `z ↦ z + b`.
    pub fn translation(b: Complex64) -> Self {
        Self { m: canonicalize(Mat2::new(ONE, b, ZERO, ONE)) }
    }

    /// Affine chart map `z ↦ a (z - c)` (an element of G1).
    pub fn affine(a: Complex64, c: Complex64) -> Self {
        let s = a.sqrt();
        Self::from_matrix(Mat2::new(s, -s * c, ZERO, s.inv())).expect("nonzero affine factor")
    }

    /// Rigid rotation of the unit sphere by `angle` (right-handed) about `axis`.
    pub fn rotation(axis: Vec3, angle: f64) -> Self {
        let n = axis.normalized();
        let (s, c) = (angle / 2.0).sin_cos();
        // cos(θ/2) I + i sin(θ/2) (nx σx - ny σy + nz σz); the σy sign follows
        // from projecting from the north pole.
        let i = Complex64::i();
        let m = Mat2::new(
            Complex64::new(c, 0.0) + i * (s * n.z),
            i * Complex64::new(s * n.x, s * n.y),
            i * Complex64::new(s * n.x, -s * n.y),
            Complex64::new(c, 0.0) - i * (s * n.z),
        );
        Self::from_matrix(m).expect("rotation is unimodular")
    }

    /// Pure non-compact element `exp(H)` for the traceless Hermitian
    /// `H = [[t3, t1 - i t2], [t1 + i t2, -t3]]`.
    pub fn hermitian_exp(t: [f64; 3]) -> Self {
        let h = Mat2::new(
            Complex64::new(t[2], 0.0),
            Complex64::new(t[0], -t[1]),
            Complex64::new(t[0], t[1]),
            Complex64::new(-t[2], 0.0),
        );
        Self::from_matrix(h.exp_traceless()).expect("exp is unimodular")
    }

    /// `exp(X)` for `X = Σ θ_j E_j` over the real basis
    /// `(σx, σy, σz, iσx, iσy, iσz)` of sl(2,C).
    pub fn lie_exp(theta: [f64; 6]) -> Self {
        let i = Complex64::i();
        let x = Mat2::new(
            Complex64::new(theta[2], theta[5]),
            Complex64::new(theta[0], -theta[1]) + i * Complex64::new(theta[3], -theta[4]),
            Complex64::new(theta[0], theta[1]) + i * Complex64::new(theta[3], theta[4]),
            Complex64::new(-theta[2], -theta[5]),
        );
        Self::from_matrix(x.exp_traceless()).expect("exp is unimodular")
    }

    pub fn compose(&self, other: &MobiusElement) -> MobiusElement {
        Self::from_matrix(self.m * other.m).expect("product of unimodular matrices")
    }

    pub fn inverse(&self) -> MobiusElement {
        let m = &self.m;
        Self { m: canonicalize(Mat2::new(m.d, -m.b, -m.c, m.a)) }
    }

    /// Distance in PSL(2,C): Frobenius distance between representatives up to sign.
    pub fn distance(&self, other: &MobiusElement) -> f64 {
        self.m.projective_dist(&other.m)
    }

    pub fn apply_homogeneous(&self, p: Homogeneous) -> Homogeneous {
        let m = &self.m;
        Homogeneous { z: m.a * p.z + m.b * p.w, w: m.c * p.z + m.d * p.w }
    }

    /// Fractional-linear action on the unit sphere, computed in homogeneous
    /// coordinates so that the pole needs no special case.
    pub fn apply(&self, p: Vec3) -> Vec3 {
        if self.is_identity() {
            return p;
        }
        crate::sphere::homogeneous_to_sphere(self.apply_homogeneous(crate::sphere::sphere_to_homogeneous(p)))
    }

    pub fn kak(&self) -> KAKFactors {
        kak_decompose(self)
    }

    /// Larger singular value of the representative.
    pub fn a_factor(&self) -> f64 {
        kak_decompose(self).a
    }

    pub fn family_contains(&self, family: GroupFamily) -> bool {
        let m = &self.m;
        match family {
            GroupFamily::G0 => true,
            GroupFamily::G1 => m.c.norm() <= FAMILY_TOL,
            GroupFamily::G2 => m.c.norm() <= FAMILY_TOL && m.b.norm() <= FAMILY_TOL,
        }
    }

    /// Chart parameters `(a, c)` of an affine element `z ↦ a (z - c)`.
    pub fn affine_params(&self) -> Option<(Complex64, Complex64)> {
        if !self.family_contains(GroupFamily::G1) {
            return None;
        }
        let m = &self.m;
        Some((m.a / m.d, -m.b / m.a))
    }

    /// Smallest `n` with `self ∈ K_n` for `family`.
    pub fn exhaustion_index(&self, family: GroupFamily) -> Result<u32, MobiusError> {
        if !self.family_contains(family) {
            return Err(MobiusError::FamilyMismatch(family));
        }
        let size = match family {
            GroupFamily::G0 => kak_decompose(self).chart_factor(),
            GroupFamily::G1 | GroupFamily::G2 => {
                let (a, c) = self.affine_params().expect("checked membership");
                let dil = a.norm().max(1.0 / a.norm());
                if family == GroupFamily::G1 {
                    dil.max(c.norm())
                } else {
                    dil
                }
            }
        };
        let n = (size * (1.0 - 1e-12)).ceil().max(1.0);
        Ok(n.min(u32::MAX as f64) as u32)
    }

    pub fn to_array(&self) -> [f64; 8] {
        let m = &self.m;
        [m.a.re, m.a.im, m.b.re, m.b.im, m.c.re, m.c.im, m.d.re, m.d.im]
    }

    pub fn from_array(v: [f64; 8]) -> Result<Self, MobiusError> {
        let m = Mat2::new(
            Complex64::new(v[0], v[1]),
            Complex64::new(v[2], v[3]),
            Complex64::new(v[4], v[5]),
            Complex64::new(v[6], v[7]),
        );
        Self::from_unimodular(m)
    }
}

impl Serialize for MobiusElement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for MobiusElement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = <[f64; 8]>::deserialize(d)?;
        MobiusElement::from_array(v).map_err(serde::de::Error::custom)
    }
}

pub fn compose(g1: &MobiusElement, g2: &MobiusElement) -> MobiusElement {
    g1.compose(g2)
}

pub fn inverse(g: &MobiusElement) -> MobiusElement {
    g.inverse()
}

pub fn apply(g: &MobiusElement, p: Vec3) -> Vec3 {
    g.apply(p)
}

/// KAK decomposition through the singular value decomposition of the
/// representative, with phases pushed into `u1` and `u2` to keep both special.
pub fn kak_decompose(g: &MobiusElement) -> KAKFactors {
    let m = g.m;
    // Gram matrix M^H M = [[p, q], [q*, r]].
    let gram = m.adjoint() * m;
    let p = gram.a.re;
    let r = gram.d.re;
    let q = gram.b;
    let half_diff = (p - r) / 2.0;
    let radius = half_diff.hypot(q.norm());
    if radius < 1e-13 {
        return KAKFactors { u1: m, a: 1.0, u2: Mat2::IDENTITY };
    }
    let lambda_max = (p + r) / 2.0 + radius;
    let sigma = lambda_max.sqrt();
    // Eigenvector of the larger eigenvalue; pick the better-conditioned form.
    let cand1 = (q, Complex64::new(lambda_max - p, 0.0));
    let cand2 = (Complex64::new(lambda_max - r, 0.0), q.conj());
    let n1 = cand1.0.norm_sqr() + cand1.1.norm_sqr();
    let n2 = cand2.0.norm_sqr() + cand2.1.norm_sqr();
    let (v1, nrm) = if n1 >= n2 { (cand1, n1.sqrt()) } else { (cand2, n2.sqrt()) };
    let v1 = (v1.0 / nrm, v1.1 / nrm);
    let v2 = (-v1.1.conj(), v1.0.conj());
    // V has columns v1, v2 and determinant |v1|^2 = 1.
    let v = Mat2::new(v1.0, v2.0, v1.1, v2.1);
    let inv_sigma = Mat2::diag(Complex64::new(1.0 / sigma, 0.0), Complex64::new(sigma, 0.0));
    let u = m * v * inv_sigma;
    // det(u) = det(m) det(v) = 1 up to rounding; fold any residual phase.
    let phase = u.det();
    let fix = phase.sqrt().inv();
    let u1 = u.scale(fix);
    let u2 = v.adjoint().scale(fix.inv());
    KAKFactors { u1, a: sigma, u2 }
}

/// Membership `g ∈ K_n` of the exhaustion of `idx.family`.
///
/// G2: `1/n <= |a| <= n` for the chart factor `a`; G1: additionally `|c| <= n`;
/// G0: the squared KAK factor (the chart factor of `D(a)`) is at most `n`.
pub fn in_compact_set(g: &MobiusElement, idx: CompactExhaustionIndex) -> Result<bool, MobiusError> {
    if !g.family_contains(idx.family) {
        return Err(MobiusError::FamilyMismatch(idx.family));
    }
    let n = idx.n as f64;
    let slack = 1.0 + 1e-12;
    let inside = match idx.family {
        GroupFamily::G0 => kak_decompose(g).chart_factor() <= n * slack,
        GroupFamily::G1 | GroupFamily::G2 => {
            let (a, c) = g.affine_params().expect("checked membership");
            let dil_ok = a.norm() * n * slack >= 1.0 && a.norm() <= n * slack;
            if idx.family == GroupFamily::G1 {
                dil_ok && c.norm() <= n * slack
            } else {
                dil_ok
            }
        }
    };
    Ok(inside)
}

/// The `n`-th element of a sequence leaving every `K_m`.
///
/// Dilations use chart factors `2^{±n}`; translations use `z ↦ z - (n + 1)`.
pub fn escape_sequence(family: GroupFamily, mode: EscapeMode, n: u32) -> Result<MobiusElement, MobiusError> {
    if n == 0 {
        return Err(MobiusError::ZeroIndex);
    }
    let factor = 2f64.powi(n.min(1000) as i32);
    match mode {
        EscapeMode::DilateToInf => Ok(MobiusElement::dilation(Complex64::new(factor, 0.0))),
        EscapeMode::DilateToZero => Ok(MobiusElement::dilation(Complex64::new(1.0 / factor, 0.0))),
        EscapeMode::TranslateToInf => match family {
            GroupFamily::G2 => Err(MobiusError::InvalidMode { family, mode }),
            _ => Ok(MobiusElement::translation(Complex64::new(-(n as f64 + 1.0), 0.0))),
        },
    }
}

/// Modes that are valid for a family.
pub fn escape_modes(family: GroupFamily) -> &'static [EscapeMode] {
    match family {
        GroupFamily::G2 => &[EscapeMode::DilateToZero, EscapeMode::DilateToInf],
        _ => &[EscapeMode::DilateToZero, EscapeMode::DilateToInf, EscapeMode::TranslateToInf],
    }
}

/// Haar-random element of SU(2) (uniform unit quaternion).
pub fn random_su2<R: Rng + ?Sized>(rng: &mut R) -> Mat2 {
    let mut q = [0.0f64; 4];
    loop {
        for x in q.iter_mut() {
            *x = rng.gen_range(-1.0..=1.0);
        }
        let n2: f64 = q.iter().map(|x| x * x).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            q.iter_mut().for_each(|x| *x /= n);
            break;
        }
    }
    let alpha = Complex64::new(q[0], q[1]);
    let beta = Complex64::new(q[2], q[3]);
    Mat2::new(alpha, -beta.conj(), beta, alpha.conj())
}

fn random_chart_factor<R: Rng + ?Sized>(rng: &mut R, bound: f64, allow_shrink: bool) -> Complex64 {
    let log_b = bound.ln();
    let log_mod = if allow_shrink { rng.gen_range(-log_b..=log_b) } else { rng.gen_range(0.0..=log_b) };
    let arg = rng.gen_range(-PI..PI);
    Complex64::from_polar(log_mod.exp(), arg)
}

/// Random element of `K_{ceil(bound)}` drawn from `rng`.
pub fn random_element_with<R: Rng + ?Sized>(
    bound: f64,
    family: GroupFamily,
    rng: &mut R,
) -> Result<MobiusElement, MobiusError> {
    if !(bound >= 1.0) || !bound.is_finite() {
        return Err(MobiusError::BadBound(bound));
    }
    let g = match family {
        GroupFamily::G0 => {
            let chart = random_chart_factor(rng, bound, false).norm();
            let a = chart.sqrt();
            let d = Mat2::diag(Complex64::new(a, 0.0), Complex64::new(1.0 / a, 0.0));
            let u1 = random_su2(rng);
            let u2 = random_su2(rng);
            MobiusElement::from_matrix(u1 * d * u2)?
        }
        GroupFamily::G1 => {
            let a = random_chart_factor(rng, bound, true);
            let r = bound * rng.gen_range(0.0f64..=1.0).sqrt();
            let c = Complex64::from_polar(r, rng.gen_range(-PI..PI));
            MobiusElement::affine(a, c)
        }
        GroupFamily::G2 => MobiusElement::dilation(random_chart_factor(rng, bound, true)),
    };
    Ok(g)
}

/// Deterministic random element of `K_{ceil(bound)}` for a seed.
pub fn random_element(bound: f64, family: GroupFamily, seed: u64) -> Result<MobiusElement, MobiusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_element_with(bound, family, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn diag_real(a: f64) -> MobiusElement {
        MobiusElement::from_matrix(Mat2::diag(c(a, 0.0), c(1.0 / a, 0.0))).unwrap()
    }

    #[test]
    fn identity_and_inverse_laws() {
        let g = random_element(5.0, GroupFamily::G0, 7).unwrap();
        let id = MobiusElement::identity();
        assert!(compose(&id, &g).distance(&g) < 1e-14);
        assert!(compose(&g, &inverse(&g)).distance(&id) < 1e-12);
        assert_eq!(inverse(&id), id);
    }

    #[test]
    fn diagonal_product() {
        let g = diag_real(2.0);
        assert!(compose(&g, &g).distance(&diag_real(4.0)) < 1e-15);
        assert!(inverse(&g).distance(&diag_real(0.5)) < 1e-15);
    }

    #[test]
    fn translation_inverse() {
        let t = MobiusElement::translation(c(1.5, -0.5));
        assert!(inverse(&t).distance(&MobiusElement::translation(c(-1.5, 0.5))) < 1e-15);
    }

    #[test]
    fn canonicalization_is_idempotent_and_picks_sign() {
        let g = random_element(3.0, GroupFamily::G0, 11).unwrap();
        let again = MobiusElement::from_unimodular(*g.matrix()).unwrap();
        assert_eq!(g.to_array(), again.to_array());
        let neg = MobiusElement::from_unimodular(g.matrix().scale(c(-1.0, 0.0))).unwrap();
        assert_eq!(neg, g);
        let lead = g.matrix().a;
        let arg = lead.im.atan2(lead.re);
        assert!((0.0..PI).contains(&arg));
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = Mat2::new(ONE, ONE, ONE, ONE);
        assert!(matches!(MobiusElement::from_matrix(m), Err(MobiusError::Singular(_))));
    }

    #[test]
    fn kak_of_diagonal_and_unitary() {
        let f = kak_decompose(&diag_real(2.0));
        assert!((f.a - 2.0).abs() < 1e-15);
        assert!(f.u1.dist(&Mat2::IDENTITY) < 1e-15);
        assert!(f.u2.dist(&Mat2::IDENTITY) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = MobiusElement::from_matrix(random_su2(&mut rng)).unwrap();
        let f = kak_decompose(&u);
        assert_eq!(f.a, 1.0);
        assert_eq!(f.u1, *u.matrix());
        assert_eq!(f.u2, Mat2::IDENTITY);
    }

    #[test]
    fn kak_of_inverted_diagonal_swaps_axes() {
        let g = diag_real(0.25);
        let f = kak_decompose(&g);
        assert!((f.a - 4.0).abs() < 1e-13);
        assert!(f.reconstruct().projective_dist(g.matrix()) < 1e-12);
    }

    #[test]
    fn compact_set_membership_examples() {
        let g = diag_real(2.0);
        let k = |n| CompactExhaustionIndex::new(n, GroupFamily::G2).unwrap();
        assert!(!in_compact_set(&g, k(3)).unwrap());
        assert!(in_compact_set(&g, k(4)).unwrap());
        let id = MobiusElement::identity();
        for fam in [GroupFamily::G0, GroupFamily::G1, GroupFamily::G2] {
            assert!(in_compact_set(&id, CompactExhaustionIndex::new(1, fam).unwrap()).unwrap());
        }
        let t = MobiusElement::affine(ONE, c(10.0, 0.0));
        let k1 = |n| CompactExhaustionIndex::new(n, GroupFamily::G1).unwrap();
        assert!(!in_compact_set(&t, k1(5)).unwrap());
        assert!(in_compact_set(&t, k1(10)).unwrap());
        assert_eq!(
            in_compact_set(&t, k(10)),
            Err(MobiusError::FamilyMismatch(GroupFamily::G2))
        );
        assert_eq!(CompactExhaustionIndex::new(0, GroupFamily::G0), Err(MobiusError::ZeroIndex));
    }

    #[test]
    fn escape_sequence_examples() {
        let g = escape_sequence(GroupFamily::G2, EscapeMode::DilateToInf, 1).unwrap();
        assert!(g.distance(&MobiusElement::dilation(c(2.0, 0.0))) < 1e-15);
        let t = escape_sequence(GroupFamily::G1, EscapeMode::TranslateToInf, 4).unwrap();
        let (a, shift) = t.affine_params().unwrap();
        assert!((a - ONE).norm() < 1e-15 && (shift - c(5.0, 0.0)).norm() < 1e-15);
        assert!(matches!(
            escape_sequence(GroupFamily::G2, EscapeMode::TranslateToInf, 1),
            Err(MobiusError::InvalidMode { .. })
        ));
        for fam in [GroupFamily::G0, GroupFamily::G1, GroupFamily::G2] {
            for &mode in escape_modes(fam) {
                for n in 2..20 {
                    let g = escape_sequence(fam, mode, n).unwrap();
                    let idx = CompactExhaustionIndex::new(n - 1, fam).unwrap();
                    assert!(!in_compact_set(&g, idx).unwrap(), "{fam} {mode:?} {n}");
                }
            }
        }
    }

    #[test]
    fn random_element_is_deterministic_and_bounded() {
        let a = random_element(5.0, GroupFamily::G1, 99).unwrap();
        let b = random_element(5.0, GroupFamily::G1, 99).unwrap();
        assert_eq!(a, b);
        let r = random_element(1.0, GroupFamily::G2, 5).unwrap();
        let (factor, _) = r.affine_params().unwrap();
        assert!((factor.norm() - 1.0).abs() < 1e-14);
        assert_eq!(random_element(0.5, GroupFamily::G0, 1), Err(MobiusError::BadBound(0.5)));
    }

    #[test]
    fn rotation_about_z_is_chart_rotation() {
        let g = MobiusElement::rotation(Vec3::new(0.0, 0.0, 1.0), 0.7);
        assert!(g.distance(&MobiusElement::dilation(Complex64::from_polar(1.0, 0.7))) < 1e-15);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let g = random_element(7.0, GroupFamily::G0, 1234).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: MobiusElement = serde_json::from_str(&s).unwrap();
        assert_eq!(back.to_array(), g.to_array());
    }
}
