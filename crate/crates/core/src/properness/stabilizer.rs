use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::align::{compass, lm_refine};
use super::{require_nonconstant, Metric, ProperError};
use crate::mapspace::{pullback, DiscreteMap};
use crate::mobius::{
    escape_modes, escape_sequence, in_compact_set, random_element_with, CompactExhaustionIndex, GroupFamily, Mat2,
    MobiusElement,
};

/// Group distance below which two accepted elements count as one.
const CLUSTER_RADIUS: f64 = 0.05;
const ESCAPE_PROBES: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilizerVerdict {
    FiniteLike,
    CircleLike,
    NoncompactSuspect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizerCandidate {
    pub element: MobiusElement,
    pub residual: f64,
    pub a_factor: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizerEstimate {
    /// Accepted elements, one per cluster, by increasing residual.
    pub candidates: Vec<StabilizerCandidate>,
    pub threshold: f64,
    pub max_a_factor: f64,
    pub verdict: StabilizerVerdict,
    pub n: u32,
    pub metric: Metric,
    pub probed: usize,
    pub escape_min_residual: f64,
    /// Whether the one-parameter subgroup through some accepted element was
    /// accepted along its whole sweep.
    pub circle_detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizerConfig {
    pub threshold: f64,
    pub budget: usize,
    pub n: u32,
    pub seed: u64,
    pub metric: Metric,
    /// Number of best random samples refined by compass search.
    pub refine_top: usize,
    pub refine_budget: usize,
    pub sweep_samples: usize,
}

impl StabilizerConfig {
    pub fn new(threshold: f64, budget: usize, n: u32, seed: u64, metric: Metric) -> Self {
        Self { threshold, budget, n, seed, metric, refine_top: 4, refine_budget: 240, sweep_samples: 24 }
    }
}

/// `s ↦ exp(s log m)` through an elliptic element, or `None` when `m` is not
/// elliptic.
fn elliptic_path(m: &Mat2) -> Option<impl Fn(f64) -> MobiusElement> {
    let half_trace = (m.a + m.d) / 2.0;
    if half_trace.im.abs() > 1e-6 || half_trace.re.abs() >= 1.0 - 1e-9 {
        return None;
    }
    let phi = half_trace.re.acos();
    let (c, s) = (Complex64::new(phi.cos(), 0.0), phi.sin());
    // N = (m - cos φ) / sin φ satisfies N² = -1.
    let n = Mat2::new((m.a - c) / s, m.b / s, m.c / s, (m.d - c) / s);
    Some(move |t: f64| {
        let (ct, st) = ((t * phi).cos(), (t * phi).sin());
        let id = Mat2::IDENTITY.scale(Complex64::new(ct, 0.0));
        let step = Mat2::new(id.a + n.a * st, n.b * st, n.c * st, id.d + n.d * st);
        MobiusElement::from_matrix(step).expect("unimodular path")
    })
}

/// Searches `{g : d(f∘g, f) <= threshold}` by random sampling in `K_n`,
/// escape sequences, compass refinement of the best samples and closure under
/// products and inverses.
pub fn stabilizer_search(f: &DiscreteMap, cfg: &StabilizerConfig) -> Result<StabilizerEstimate, ProperError> {
    require_nonconstant(f)?;
    if cfg.budget == 0 {
        return Err(ProperError::BadBudget);
    }
    let metric = cfg.metric;
    let residual = |g: &MobiusElement| -> Result<f64, ProperError> { Ok(metric.distance(&pullback(f, g)?, f)?) };
    let tagged = |gs: Vec<MobiusElement>, source: &str| -> Result<Vec<StabilizerCandidate>, ProperError> {
        let vals = gs.par_iter().map(residual).collect::<Result<Vec<_>, _>>()?;
        Ok(gs
            .into_iter()
            .zip(vals)
            .map(|(g, r)| StabilizerCandidate { element: g, residual: r, a_factor: g.a_factor(), source: source.into() })
            .collect())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut randoms = vec![MobiusElement::identity()];
    for _ in 1..cfg.budget {
        randoms.push(random_element_with(cfg.n.max(1) as f64, GroupFamily::G0, &mut rng)?);
    }
    let mut probes = tagged(randoms, "random")?;

    let mut escapes = Vec::new();
    for &mode in escape_modes(GroupFamily::G0) {
        for k in 1..=ESCAPE_PROBES {
            escapes.push(escape_sequence(GroupFamily::G0, mode, k)?);
        }
    }
    let escapes = tagged(escapes, "escape")?;
    let escape_min_residual = escapes.iter().map(|c| c.residual).fold(f64::INFINITY, f64::min);

    // Refine around near-accepted samples and the best few overall.
    let mut order: Vec<usize> = (1..probes.len()).collect();
    order.sort_by(|&a, &b| probes[a].residual.total_cmp(&probes[b].residual).then(a.cmp(&b)));
    let near: Vec<usize> = order.iter().copied().filter(|&i| probes[i].residual < 4.0 * cfg.threshold).collect();
    let mut seeds: Vec<usize> = order.iter().copied().take(cfg.refine_top).collect();
    for i in near.into_iter().take(cfg.refine_top) {
        if !seeds.contains(&i) {
            seeds.push(i);
        }
    }
    let mut refined = Vec::new();
    for i in seeds {
        let g = probes[i].element;
        let ((g, _), _) = lm_refine(f, f, g, cfg.refine_budget)?;
        let ((g, _), _) = compass(&residual, (g, residual(&g)?), (0.01, 1e-5), cfg.refine_budget / 3)?;
        refined.push(g);
    }
    probes.extend(tagged(refined, "refined")?);
    let probed = probes.len() + escapes.len();

    let mut accepted = cluster(probes.iter().filter(|c| c.residual <= cfg.threshold).cloned().collect());
    let closure: Vec<MobiusElement> = accepted
        .iter()
        .flat_map(|a| {
            let inv = a.element.inverse();
            let prods: Vec<MobiusElement> = accepted.iter().map(|b| a.element.compose(&b.element)).collect();
            std::iter::once(inv).chain(prods)
        })
        .collect();
    let closure = tagged(closure, "closure")?;
    let probed = probed + closure.len();
    accepted.extend(closure.into_iter().filter(|c| c.residual <= cfg.threshold));
    accepted.extend(escapes.iter().filter(|c| c.residual <= cfg.threshold).cloned());
    let accepted = cluster(accepted);

    let mut circle_detected = false;
    for c in accepted.iter().filter(|c| c.element.distance(&MobiusElement::identity()) > CLUSTER_RADIUS) {
        // Sweep the subgroup through the element and through its unitary part.
        let k = c.element.kak();
        let unitary = k.u1 * k.u2;
        for m in [*c.element.matrix(), unitary] {
            let Some(path) = elliptic_path(&m) else { continue };
            let sweep: Vec<MobiusElement> =
                (1..cfg.sweep_samples).map(|j| path(j as f64 / cfg.sweep_samples as f64)).collect();
            let vals = sweep.par_iter().map(residual).collect::<Result<Vec<_>, _>>()?;
            if vals.iter().all(|&r| r <= cfg.threshold) {
                circle_detected = true;
            }
        }
        if circle_detected {
            break;
        }
    }

    let idx = CompactExhaustionIndex::new(cfg.n.max(1), GroupFamily::G0)?;
    let mut escaped = escape_min_residual <= cfg.threshold;
    for c in &accepted {
        escaped |= !in_compact_set(&c.element, idx)?;
    }
    let verdict = if escaped {
        StabilizerVerdict::NoncompactSuspect
    } else if circle_detected {
        StabilizerVerdict::CircleLike
    } else {
        StabilizerVerdict::FiniteLike
    };
    Ok(StabilizerEstimate {
        max_a_factor: accepted.iter().map(|c| c.a_factor).fold(1.0, f64::max),
        candidates: accepted,
        threshold: cfg.threshold,
        verdict,
        n: cfg.n,
        metric,
        probed,
        escape_min_residual,
        circle_detected,
    })
}

/// Keeps the best-residual representative of each cluster of nearby elements.
fn cluster(mut cands: Vec<StabilizerCandidate>) -> Vec<StabilizerCandidate> {
    cands.sort_by(|a, b| a.residual.total_cmp(&b.residual));
    let mut kept: Vec<StabilizerCandidate> = Vec::new();
    for c in cands {
        if kept.iter().all(|k| k.element.distance(&c.element) > CLUSTER_RADIUS) {
            kept.push(c);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapspace::{axis_map, identity_map, power_map, TargetManifold};
    use crate::properness::resampling_error;
    use crate::sphere::{SphereMesh, Vec3};

    #[test]
    fn elliptic_path_reaches_its_endpoint() {
        let g = MobiusElement::rotation(Vec3::new(0.2, 1.0, -0.4), 2.1);
        let h = MobiusElement::affine(Complex64::new(1.5, 0.3), Complex64::new(0.1, 0.2));
        let conj = h.compose(&g).compose(&h.inverse());
        let path = elliptic_path(conj.matrix()).unwrap();
        assert!(path(1.0).distance(&conj) < 1e-10);
        assert!(path(0.0).is_identity());
        assert!(elliptic_path(MobiusElement::dilation(Complex64::new(2.0, 0.0)).matrix()).is_none());
    }

    fn threshold(f: &DiscreteMap) -> f64 {
        3.0 * resampling_error(f, Metric::C0).unwrap()
    }

    #[test]
    fn identity_has_trivial_stabilizer() {
        let m = SphereMesh::shared(3).unwrap();
        let f = identity_map(&m);
        let est = stabilizer_search(&f, &StabilizerConfig::new(threshold(&f), 64, 4, 2, Metric::C0)).unwrap();
        assert_eq!(est.candidates.len(), 1, "{:?}", est.candidates);
        assert_eq!(est.verdict, StabilizerVerdict::FiniteLike);
    }

    #[test]
    fn cube_has_three_rotations() {
        let m = SphereMesh::shared(3).unwrap();
        let f = power_map(&m, 3).unwrap();
        let est = stabilizer_search(&f, &StabilizerConfig::new(threshold(&f), 64, 4, 7, Metric::C0)).unwrap();
        assert_eq!(est.candidates.len(), 3, "{:?}", est.candidates);
        assert_eq!(est.verdict, StabilizerVerdict::FiniteLike);
        for c in &est.candidates {
            // z ↦ ωz with ω³ = 1: diagonal with a/d a cube root of unity.
            let m = c.element.matrix();
            assert!(m.b.norm() < 0.02 && m.c.norm() < 0.02, "{m:?}");
            let w = m.a / m.d;
            assert!((w.powu(3) - 1.0).norm() < 0.05, "{w}");
        }
    }

    #[test]
    fn latitude_map_has_a_circle() {
        let m = SphereMesh::shared(3).unwrap();
        let profile = vec![vec![0.0, 0.0, -1.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        let f = axis_map(&m, TargetManifold::UnitSphere, Vec3::new(0.0, 0.0, 1.0), &profile).unwrap();
        let est = stabilizer_search(&f, &StabilizerConfig::new(threshold(&f), 64, 4, 3, Metric::C0)).unwrap();
        assert_eq!(est.verdict, StabilizerVerdict::CircleLike, "{:?}", est.candidates);
    }
}
