//! Experiments on the reparametrization action: orbit escape, separation of
//! orbits by G-neighbourhoods, stabilizers, pre-compactness of transporter
//! sets, and registration of one map against another.
//!
//! Every experiment is budget-bounded and deterministic in its seed, so a
//! report witnesses a property on the probed set rather than proving it.

mod align;
mod escape;
mod precompact;
mod separation;
mod stabilizer;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::functionals::{self, c0_distance, sobolev_distance, FunctionalError, SobolevParams};
use crate::mapspace::{ambient_dist, bump_perturb, pullback, DiscreteMap, MapError, TARGET_TOL};
use crate::mobius::{MobiusElement, MobiusError};
use crate::sphere::{SphericalRegion, Vec3};

pub use align::{align, AlignResult};
pub use escape::{orbit_escape_experiment, proof_constants, rotation_control, ProofConstants};
pub use precompact::{precompact_witness, PrecompactConfig};
pub use separation::{energy_separation_threshold, separation_experiment, SeparationConfig, ENERGY_GAP_TOL};
pub use stabilizer::{stabilizer_search, StabilizerCandidate, StabilizerConfig, StabilizerEstimate, StabilizerVerdict};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProperError {
    #[error("the map is constant; the experiment needs a non-constant map")]
    ConstantMapRejected,
    #[error("maps look like one orbit: align residual {residual:e} <= margin {margin:e}")]
    SameOrbitSuspected { residual: f64, margin: f64 },
    #[error("energy gap {gap:e} is below the invariance tolerance {tolerance:e}")]
    ZeroGap { gap: f64, tolerance: f64 },
    #[error("calibration constant must be positive, got {0}")]
    BadCalibration(f64),
    #[error("neighbourhood radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("sample budget must be positive")]
    BadBudget,
    #[error("neighbourhood is not centred at the experiment's map")]
    CenterMismatch,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Mobius(#[from] MobiusError),
}

/// Distance used for neighbourhoods and residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    /// Largest vertex-wise ambient distance.
    C0,
    /// Quadrature `L²` distance, smooth in the group parameters.
    L2,
    Sobolev(SobolevParams),
}

impl Metric {
    pub fn distance(&self, f: &DiscreteMap, h: &DiscreteMap) -> Result<f64, FunctionalError> {
        match self {
            Metric::C0 => c0_distance(f, h),
            Metric::L2 => {
                f.check_compatible(h)?;
                let w = f.mesh().vertex_weights();
                let s: f64 = (0..f.vertex_count()).map(|i| w[i] * ambient_dist(f.value(i), h.value(i)).powi(2)).sum();
                Ok(s.sqrt())
            }
            Metric::Sobolev(p) => sobolev_distance(f, h, *p),
        }
    }
}

/// The open ball `U_ε(center)`; [`NeighborhoodSpec::contains`] is the only
/// membership test the experiments use.
#[derive(Debug, Clone)]
pub struct NeighborhoodSpec {
    center: DiscreteMap,
    radius: f64,
    metric: Metric,
}

impl NeighborhoodSpec {
    pub fn new(center: DiscreteMap, radius: f64, metric: Metric) -> Result<Self, ProperError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(ProperError::BadRadius(radius));
        }
        Ok(Self { center, radius, metric })
    }

    pub fn center(&self) -> &DiscreteMap {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn distance(&self, h: &DiscreteMap) -> Result<f64, ProperError> {
        Ok(self.metric.distance(&self.center, h)?)
    }

    pub fn contains(&self, h: &DiscreteMap) -> Result<bool, ProperError> {
        Ok(self.distance(h)? < self.radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

/// One row of an experiment's per-step series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub label: String,
    pub n: Option<u32>,
    pub distance: f64,
    pub energy_f: f64,
    pub energy_h: f64,
    pub inside: Option<bool>,
    pub a_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub label: String,
    pub element: Option<MobiusElement>,
    pub map: Option<Value>,
}

impl Witness {
    pub fn element(label: &str, g: &MobiusElement) -> Self {
        Self { label: label.to_string(), element: Some(*g), map: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub parameters: Value,
    pub verdict: Verdict,
    pub summary: Value,
    pub steps: Vec<StepRecord>,
    pub witnesses: Vec<Witness>,
}

impl ExperimentReport {
    pub const CSV_HEADER: [&'static str; 9] =
        ["step", "label", "n", "distance", "energy_f", "energy_h", "inside", "a_factor", "verdict"];

    /// Flat rows for the CSV sidecar, in [`Self::CSV_HEADER`] order.
    pub fn csv_rows(&self) -> Vec<[String; 9]> {
        let opt = |x: Option<String>| x.unwrap_or_default();
        let verdict = match self.verdict {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        };
        self.steps
            .iter()
            .map(|s| {
                [
                    s.step.to_string(),
                    s.label.clone(),
                    opt(s.n.map(|n| n.to_string())),
                    s.distance.to_string(),
                    s.energy_f.to_string(),
                    s.energy_h.to_string(),
                    opt(s.inside.map(|b| b.to_string())),
                    opt(s.a_factor.map(|a| a.to_string())),
                    verdict.to_string(),
                ]
            })
            .collect()
    }
}

/// Rotations used to estimate the resampling error; fixed so that the
/// estimate is a function of the map alone.
fn probe_rotations() -> [MobiusElement; 3] {
    [
        MobiusElement::rotation(Vec3::new(1.0, 2.0, 3.0), 0.7),
        MobiusElement::rotation(Vec3::new(-2.0, 1.0, 0.5), 1.9),
        MobiusElement::rotation(Vec3::new(0.3, -1.0, 2.0), 2.8),
    ]
}

/// Empirical error of one resampling: half the round-trip distance
/// `d(f, (f∘u)∘u⁻¹)` over a few fixed rotations `u`.
pub fn resampling_error(f: &DiscreteMap, metric: Metric) -> Result<f64, ProperError> {
    let mut worst: f64 = 0.0;
    for u in probe_rotations() {
        let there = pullback(f, &u)?;
        let back = pullback(&there, &u.inverse())?;
        worst = worst.max(metric.distance(f, &back)? / 2.0);
    }
    Ok(worst)
}

/// Mesh-level a-priori bound: largest edge length times the Lipschitz bound.
pub fn lipschitz_resampling_bound(f: &DiscreteMap) -> f64 {
    f.lipschitz_resampling_bound()
}

/// Non-constant test: the image diameter exceeds ten times the target tolerance.
pub(crate) fn require_nonconstant(f: &DiscreteMap) -> Result<f64, ProperError> {
    let delta = functionals::diameter(f, &SphericalRegion::Full)?;
    if delta > 10.0 * TARGET_TOL {
        Ok(delta)
    } else {
        Err(ProperError::ConstantMapRejected)
    }
}

/// Per-sample generator, independent of how samples are scheduled.
pub(crate) fn sample_rng(seed: u64, index: usize) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// A bump perturbation of `f` inside `nbhd`, at a random fraction of the radius.
pub(crate) fn sample_in_neighborhood<R: rand::Rng>(nbhd: &NeighborhoodSpec, rng: &mut R) -> Result<DiscreteMap, ProperError> {
    let f = nbhd.center();
    let center = functionals::random_unit(rng);
    let radius = rng.gen_range(0.3..1.0);
    let frac: f64 = rng.gen_range(0.05..0.95);
    let seed: u64 = rng.gen();
    let max_amp = 0.45;
    let probe = bump_perturb(f, center, radius, 0.1, seed)?;
    let d = nbhd.distance(&probe)?;
    let mut amp = if d > 0.0 { (0.1 * frac * nbhd.radius() / d).min(max_amp) } else { max_amp * frac };
    for _ in 0..60 {
        let h = bump_perturb(f, center, radius, amp, seed)?;
        if nbhd.contains(&h)? {
            return Ok(h);
        }
        amp *= 0.5;
    }
    Ok(f.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapspace::{constant_map, identity_map, power_map, TargetManifold};
    use crate::sphere::SphereMesh;

    #[test]
    fn neighbourhood_membership_is_strict() {
        let m = SphereMesh::shared(2).unwrap();
        let f = identity_map(&m);
        let n = NeighborhoodSpec::new(f.clone(), 0.1, Metric::C0).unwrap();
        assert!(n.contains(&f).unwrap());
        assert!(matches!(NeighborhoodSpec::new(f, 0.0, Metric::C0), Err(ProperError::BadRadius(_))));
    }

    #[test]
    fn l2_distance_of_antipodal_constants() {
        let m = SphereMesh::shared(3).unwrap();
        let a = constant_map(&m, TargetManifold::UnitSphere, &[0.0, 0.0, 1.0]).unwrap();
        let b = constant_map(&m, TargetManifold::UnitSphere, &[0.0, 0.0, -1.0]).unwrap();
        let d = Metric::L2.distance(&a, &b).unwrap();
        let want = 2.0 * m.total_weight().sqrt();
        assert!((d - want).abs() < 1e-12);
    }

    #[test]
    fn resampling_error_shrinks_with_level() {
        let err = |level| resampling_error(&power_map(&SphereMesh::shared(level).unwrap(), 2).unwrap(), Metric::C0).unwrap();
        let (e3, e4) = (err(3), err(4));
        assert!(e3 > 0.0 && e4 < e3 / 2.0, "{e3} {e4}");
    }

    #[test]
    fn identity_resamples_exactly() {
        // Point location projects centrally, so interpolating the identity
        // and projecting back recovers the point itself.
        let f = identity_map(&SphereMesh::shared(3).unwrap());
        assert!(resampling_error(&f, Metric::C0).unwrap() < 1e-14);
    }

    #[test]
    fn metric_serde_is_tagged() {
        let m = Metric::Sobolev(SobolevParams::default());
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"kind":"sobolev","k":2,"p":4.0}"#);
        assert_eq!(serde_json::from_str::<Metric>(&s).unwrap(), m);
    }

    #[test]
    fn sampled_members_are_inside() {
        let m = SphereMesh::shared(3).unwrap();
        let n = NeighborhoodSpec::new(identity_map(&m), 0.05, Metric::C0).unwrap();
        for i in 0..5 {
            let h = sample_in_neighborhood(&n, &mut sample_rng(9, i)).unwrap();
            assert!(n.contains(&h).unwrap());
        }
    }
}
