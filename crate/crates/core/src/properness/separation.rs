use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    align, sample_in_neighborhood, sample_rng, ExperimentReport, Metric, NeighborhoodSpec, ProperError, StepRecord,
    Verdict, Witness,
};
use crate::functionals::{energy, is_constant, sobolev_norm, CalibrationReport};
use crate::mapspace::{pullback, DiscreteMap, TARGET_TOL};
use crate::mobius::{escape_modes, escape_sequence, random_element_with, GroupFamily, MobiusElement};

/// Relative energy gap below which two maps count as energy-indistinguishable;
/// matches the tolerance of the discrete conformal invariance.
pub const ENERGY_GAP_TOL: f64 = 0.02;

/// Largest `ε` with `δ - 2Cε(‖f₁‖ + ‖f₂‖ + ε) > 0`, `δ = |E(f₁) - E(f₂)|`.
pub fn energy_separation_threshold(f1: &DiscreteMap, f2: &DiscreteMap, calib: &CalibrationReport) -> Result<f64, ProperError> {
    f1.check_compatible(f2)?;
    let c = calib.constant_estimate;
    if !(c > 0.0) || !c.is_finite() {
        return Err(ProperError::BadCalibration(c));
    }
    let (e1, e2) = (energy(f1), energy(f2));
    let gap = (e1 - e2).abs();
    let tolerance = ENERGY_GAP_TOL * e1.max(e2).max(1.0);
    if gap <= tolerance {
        return Err(ProperError::ZeroGap { gap, tolerance });
    }
    let s = sobolev_norm(f1, calib.params) + sobolev_norm(f2, calib.params);
    // Positive root of 2Cε² + 2Csε - δ, written without cancellation.
    Ok(gap / (c * (s + (s * s + 2.0 * gap / c).sqrt())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationConfig {
    pub eps1: f64,
    pub eps2: f64,
    pub sample_budget: usize,
    pub seed: u64,
    pub metric: Metric,
    /// Group elements are drawn from `K_bound` (plus escape elements).
    pub bound: f64,
    /// Budget for the same-orbit pre-check.
    pub align_budget: usize,
    pub calibration: Option<CalibrationReport>,
}

impl SeparationConfig {
    pub fn new(eps1: f64, eps2: f64, sample_budget: usize, seed: u64, metric: Metric) -> Self {
        Self { eps1, eps2, sample_budget, seed, metric, bound: 8.0, align_budget: 300, calibration: None }
    }
}

struct Sample {
    g1: MobiusElement,
    g2: MobiusElement,
    distance: f64,
    e1: f64,
    e2: f64,
}

fn draw_element<R: Rng>(rng: &mut R, bound: f64, escape: bool) -> Result<MobiusElement, ProperError> {
    if escape {
        let modes = escape_modes(GroupFamily::G0);
        let mode = modes[rng.gen_range(0..modes.len())];
        let n = rng.gen_range(1..=12);
        let u = MobiusElement::from_matrix(crate::mobius::random_su2(rng))?;
        Ok(u.compose(&escape_sequence(GroupFamily::G0, mode, n)?))
    } else {
        Ok(random_element_with(bound, GroupFamily::G0, rng)?)
    }
}

/// Samples `h₁∘g₁` and `h₂∘g₂` over `G·U_{ε₁}(f₁)` and `G·U_{ε₂}(f₂)` and
/// reports the smallest distance between them.
///
/// Fails with `SameOrbitSuspected` when `f₁∘g` can be aligned to `f₂` within
/// `3(ε₁ + ε₂)`. When a calibration is supplied and the energies differ, the
/// energy certificate is evaluated and spot-checked on every sample.
pub fn separation_experiment(f1: &DiscreteMap, f2: &DiscreteMap, cfg: &SeparationConfig) -> Result<ExperimentReport, ProperError> {
    if cfg.sample_budget == 0 {
        return Err(ProperError::BadBudget);
    }
    f1.check_compatible(f2)?;
    let n1 = NeighborhoodSpec::new(f1.clone(), cfg.eps1, cfg.metric)?;
    let n2 = NeighborhoodSpec::new(f2.clone(), cfg.eps2, cfg.metric)?;
    let margin = 3.0 * (cfg.eps1 + cfg.eps2);
    let orbit_residual = if f1 == f2 {
        0.0
    } else if is_constant(f1, 10.0 * TARGET_TOL) {
        // Every reparametrization of a constant map is itself.
        cfg.metric.distance(f1, f2)?
    } else {
        align(f1, f2, cfg.metric, cfg.align_budget, cfg.seed)?.residual
    };
    if orbit_residual <= margin {
        return Err(ProperError::SameOrbitSuspected { residual: orbit_residual, margin });
    }

    let samples = (0..cfg.sample_budget)
        .into_par_iter()
        .map(|i| -> Result<Sample, ProperError> {
            let mut rng = sample_rng(cfg.seed, i);
            let h1 = sample_in_neighborhood(&n1, &mut rng)?;
            let h2 = sample_in_neighborhood(&n2, &mut rng)?;
            let g1 = draw_element(&mut rng, cfg.bound, i % 5 == 3)?;
            let g2 = draw_element(&mut rng, cfg.bound, i % 5 == 4)?;
            let k1 = pullback(&h1, &g1)?;
            let k2 = pullback(&h2, &g2)?;
            Ok(Sample { g1, g2, distance: cfg.metric.distance(&k1, &k2)?, e1: energy(&k1), e2: energy(&k2) })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let min_index = (0..samples.len())
        .min_by(|&a, &b| samples[a].distance.total_cmp(&samples[b].distance))
        .expect("budget > 0");
    let min_distance = samples[min_index].distance;
    let counterexamples = samples.iter().filter(|s| !(s.distance > 0.0)).count();

    let certificate = match &cfg.calibration {
        Some(calib) => match energy_separation_threshold(f1, f2, calib) {
            Ok(eps) => {
                let active = cfg.eps1 + cfg.eps2 < eps;
                let energy_violations = samples.iter().filter(|s| !((s.e1 - s.e2).abs() > 0.0)).count();
                json!({
                    "threshold": eps,
                    "active": active,
                    "energy_gap": (energy(f1) - energy(f2)).abs(),
                    "constant_estimate": calib.constant_estimate,
                    "min_sample_energy_gap": samples.iter().map(|s| (s.e1 - s.e2).abs()).fold(f64::INFINITY, f64::min),
                    "energy_violations": energy_violations,
                })
            }
            Err(ProperError::ZeroGap { gap, tolerance }) => json!({"active": false, "energy_gap": gap, "tolerance": tolerance}),
            Err(e) => return Err(e),
        },
        None => serde_json::Value::Null,
    };

    let steps = samples
        .iter()
        .enumerate()
        .map(|(i, s)| StepRecord {
            step: i,
            label: "sample".into(),
            n: None,
            distance: s.distance,
            energy_f: s.e1,
            energy_h: s.e2,
            inside: None,
            a_factor: Some(s.g1.a_factor().max(s.g2.a_factor())),
        })
        .collect();
    let closest = &samples[min_index];
    Ok(ExperimentReport {
        experiment: "separate".into(),
        parameters: json!({
            "eps1": cfg.eps1,
            "eps2": cfg.eps2,
            "sample_budget": cfg.sample_budget,
            "seed": cfg.seed,
            "metric": cfg.metric,
            "bound": cfg.bound,
            "align_budget": cfg.align_budget,
            "mesh_level": f1.mesh().level(),
            "calibration": cfg.calibration,
        }),
        verdict: Verdict::from_bool(counterexamples == 0),
        summary: json!({
            "min_distance": min_distance,
            "counterexamples": counterexamples,
            "orbit_residual": orbit_residual,
            "orbit_margin": margin,
            "energy_certificate": certificate,
        }),
        steps,
        witnesses: vec![Witness::element("closest_g1", &closest.g1), Witness::element("closest_g2", &closest.g2)],
    })
}
