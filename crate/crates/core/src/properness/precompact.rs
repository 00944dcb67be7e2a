use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    align, require_nonconstant, sample_in_neighborhood, sample_rng, ExperimentReport, Metric, NeighborhoodSpec,
    ProperError, StepRecord, Verdict, Witness,
};
use crate::functionals::energy;
use crate::mapspace::{pullback, DiscreteMap};
use crate::mobius::{escape_modes, escape_sequence, random_element_with, GroupFamily, MobiusElement};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecompactConfig {
    pub eps: f64,
    pub sample_budget: usize,
    pub seed: u64,
    pub metric: Metric,
    /// Global samples come from `K_bound`.
    pub bound: f64,
    pub align_budget: usize,
}

impl PrecompactConfig {
    pub fn new(eps: f64, sample_budget: usize, seed: u64, metric: Metric) -> Self {
        Self { eps, sample_budget, seed, metric, bound: 16.0, align_budget: 300 }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Local,
    Global,
    Escape,
}

impl Kind {
    fn label(self) -> &'static str {
        match self {
            Kind::Local => "local",
            Kind::Global => "global",
            Kind::Escape => "escape",
        }
    }
}

/// Records every sampled `g` with `h∘g ∈ U_ε(f₂)` for `h ∈ U_ε(f₁)`; passes when
/// no probed escape element is recorded, and reports the hull of the rest.
///
/// Samples mix perturbations around the registration of `f₁` onto `f₂`, global
/// draws from `K_bound`, and escape elements composed with random rotations.
pub fn precompact_witness(f1: &DiscreteMap, f2: &DiscreteMap, cfg: &PrecompactConfig) -> Result<ExperimentReport, ProperError> {
    require_nonconstant(f1)?;
    require_nonconstant(f2)?;
    if cfg.sample_budget == 0 {
        return Err(ProperError::BadBudget);
    }
    let n1 = NeighborhoodSpec::new(f1.clone(), cfg.eps, cfg.metric)?;
    let n2 = NeighborhoodSpec::new(f2.clone(), cfg.eps, cfg.metric)?;
    let reg = align(f1, f2, cfg.metric, cfg.align_budget, cfg.seed)?;
    let modes = escape_modes(GroupFamily::G0);

    let samples = (0..cfg.sample_budget)
        .into_par_iter()
        .map(|i| -> Result<(Kind, MobiusElement, f64, f64, f64), ProperError> {
            let mut rng = sample_rng(cfg.seed, i);
            let h = if i % 4 == 0 { f1.clone() } else { sample_in_neighborhood(&n1, &mut rng)? };
            let (kind, g) = match i % 3 {
                0 => {
                    let scale = 10f64.powf(rng.gen_range(-2.0..-0.5));
                    let theta: [f64; 6] = std::array::from_fn(|_| scale * rng.gen_range(-1.0..1.0));
                    (Kind::Local, reg.g.compose(&MobiusElement::lie_exp(theta)))
                }
                1 => (Kind::Global, random_element_with(cfg.bound, GroupFamily::G0, &mut rng)?),
                _ => {
                    let mode = modes[(i / 3) % modes.len()];
                    let n = 1 + ((i / 3 / modes.len()) % 12) as u32;
                    let u = MobiusElement::from_matrix(crate::mobius::random_su2(&mut rng))?;
                    (Kind::Escape, reg.g.compose(&escape_sequence(GroupFamily::G0, mode, n)?).compose(&u))
                }
            };
            let k = pullback(&h, &g)?;
            Ok((kind, g, n2.distance(&k)?, energy(&h), energy(&k)))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let recorded: Vec<&(Kind, MobiusElement, f64, f64, f64)> = samples.iter().filter(|s| s.2 < cfg.eps).collect();
    let escape_probed = samples.iter().filter(|s| s.0 == Kind::Escape).count();
    let escape_recorded = recorded.iter().filter(|s| s.0 == Kind::Escape).count();
    let max_a = recorded.iter().map(|s| s.1.a_factor()).fold(0.0, f64::max);
    let hull_n = recorded
        .iter()
        .map(|s| s.1.kak().chart_factor().ceil() as u32)
        .max()
        .map(|n| n.max(1));
    let mean_a = if recorded.is_empty() {
        None
    } else {
        Some(recorded.iter().map(|s| s.1.a_factor()).sum::<f64>() / recorded.len() as f64)
    };
    let steps = samples
        .iter()
        .enumerate()
        .map(|(i, s)| StepRecord {
            step: i,
            label: s.0.label().into(),
            n: None,
            distance: s.2,
            energy_f: s.3,
            energy_h: s.4,
            inside: Some(s.2 < cfg.eps),
            a_factor: Some(s.1.a_factor()),
        })
        .collect();
    let mut witnesses = vec![Witness::element("registration", &reg.g)];
    if let Some(worst) = recorded.iter().max_by(|a, b| a.1.a_factor().total_cmp(&b.1.a_factor())) {
        witnesses.push(Witness::element("hull_extreme", &worst.1));
    }
    Ok(ExperimentReport {
        experiment: "precompact".into(),
        parameters: json!({
            "eps": cfg.eps,
            "sample_budget": cfg.sample_budget,
            "seed": cfg.seed,
            "metric": cfg.metric,
            "bound": cfg.bound,
            "align_budget": cfg.align_budget,
            "mesh_level": f1.mesh().level(),
        }),
        verdict: Verdict::from_bool(escape_recorded == 0),
        summary: json!({
            "recorded": recorded.len(),
            "vacuous": recorded.is_empty(),
            "hull_n": hull_n,
            "max_a_factor": if recorded.is_empty() { None } else { Some(max_a) },
            "mean_a_factor": mean_a,
            "registration_a_factor": reg.g.a_factor(),
            "registration_residual": reg.residual,
            "escape_probed": escape_probed,
            "escape_recorded": escape_recorded,
        }),
        steps,
        witnesses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapspace::{identity_map, power_map};
    use crate::sphere::SphereMesh;
    use num_complex::Complex64;

    #[test]
    fn identity_transporter_is_near_rotations() {
        let m = SphereMesh::shared(3).unwrap();
        let f = identity_map(&m);
        let r = precompact_witness(&f, &f, &PrecompactConfig::new(0.05, 60, 4, Metric::C0)).unwrap();
        assert!(r.verdict.passed());
        assert!(r.summary["recorded"].as_u64().unwrap() > 0);
        assert!(r.summary["max_a_factor"].as_f64().unwrap() < 1.2);
    }

    #[test]
    fn dilated_copy_clusters_at_the_dilation() {
        let m = SphereMesh::shared(3).unwrap();
        let f = power_map(&m, 2).unwrap();
        let g0 = MobiusElement::dilation(Complex64::new(2.25, 0.0));
        let f2 = pullback(&f, &g0).unwrap();
        let r = precompact_witness(&f, &f2, &PrecompactConfig::new(0.1, 60, 5, Metric::C0)).unwrap();
        assert!(r.verdict.passed());
        let mean = r.summary["mean_a_factor"].as_f64().unwrap();
        assert!((mean - 1.5).abs() < 0.1, "{mean}");
    }
}
