use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Metric, ProperError};
use crate::mapspace::{pullback, DiscreteMap};
use crate::mobius::{random_element_with, GroupFamily, MobiusElement};

/// Best element found by [`align`] and its residual in the requested metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignResult {
    pub g: MobiusElement,
    pub residual: f64,
    pub metric: Metric,
    pub evaluations: usize,
}

fn basis_step(i: usize, s: f64) -> MobiusElement {
    let mut theta = [0.0; 6];
    theta[i / 2] = if i % 2 == 0 { s } else { -s };
    MobiusElement::lie_exp(theta)
}

/// Compass search over right translates `g·exp(±s Bᵢ)` of the six Lie algebra
/// directions; each sweep evaluates all twelve neighbours and moves to the best.
pub(crate) fn compass<F>(
    eval: &F,
    start: (MobiusElement, f64),
    step: (f64, f64),
    budget: usize,
) -> Result<((MobiusElement, f64), usize), ProperError>
where
    F: Fn(&MobiusElement) -> Result<f64, ProperError> + Sync,
{
    let (mut s, s_min) = step;
    let mut best = start;
    let mut used = 0;
    while s >= s_min && used + 12 <= budget {
        let trials: Vec<MobiusElement> = (0..12).map(|i| best.0.compose(&basis_step(i, s))).collect();
        let vals = trials.par_iter().map(eval).collect::<Result<Vec<f64>, _>>()?;
        used += 12;
        let (k, v) = vals
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("twelve trials");
        if v < best.1 {
            best = (trials[k], v);
        } else {
            s *= 0.5;
        }
    }
    Ok((best, used))
}

fn solve_normal(mut a: [[f64; 6]; 6], mut b: [f64; 6]) -> Option<[f64; 6]> {
    for col in 0..6 {
        let piv = (col..6).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[piv][col].abs() > 1e-300) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..6 {
            let m = a[row][col] / a[col][col];
            for k in col..6 {
                a[row][k] -= m * a[col][k];
            }
            b[row] -= m * b[col];
        }
    }
    let mut x = [0.0; 6];
    for row in (0..6).rev() {
        let s: f64 = (row + 1..6).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Weighted residual vector `√wᵢ (f(g(pᵢ)) - h(pᵢ))`.
fn residual_vector(f: &DiscreteMap, h: &DiscreteMap, g: &MobiusElement) -> Result<Vec<f64>, ProperError> {
    let k = pullback(f, g)?;
    let w = f.mesh().vertex_weights();
    let dim = f.dim();
    let (kv, hv) = (&k.values().data, &h.values().data);
    Ok((0..kv.len()).map(|j| w[j / dim].sqrt() * (kv[j] - hv[j])).collect())
}

const LM_FD_STEP: f64 = 1e-6;

/// Levenberg-Marquardt on the `L²` residual over right translates `g·exp(θ)`,
/// with a forward-difference Jacobian. Returns the end point, its `L²`
/// distance and the number of pullbacks used.
pub(crate) fn lm_refine(
    f: &DiscreteMap,
    h: &DiscreteMap,
    start: MobiusElement,
    max_evals: usize,
) -> Result<((MobiusElement, f64), usize), ProperError> {
    let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut g = start;
    let mut r = residual_vector(f, h, &g)?;
    let mut cost = norm(&r);
    let mut used = 1;
    let mut lambda = 1e-3;
    while used + 7 <= max_evals && cost > 0.0 {
        let cols = (0..6)
            .into_par_iter()
            .map(|i| {
                let mut theta = [0.0; 6];
                theta[i] = LM_FD_STEP;
                let rp = residual_vector(f, h, &g.compose(&MobiusElement::lie_exp(theta)))?;
                Ok(rp.iter().zip(&r).map(|(a, b)| (a - b) / LM_FD_STEP).collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>, ProperError>>()?;
        used += 6;
        let mut jtj = [[0.0; 6]; 6];
        let mut jtr = [0.0; 6];
        for i in 0..6 {
            jtr[i] = cols[i].iter().zip(&r).map(|(a, b)| a * b).sum();
            for j in i..6 {
                let v: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                jtj[i][j] = v;
                jtj[j][i] = v;
            }
        }
        let mut improved = false;
        while used < max_evals && lambda < 1e8 {
            let mut a = jtj;
            for i in 0..6 {
                a[i][i] += lambda * jtj[i][i].max(1e-12);
            }
            let Some(step) = solve_normal(a, jtr.map(|x| -x)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = g.compose(&MobiusElement::lie_exp(step));
            let rt = residual_vector(f, h, &trial)?;
            used += 1;
            let ct = norm(&rt);
            if ct < cost {
                let gain = (cost - ct) / cost;
                g = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-9);
                improved = gain > 1e-10;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    Ok(((g, cost), used))
}

/// Approximately minimizes `d(f∘g, h)` over the full Möbius group:
/// Levenberg-Marquardt in the `L²` distance from the identity and from random
/// starts in `K_4`, then a compass polish in the requested metric.
pub fn align(f: &DiscreteMap, h: &DiscreteMap, metric: Metric, budget: usize, seed: u64) -> Result<AlignResult, ProperError> {
    if budget == 0 {
        return Err(ProperError::BadBudget);
    }
    f.check_compatible(h)?;
    let l2 = |g: &MobiusElement| -> Result<f64, ProperError> { Ok(Metric::L2.distance(&pullback(f, g)?, h)?) };
    let target = |g: &MobiusElement| -> Result<f64, ProperError> { Ok(metric.distance(&pullback(f, g)?, h)?) };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_starts = (budget / 50).clamp(2, 16);
    let mut starts = vec![MobiusElement::identity()];
    for _ in 1..n_starts {
        starts.push(random_element_with(4.0, GroupFamily::G0, &mut rng)?);
    }
    let vals = starts.par_iter().map(l2).collect::<Result<Vec<f64>, _>>()?;
    let mut used = starts.len();
    let mut order: Vec<usize> = (0..starts.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
    let keep = order.len().min(3);

    let polish_share = if metric == Metric::L2 { 0 } else { (budget / 4).max(48) };
    let per_start = budget.saturating_sub(used + polish_share) / keep;
    let mut ends = Vec::with_capacity(keep);
    for &i in order.iter().take(keep) {
        let (end, u) = lm_refine(f, h, starts[i], per_start.max(30))?;
        used += u;
        ends.push(end);
    }
    ends.sort_by(|a, b| a.1.total_cmp(&b.1));

    let (best, u) = if metric == Metric::L2 {
        (ends[0], 0)
    } else {
        let v0 = target(&ends[0].0)?;
        used += 1;
        compass(&target, (ends[0].0, v0), (0.01, 1e-5), polish_share)?
    };
    used += u;
    Ok(AlignResult { g: best.0, residual: best.1, metric, evaluations: used })
}
