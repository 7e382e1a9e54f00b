//! Empirical Lipschitz audit of an initialization: how fast the output moves
//! with the weights near `θ_0`, and how regular the parameter gradient is in
//! the input.
//!
//! Only weights are perturbed; biases stay at their initial values. Probe
//! parameters sit on a ladder of radii `ρ, ρ/2, ρ/4, ...` down to a fixed
//! floor, and each rung's directions are seeded by the rung's radius, so a
//! larger `ρ` audits a superset of the points a smaller one does.

use crate::error::{LabError, Result};
use crate::net::Mlp;
use crate::seed;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const RADIUS_FLOOR: f64 = 1.0 / 1024.0;
pub const DIRECTIONS_PER_RUNG: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialAudit {
    pub l_theta: f64,
    pub l_x: f64,
    pub l_sup: f64,
    /// Largest parameter ratio divided by `‖x‖` over the probes.
    pub max_ratio_over_norm: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LStandardReport {
    pub rho: f64,
    pub trials: usize,
    pub probe_count: usize,
    pub slack: f64,
    /// Threshold on ratio / `‖x‖`: `1.1 · slack`.
    pub threshold: f64,
    pub l_theta: f64,
    pub l_x: f64,
    pub l_sup: f64,
    pub pass_fraction: f64,
    pub per_trial: Vec<TrialAudit>,
}

/// `|g_θ(x) - g_θ'(x)| / ‖θ - θ'‖`.
pub fn probe_param_ratio(net: &Mlp, x: &[f64], theta: &[f64], theta2: &[f64]) -> Result<f64> {
    let dist = theta.iter().zip(theta2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if dist == 0.0 {
        return Err(LabError::Domain("coincident parameter points".into()));
    }
    let mut a = net.clone();
    a.set_params(theta)?;
    let mut b = net.clone();
    b.set_params(theta2)?;
    Ok((a.forward(x)? - b.forward(x)?).abs() / dist)
}

fn weight_mask(net: &Mlp) -> Vec<bool> {
    let mut m = vec![false; net.num_params()];
    for r in net.weight_ranges() {
        m[r].iter_mut().for_each(|v| *v = true);
    }
    m
}

/// Parameter points `θ_0` and `θ_0 + r u` for every rung `r` of the ladder.
fn ladder(net: &Mlp, rho: f64, trial_seed: u64) -> Vec<Vec<f64>> {
    let theta0 = net.params();
    let mask = weight_mask(net);
    let mut points = vec![theta0.clone()];
    let mut r = rho;
    while r >= RADIUS_FLOOR {
        for a in 0..DIRECTIONS_PER_RUNG {
            let mut rng = seed::rng(seed::derive_indexed(trial_seed, &format!("rung-{:016x}", r.to_bits()), a));
            let mut u: Vec<f64> =
                mask.iter().map(|&w| if w { rng.sample::<f64, _>(StandardNormal) } else { 0.0 }).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter_mut().for_each(|v| *v *= r / norm);
            points.push(theta0.iter().zip(&u).map(|(t, d)| t + d).collect());
        }
        r /= 2.0;
    }
    points
}

pub fn audit_l_standard(
    factory: &dyn Fn(u64) -> Result<Mlp>,
    rho: f64,
    trials: usize,
    probe_count: usize,
    seed: u64,
) -> Result<LStandardReport> {
    audit_l_standard_with_slack(factory, rho, trials, probe_count, seed, 1.05)
}

pub fn audit_l_standard_with_slack(
    factory: &dyn Fn(u64) -> Result<Mlp>,
    rho: f64,
    trials: usize,
    probe_count: usize,
    seed: u64,
    slack: f64,
) -> Result<LStandardReport> {
    if !(rho > 0.0) || trials == 0 || probe_count < 2 {
        return Err(LabError::Precondition(format!(
            "audit needs rho > 0, trials >= 1, probe_count >= 2 (got {rho}, {trials}, {probe_count})"
        )));
    }
    let threshold = 1.1 * slack;
    let mut per_trial = Vec::with_capacity(trials);
    for t in 0..trials as u64 {
        let base = factory(seed::derive_indexed(seed, "net", t))?;
        let d = base.in_dim();
        let mask = weight_mask(&base);
        let mut rng = seed::rng(seed::derive_indexed(seed, "probe", t));
        let xs: Vec<Vec<f64>> = (0..probe_count).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let points = ladder(&base, rho, seed::derive_indexed(seed, "ladder", t));

        let mut outputs = vec![vec![0.0; xs.len()]; points.len()];
        let mut l_theta: f64 = 0.0;
        let mut l_x: f64 = 0.0;
        let mut l_sup: f64 = 0.0;
        let mut worst: f64 = 0.0;
        let mut net = base.clone();
        for (p, theta) in points.iter().enumerate() {
            net.set_params(theta)?;
            let grads: Vec<Vec<f64>> = xs
                .iter()
                .map(|x| {
                    net.grad_output(x)
                        .map(|g| g.into_iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| v).collect())
                })
                .collect::<Result<_>>()?;
            for (k, x) in xs.iter().enumerate() {
                outputs[p][k] = net.forward(x)?;
                let gnorm = grads[k].iter().map(|v| v * v).sum::<f64>().sqrt();
                let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                l_theta = l_theta.max(gnorm);
                worst = worst.max(gnorm / xnorm);
                l_sup = grads[k].iter().fold(l_sup, |m, v| m.max(v.abs()));
            }
            for a in 0..xs.len() {
                for b in a + 1..xs.len() {
                    let dx = xs[a].iter().zip(&xs[b]).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
                    let dg = grads[a].iter().zip(&grads[b]).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
                    if dx > 0.0 {
                        l_x = l_x.max(dg / dx);
                    }
                }
            }
        }
        for p in 0..points.len() {
            for q in p + 1..points.len() {
                let dist = points[p]
                    .iter()
                    .zip(&points[q])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                for (k, x) in xs.iter().enumerate() {
                    let ratio = (outputs[p][k] - outputs[q][k]).abs() / dist;
                    let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    l_theta = l_theta.max(ratio);
                    worst = worst.max(ratio / xnorm);
                }
            }
        }
        per_trial.push(TrialAudit { l_theta, l_x, l_sup, max_ratio_over_norm: worst, pass: worst <= threshold });
    }
    let pass = per_trial.iter().filter(|t| t.pass).count();
    let max = |f: fn(&TrialAudit) -> f64| per_trial.iter().map(f).fold(0.0f64, f64::max);
    Ok(LStandardReport {
        rho,
        trials,
        probe_count,
        slack,
        threshold,
        l_theta: max(|t| t.l_theta),
        l_x: max(|t| t.l_x),
        l_sup: max(|t| t.l_sup),
        pass_fraction: pass as f64 / trials as f64,
        per_trial,
    })
}
