//! Population hinge loss, its gradient, and full-batch gradient descent.

use crate::dist::{CubeRule, InputDistribution};
use crate::error::{LabError, Result};
use crate::net::{hinge, Mlp, Workspace};
use serde::{Deserialize, Serialize};

/// A ±1 labelling of the input space.
pub type Target<'a> = dyn Fn(&[f64]) -> f64 + Sync + 'a;

fn check_dims(net: &Mlp, dist: &InputDistribution) -> Result<()> {
    dist.validate()?;
    if net.in_dim() != dist.dim() {
        return Err(LabError::Dimension { expected: net.in_dim(), got: dist.dim() });
    }
    Ok(())
}

/// `E ℓ(f(x), g(x))` over the distribution's support; the sum runs in a
/// fixed order and is divided by the support size once.
pub fn population_hinge_loss(net: &Mlp, target: &Target, dist: &InputDistribution) -> Result<f64> {
    check_dims(net, dist)?;
    let mut sum = 0.0;
    dist.for_each_point(|x| sum += hinge(target(x), net.forward_unchecked(x)))?;
    Ok(sum / dist.len() as f64)
}

/// Loss and the support-averaged hinge subgradient, one sample at a time.
pub fn population_gradient(
    net: &Mlp,
    target: &Target,
    dist: &InputDistribution,
) -> Result<(f64, Vec<f64>)> {
    check_dims(net, dist)?;
    let mut ws = Workspace::default();
    let mut grad = vec![0.0; net.num_params()];
    let mut sum = 0.0;
    dist.for_each_point(|x| sum += net.accumulate_hinge(x, target(x), 1.0, &mut ws, &mut grad))?;
    let n = dist.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((sum / n, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Quadrature used when the input distribution is a cube.
    pub estimator: CubeRule,
}

impl GdConfig {
    /// A zero step is accepted so that the identity run can be expressed.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(LabError::Precondition(format!("learning rate {}", self.learning_rate)));
        }
        if self.iterations < 1 {
            return Err(LabError::Precondition("iteration count must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub param_dist: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: GdConfig,
    pub distribution: InputDistribution,
    /// Iterations `0..=T`; record `t` is measured at `θ_t`.
    pub records: Vec<TrajectoryRecord>,
    pub final_net: Mlp,
}

impl Trajectory {
    pub fn initial_loss(&self) -> f64 {
        self.records[0].loss
    }
    pub fn final_loss(&self) -> f64 {
        self.records.last().unwrap().loss
    }
    pub fn mean_grad_norm(&self) -> f64 {
        self.records.iter().map(|r| r.grad_norm).sum::<f64>() / self.records.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,loss,grad_norm,param_dist\n");
        for r in &self.records {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", r.iter, r.loss, r.grad_norm, r.param_dist));
        }
        s
    }

    /// JSON report with the full configuration; the final network is omitted.
    pub fn to_json_report(&self) -> String {
        serde_json::json!({
            "config": self.config,
            "distribution": self.distribution,
            "initial_loss": self.initial_loss(),
            "final_loss": self.final_loss(),
            "mean_grad_norm": self.mean_grad_norm(),
            "records": self.records,
        })
        .to_string()
    }
}

enum Engine<'a> {
    Samples { dist: InputDistribution, target: &'a Target<'a> },
    Line(Grid1d, &'a Target<'a>),
}

impl Engine<'_> {
    fn eval(&self, net: &Mlp) -> Result<(f64, Vec<f64>)> {
        match self {
            Engine::Samples { dist, target } => population_gradient(net, *target, dist),
            Engine::Line(g, target) => match g.eval(net) {
                Some(r) => Ok(r),
                None => population_gradient(net, *target, &g.dist()),
            },
        }
    }
}

/// Full-batch gradient descent `θ_t = θ_{t-1} - η ∇L(θ_{t-1})` on the
/// population hinge loss.
pub fn gd_train(
    net: &Mlp,
    target: &Target,
    dist: &InputDistribution,
    cfg: &GdConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let dist = match dist {
        InputDistribution::UniformCube { dim, .. } => {
            InputDistribution::UniformCube { dim: *dim, rule: cfg.estimator.clone() }
        }
        other => other.clone(),
    };
    check_dims(net, &dist)?;
    let engine = match &dist {
        InputDistribution::UniformCube { dim: 1, rule: CubeRule::Grid { per_axis } } => {
            Engine::Line(Grid1d::new(*per_axis, target), target)
        }
        _ => Engine::Samples { dist: dist.clone(), target },
    };

    let theta0 = net.params();
    let mut cur = net.clone();
    let mut records = Vec::with_capacity(cfg.iterations + 1);
    for t in 0..=cfg.iterations {
        let (loss, grad) = engine.eval(&cur)?;
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let param_dist = cur
            .params()
            .iter()
            .zip(&theta0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(LabError::NonFinite { iter: t, loss, grad_norm });
        }
        records.push(TrajectoryRecord { iter: t, loss, grad_norm, param_dist });
        if t == cfg.iterations {
            break;
        }
        if cfg.learning_rate != 0.0 {
            step(&mut cur, &grad, cfg.learning_rate);
        }
    }
    Ok(Trajectory { config: cfg.clone(), distribution: dist, records, final_net: cur })
}

fn step(net: &mut Mlp, grad: &[f64], eta: f64) {
    let mut k = 0;
    for l in net.layers_mut() {
        for w in l.weights_mut() {
            *w -= eta * grad[k];
            k += 1;
        }
        for b in l.bias_mut() {
            *b -= eta * grad[k];
            k += 1;
        }
    }
}

/// Exact evaluation of the midpoint-grid quadrature on `[0,1]` for 1-D
/// networks. Inside one linear region of the network (and one hinge phase)
/// the per-point gradient is affine in `x`, so the grid sum reduces to
/// per-class prefix sums of `1` and `x`.
struct Grid1d {
    m: usize,
    pos_cnt: Vec<f64>,
    pos_x: Vec<f64>,
    neg_cnt: Vec<f64>,
    neg_x: Vec<f64>,
}

struct Region {
    lo: f64,
    hi: f64,
    /// Affine form `(alpha, beta)` of each layer's input.
    inputs: Vec<(Vec<f64>, Vec<f64>)>,
    masks: Vec<Vec<bool>>,
    a: f64,
    c: f64,
}

impl Grid1d {
    fn new(m: usize, target: &Target) -> Self {
        let mut g = Grid1d {
            m,
            pos_cnt: vec![0.0],
            pos_x: vec![0.0],
            neg_cnt: vec![0.0],
            neg_x: vec![0.0],
        };
        let (mut pc, mut px, mut nc, mut nx) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..m {
            let x = g.x(i);
            let y = target(&[x]);
            if y > 0.0 {
                pc += 1.0;
                px += x;
            } else {
                nc += 1.0;
                nx += x;
            }
            g.pos_cnt.push(pc);
            g.pos_x.push(px);
            g.neg_cnt.push(nc);
            g.neg_x.push(nx);
        }
        g
    }

    fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.m as f64
    }

    fn dist(&self) -> InputDistribution {
        InputDistribution::UniformCube { dim: 1, rule: CubeRule::Grid { per_axis: self.m } }
    }

    /// First index in `[i0, i1)` where a monotone false→true predicate holds.
    fn first_true(&self, i0: usize, i1: usize, pred: impl Fn(f64) -> bool) -> usize {
        let (mut lo, mut hi) = (i0, i1);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if pred(self.x(mid)) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }

    fn regions(&self, net: &Mlp) -> Option<Vec<Region>> {
        let cap = (self.m / 4).max(64);
        let mut parts = vec![Region {
            lo: 0.0,
            hi: 1.0,
            inputs: Vec::new(),
            masks: Vec::new(),
            a: 1.0,
            c: 0.0,
        }];
        let mut cur: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![1.0], vec![0.0])];
        let depth = net.depth();
        for (li, layer) in net.layers().iter().enumerate() {
            let mut next_parts = Vec::with_capacity(parts.len());
            let mut next_cur = Vec::with_capacity(parts.len());
            for (mut part, (alpha, beta)) in parts.into_iter().zip(cur) {
                let rows = layer.rows();
                let mut za = vec![0.0; rows];
                let mut zc = layer.bias().to_vec();
                for i in 0..rows {
                    let r = layer.row(i);
                    for j in 0..layer.cols() {
                        za[i] += r[j] * alpha[j];
                        zc[i] += r[j] * beta[j];
                    }
                }
                if li + 1 == depth {
                    part.a = za[0];
                    part.c = zc[0];
                    part.inputs.push((alpha, beta));
                    next_parts.push(part);
                    continue;
                }
                let mut cuts: Vec<f64> = (0..rows)
                    .filter(|&i| za[i] != 0.0)
                    .map(|i| -zc[i] / za[i])
                    .filter(|&r| r > part.lo && r < part.hi)
                    .collect();
                cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                cuts.dedup();
                let mut bounds = Vec::with_capacity(cuts.len() + 2);
                bounds.push(part.lo);
                bounds.extend(cuts);
                bounds.push(part.hi);
                for w in bounds.windows(2) {
                    let mid = 0.5 * (w[0] + w[1]);
                    let mask: Vec<bool> = (0..rows).map(|i| za[i] * mid + zc[i] >= 0.0).collect();
                    let na = (0..rows).map(|i| if mask[i] { za[i] } else { 0.0 }).collect();
                    let nb = (0..rows).map(|i| if mask[i] { zc[i] } else { 0.0 }).collect();
                    let mut inputs = part.inputs.clone();
                    inputs.push((alpha.clone(), beta.clone()));
                    let mut masks = part.masks.clone();
                    masks.push(mask);
                    next_parts.push(Region { lo: w[0], hi: w[1], inputs, masks, a: 0.0, c: 0.0 });
                    next_cur.push((na, nb));
                }
                if next_parts.len() > cap {
                    return None;
                }
            }
            parts = next_parts;
            cur = next_cur;
        }
        Some(parts)
    }

    /// `None` when the network has too many linear regions for the
    /// region sweep to beat point-by-point evaluation.
    fn eval(&self, net: &Mlp) -> Option<(f64, Vec<f64>)> {
        let regions = self.regions(net)?;
        let mut grad = vec![0.0; net.num_params()];
        let mut offsets = Vec::new();
        let mut k = 0;
        for l in net.layers() {
            offsets.push(k);
            k += l.num_params();
        }
        let mut loss = 0.0;
        let nreg = regions.len();
        let mut i0 = 0;
        for (ri, reg) in regions.iter().enumerate() {
            let i1 = if ri + 1 == nreg { self.m } else { self.first_true(i0, self.m, |x| x >= reg.hi) };
            let (a, c) = (reg.a, reg.c);
            let (p0, p1) = if a > 0.0 {
                (i0, self.first_true(i0, i1, |x| !(a * x + c <= 1.0)))
            } else if a < 0.0 {
                (self.first_true(i0, i1, |x| a * x + c <= 1.0), i1)
            } else if c <= 1.0 {
                (i0, i1)
            } else {
                (i0, i0)
            };
            let (n0, n1) = if a > 0.0 {
                (self.first_true(i0, i1, |x| a * x + c >= -1.0), i1)
            } else if a < 0.0 {
                (i0, self.first_true(i0, i1, |x| !(a * x + c >= -1.0)))
            } else if c >= -1.0 {
                (i0, i1)
            } else {
                (i0, i0)
            };
            let pc = self.pos_cnt[p1] - self.pos_cnt[p0];
            let px = self.pos_x[p1] - self.pos_x[p0];
            let nc = self.neg_cnt[n1] - self.neg_cnt[n0];
            let nx = self.neg_x[n1] - self.neg_x[n0];
            loss += (pc + nc) - a * (px - nx) - c * (pc - nc);
            // Σ over active points of dℓ/dg = -y, and of -y·x.
            let s0 = nc - pc;
            let s1 = nx - px;
            if s0 != 0.0 || s1 != 0.0 {
                accumulate_region(net, reg, &offsets, s0, s1, &mut grad);
            }
            i0 = i1;
        }
        let m = self.m as f64;
        grad.iter_mut().for_each(|g| *g /= m);
        Some((loss / m, grad))
    }
}

fn accumulate_region(net: &Mlp, reg: &Region, offsets: &[usize], s0: f64, s1: f64, grad: &mut [f64]) {
    let layers = net.layers();
    let mut delta = vec![1.0];
    for li in (0..layers.len()).rev() {
        let l = &layers[li];
        let (alpha, beta) = &reg.inputs[li];
        let off = offsets[li];
        let coef: Vec<f64> = (0..l.cols()).map(|j| s0 * beta[j] + s1 * alpha[j]).collect();
        for i in 0..l.rows() {
            let d = delta[i];
            if d == 0.0 {
                continue;
            }
            for j in 0..l.cols() {
                grad[off + i * l.cols() + j] += d * coef[j];
            }
            grad[off + l.weights().len() + i] += d * s0;
        }
        if li == 0 {
            break;
        }
        let mask = &reg.masks[li - 1];
        let mut next = vec![0.0; l.cols()];
        for i in 0..l.rows() {
            let r = l.row(i);
            for j in 0..l.cols() {
                next[j] += r[j] * delta[i];
            }
        }
        for j in 0..l.cols() {
            if !mask[j] {
                next[j] = 0.0;
            }
        }
        delta = next;
    }
}
