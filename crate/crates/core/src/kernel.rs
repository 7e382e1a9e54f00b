//! Bounded-norm linear predictors over tabulated feature maps: exact
//! finite-sum hinge minimization, the almost-orthogonality hardness bound,
//! and the rounding reduction from depth-2 networks on `(x, z)` to a fixed
//! feature map in `x`.

use crate::dist::InputDistribution;
use crate::error::{LabError, Result};
use crate::net::{hinge, relu, Mlp};
use crate::seed;
use crate::sq::{certify_sqdim, support_indices, BooleanFn};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// `Ψ` tabulated over an enumerated support: one row of `dim()` values in
/// `[-1, 1]` per support point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    n_features: usize,
    table: Vec<f64>,
}

impl FeatureMap {
    pub fn from_flat(n_features: usize, table: Vec<f64>) -> Result<Self> {
        if n_features == 0 || table.is_empty() || table.len() % n_features != 0 {
            return Err(LabError::Domain(format!(
                "feature table of {} values is not a positive multiple of N={n_features}",
                table.len()
            )));
        }
        if let Some(v) = table.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(LabError::Domain(format!("feature value {v} outside [-1, 1]")));
        }
        Ok(FeatureMap { n_features, table })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(LabError::Domain("ragged feature rows".into()));
        }
        Self::from_flat(n, rows.concat())
    }

    /// Tabulates `f(x, out)` over the support of `dist`.
    pub fn from_fn(dist: &InputDistribution, n_features: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let mut table = Vec::with_capacity(dist.len() * n_features);
        let mut row = vec![0.0; n_features];
        dist.for_each_point(|x| {
            f(x, &mut row);
            table.extend_from_slice(&row);
        })?;
        Self::from_flat(n_features, table)
    }

    /// Independent uniform ±1 entries.
    pub fn random_signs(points: usize, n_features: usize, seed: u64) -> Result<Self> {
        let mut rng = seed::rng(seed);
        let table = (0..points * n_features).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        Self::from_flat(n_features, table)
    }

    pub fn dim(&self) -> usize {
        self.n_features
    }
    pub fn points(&self) -> usize {
        self.table.len() / self.n_features
    }
    pub fn row(&self, k: usize) -> &[f64] {
        &self.table[k * self.n_features..(k + 1) * self.n_features]
    }

    /// `⟨Ψ(x_k), w⟩` for every support point.
    pub fn predict(&self, w: &[f64]) -> Vec<f64> {
        (0..self.points()).map(|k| self.row(k).iter().zip(w).map(|(a, b)| a * b).sum()).collect()
    }
}

/// `Ψ(x) = (f_1(x), ..., f_q(x))`.
pub fn feature_map_from_family(family: &[BooleanFn], dist: &InputDistribution) -> Result<FeatureMap> {
    if family.is_empty() {
        return Err(LabError::Precondition("empty family".into()));
    }
    let idx = support_indices(dist)?;
    let mut table = Vec::with_capacity(idx.len() * family.len());
    for &i in &idx {
        for f in family {
            if f.arity() != dist.dim() {
                return Err(LabError::Dimension { expected: dist.dim(), got: f.arity() });
            }
            table.push(f.value(i));
        }
    }
    FeatureMap::from_flat(family.len(), table)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSolver {
    /// Log-barrier interior point on `(w, ξ)`, stopped by the duality gap.
    Barrier { gap_tol: f64 },
    /// Projected subgradient, `η_t = B/(√N √t)`, iterate averaging.
    Subgradient { iterations: usize, window: usize },
}

impl Default for KernelSolver {
    fn default() -> Self {
        KernelSolver::Barrier { gap_tol: 1e-4 }
    }
}

impl KernelSolver {
    pub fn subgradient_default() -> Self {
        KernelSolver::Subgradient { iterations: 100_000, window: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveCertificate {
    /// Dual value `mean(α) - B‖(1/S) Σ α_s y_s Ψ(x_s)‖`, a lower bound on the optimum.
    pub lower_bound: f64,
    pub gap: f64,
    pub iterations: usize,
    pub regret_bound: Option<f64>,
    pub final_step_norm: Option<f64>,
    pub window_decrease: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSolveResult {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    pub norm: f64,
    pub bound: f64,
    pub loss: f64,
    pub solver: KernelSolver,
    pub certificate: SolveCertificate,
    pub lambda: Option<f64>,
}

const W_SERIALIZE_CAP: usize = 10_000;

impl KernelSolveResult {
    pub fn weights(&self) -> &[f64] {
        self.w.as_deref().unwrap_or(&[])
    }

    pub fn to_json(&self) -> String {
        let mut r = self.clone();
        if r.w.as_ref().is_some_and(|w| w.len() > W_SERIALIZE_CAP) {
            r.w = None;
        }
        serde_json::to_string_pretty(&r).expect("solve result serializes")
    }
}

fn labels_for(target: &BooleanFn, dist: &InputDistribution) -> Result<Vec<f64>> {
    if target.arity() != dist.dim() {
        return Err(LabError::Dimension { expected: dist.dim(), got: target.arity() });
    }
    Ok(support_indices(dist)?.iter().map(|&i| target.value(i)).collect())
}

/// Rows `y_s Ψ(x_s)`.
fn signed_design(psi: &FeatureMap, labels: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(labels.len(), psi.dim(), |s, i| labels[s] * psi.row(s)[i])
}

fn mean_hinge(margins: &DVector<f64>) -> f64 {
    margins.iter().map(|&m| hinge(1.0, m)).sum::<f64>() / margins.len() as f64
}

fn dual_value(a: &DMatrix<f64>, b: f64, alpha: &DVector<f64>) -> f64 {
    let s = a.nrows() as f64;
    alpha.sum() / s - b * (a.tr_mul(alpha) / s).norm()
}

/// Best dual value over a candidate multiplier and the indicator of margins
/// below one.
fn certify(a: &DMatrix<f64>, b: f64, w: &DVector<f64>, candidate: Option<DVector<f64>>) -> (f64, f64) {
    let m = a * w;
    let primal = mean_hinge(&m);
    let active = m.map(|v| if v < 1.0 { 1.0 } else { 0.0 });
    let mut lower = dual_value(a, b, &active);
    if let Some(c) = candidate {
        lower = lower.max(dual_value(a, b, &c));
    }
    (primal, lower)
}

fn project(w: &mut DVector<f64>, b: f64) {
    let n = w.norm();
    if n > b {
        *w *= b / n;
    }
}

/// `min_{‖w‖ ≤ B} E_{x∼D}[max(0, 1 - f(x)⟨Ψ(x), w⟩)]`.
pub fn min_hinge(
    psi: &FeatureMap,
    b: f64,
    target: &BooleanFn,
    dist: &InputDistribution,
    solver: &KernelSolver,
) -> Result<KernelSolveResult> {
    let labels = labels_for(target, dist)?;
    min_hinge_labels(psi, b, &labels, solver)
}

/// As [`min_hinge`], with ±1 labels given per support point.
pub fn min_hinge_labels(psi: &FeatureMap, b: f64, labels: &[f64], solver: &KernelSolver) -> Result<KernelSolveResult> {
    if labels.is_empty() {
        return Err(LabError::Domain("empty support".into()));
    }
    if labels.len() != psi.points() {
        return Err(LabError::Dimension { expected: psi.points(), got: labels.len() });
    }
    if !(b >= 0.0 && b.is_finite()) {
        return Err(LabError::Precondition(format!("norm bound {b} must be finite and >= 0")));
    }
    let n = psi.dim();
    if b == 0.0 {
        return Ok(KernelSolveResult {
            w: Some(vec![0.0; n]),
            norm: 0.0,
            bound: b,
            loss: 1.0,
            solver: solver.clone(),
            certificate: SolveCertificate {
                lower_bound: 1.0,
                gap: 0.0,
                iterations: 0,
                regret_bound: None,
                final_step_norm: None,
                window_decrease: None,
            },
            lambda: None,
        });
    }
    let a = signed_design(psi, labels);
    let (w, certificate) = match solver {
        KernelSolver::Barrier { gap_tol } => barrier(&a, b, *gap_tol)?,
        KernelSolver::Subgradient { iterations, window } => subgradient(&a, b, *iterations, *window)?,
    };
    let loss = mean_hinge(&(&a * &w));
    Ok(KernelSolveResult {
        norm: w.norm(),
        w: Some(w.iter().copied().collect()),
        bound: b,
        loss,
        solver: solver.clone(),
        certificate,
        lambda: None,
    })
}

fn barrier(a: &DMatrix<f64>, b: f64, gap_tol: f64) -> Result<(DVector<f64>, SolveCertificate)> {
    let (s, n) = a.shape();
    let sf = s as f64;
    let b2 = b * b;
    let constraints = (2 * s + 1) as f64;
    // Products with the transpose go through gemm, which is much faster than tr_mul.
    let at = a.transpose();
    let mut w = DVector::zeros(n);
    let mut xi = DVector::from_element(s, 2.0);
    let mut t = constraints;
    let mut steps = 0;

    let phi = |t: f64, w: &DVector<f64>, xi: &DVector<f64>| -> f64 {
        let gb = b2 - w.norm_squared();
        if gb <= 0.0 {
            return f64::INFINITY;
        }
        let m = a * w;
        let mut v = t * xi.sum() / sf - gb.ln();
        for k in 0..s {
            let r = xi[k] + m[k] - 1.0;
            if xi[k] <= 0.0 || r <= 0.0 {
                return f64::INFINITY;
            }
            v -= xi[k].ln() + r.ln();
        }
        v
    };

    let mut best = (f64::INFINITY, f64::NEG_INFINITY, w.clone());
    for _outer in 0..80 {
        for _ in 0..200 {
            steps += 1;
            let m = a * &w;
            let r = &xi + &m - DVector::from_element(s, 1.0);
            let gb = b2 - w.norm_squared();
            let g_xi = DVector::from_fn(s, |k, _| t / sf - 1.0 / xi[k] - 1.0 / r[k]);
            let inv_r = r.map(|v| 1.0 / v);
            let g_w = -(&at * &inv_r) + &w * (2.0 / gb);
            let c = DVector::from_fn(s, |k, _| 1.0 / (r[k] * r[k] + xi[k] * xi[k]));
            let q = DVector::from_fn(s, |k, _| g_xi[k] * xi[k] * xi[k] / (xi[k] * xi[k] + r[k] * r[k]));
            let mut scaled = at.clone();
            for (k, mut col) in scaled.column_iter_mut().enumerate() {
                col *= c[k];
            }
            let mut mat = &scaled * a;
            for i in 0..n {
                mat[(i, i)] += 2.0 / gb;
            }
            mat += &w * w.transpose() * (4.0 / (gb * gb));
            let rhs = -&g_w + &at * &q;
            let chol = mat
                .cholesky()
                .ok_or_else(|| LabError::Assertion("barrier Newton system is not positive definite".into()))?;
            let dw = chol.solve(&rhs);
            let da = a * &dw;
            let dxi = DVector::from_fn(s, |k, _| {
                let d = 1.0 / (xi[k] * xi[k]) + 1.0 / (r[k] * r[k]);
                (-g_xi[k] - da[k] / (r[k] * r[k])) / d
            });
            let dec = -(g_w.dot(&dw) + g_xi.dot(&dxi));
            if !dec.is_finite() {
                return Err(LabError::NonFinite { iter: steps, loss: f64::NAN, grad_norm: f64::NAN });
            }
            if dec / 2.0 < 1e-10 {
                break;
            }
            let mut amax: f64 = 1.0;
            for k in 0..s {
                if dxi[k] < 0.0 {
                    amax = amax.min(-xi[k] / dxi[k]);
                }
                let dr = dxi[k] + da[k];
                if dr < 0.0 {
                    amax = amax.min(-r[k] / dr);
                }
            }
            // ‖w + α dw‖² = B² solved for the positive root.
            let qa = dw.norm_squared();
            if qa > 0.0 {
                let qb = 2.0 * w.dot(&dw);
                let root = (-qb + (qb * qb + 4.0 * qa * gb).sqrt()) / (2.0 * qa);
                amax = amax.min(root);
            }
            let mut alpha = if amax < 1.0 { 0.99 * amax } else { 1.0 };
            let cur = phi(t, &w, &xi);
            let mut accepted = false;
            for _ in 0..60 {
                let nw = &w + &dw * alpha;
                let nxi = &xi + &dxi * alpha;
                if phi(t, &nw, &nxi) <= cur - 0.01 * alpha * dec {
                    w = nw;
                    xi = nxi;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let m = a * &w;
        let alpha = DVector::from_fn(s, |k, _| (sf / (t * (xi[k] + m[k] - 1.0))).clamp(0.0, 1.0));
        let (primal, lower) = certify(a, b, &w, Some(alpha));
        if primal - lower < best.0 - best.1 {
            best = (primal, lower, w.clone());
        }
        if primal - lower <= gap_tol || constraints / t < 1e-12 {
            break;
        }
        t *= 20.0;
    }
    let (primal, lower, w) = best;
    Ok((
        w,
        SolveCertificate {
            lower_bound: lower,
            gap: primal - lower,
            iterations: steps,
            regret_bound: None,
            final_step_norm: None,
            window_decrease: None,
        },
    ))
}

fn subgradient(a: &DMatrix<f64>, b: f64, iterations: usize, window: usize) -> Result<(DVector<f64>, SolveCertificate)> {
    if iterations == 0 || window > iterations {
        return Err(LabError::Precondition(format!("need 0 <= window <= iterations, iterations >= 1 (T={iterations}, window={window})")));
    }
    let (s, n) = a.shape();
    let sf = s as f64;
    let nf = n as f64;
    let mut w = DVector::zeros(n);
    let mut sum = DVector::zeros(n);
    let mut step_norm = 0.0;
    let mut checkpoint = None;
    for t in 1..=iterations {
        sum += &w;
        if t == iterations - window && window > 0 {
            checkpoint = Some(mean_hinge(&(a * (&sum / t as f64))));
        }
        let m = a * &w;
        let active = m.map(|v| if v < 1.0 { 1.0 } else { 0.0 });
        let g = -a.tr_mul(&active) / sf;
        let eta = b / (nf.sqrt() * (t as f64).sqrt());
        let mut next = &w - g * eta;
        project(&mut next, b);
        step_norm = (&next - &w).norm();
        w = next;
    }
    let avg = sum / iterations as f64;
    let final_loss = mean_hinge(&(a * &avg));
    let (primal, lower) = certify(a, b, &avg, None);
    Ok((
        avg,
        SolveCertificate {
            lower_bound: lower,
            gap: primal - lower,
            iterations,
            regret_bound: Some(b * nf.sqrt() / (iterations as f64).sqrt()),
            final_step_norm: Some(step_norm),
            window_decrease: checkpoint.map(|c| c - final_loss),
        },
    ))
}

/// Exhaustive search over a grid of spacing `resolution` in `[-B, B]^N`,
/// with points outside the ball pulled radially onto it. `N <= 3`.
pub fn grid_search_min_hinge(psi: &FeatureMap, b: f64, labels: &[f64], resolution: f64) -> Result<(f64, Vec<f64>)> {
    let n = psi.dim();
    if n > 3 {
        return Err(LabError::Precondition(format!("grid search needs N <= 3 (N={n})")));
    }
    if labels.len() != psi.points() || !(resolution > 0.0) {
        return Err(LabError::Precondition("grid search needs matching labels and positive resolution".into()));
    }
    let k = (b / resolution).floor() as i64;
    let axis: Vec<f64> = (-k..=k).map(|i| i as f64 * resolution).chain([-b, b]).collect();
    let a = signed_design(psi, labels);
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let total = axis.len().pow(n as u32);
    let mut w = DVector::zeros(n);
    for code in 0..total {
        let mut c = code;
        for i in 0..n {
            w[i] = axis[c % axis.len()];
            c /= axis.len();
        }
        project(&mut w, b);
        let loss = mean_hinge(&(&a * &w));
        if loss < best.0 {
            best = (loss, w.iter().copied().collect());
        }
    }
    Ok(best)
}

/// Constant variants of the almost-orthogonality hardness bound, each clamped at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardnessVariants {
    /// `1 - √(2√5 N) B / d^{1/12}`
    pub proof_end: f64,
    /// `1 - √(5N) B / d^{1/12}`
    pub statement: f64,
    /// `1 - √(5N) B / d^{1/5}`
    pub exponent_one_fifth: f64,
}

/// `d` is real-valued so that family sizes beyond `usize` can be evaluated.
pub fn hardness_bound(n_features: usize, b: f64, d: f64) -> f64 {
    (1.0 - (2.0 * 5f64.sqrt() * n_features as f64).sqrt() * b / d.powf(1.0 / 12.0)).max(0.0)
}

pub fn hardness_variants(n_features: usize, b: f64, d: f64) -> HardnessVariants {
    let nf = n_features as f64;
    let df = d;
    HardnessVariants {
        proof_end: hardness_bound(n_features, b, d),
        statement: (1.0 - (5.0 * nf).sqrt() * b / df.powf(1.0 / 12.0)).max(0.0),
        exponent_one_fifth: (1.0 - (5.0 * nf).sqrt() * b / df.powf(0.2)).max(0.0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearHardnessReport {
    pub n_features: usize,
    pub b: f64,
    pub d: usize,
    pub losses: Vec<f64>,
    pub average_loss: f64,
    pub bound: f64,
    pub variants: HardnessVariants,
    pub slack: f64,
    pub vacuous: bool,
    pub max_gap: f64,
    /// `E_j ‖∇G_j(0)‖²` and the `5N/d^{1/3}` ceiling it is compared with.
    pub mean_sq_grad_at_zero: f64,
    pub grad_sq_ceiling: f64,
}

impl LinearHardnessReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("target_id,loss,bound,slack\n");
        for (j, l) in self.losses.iter().enumerate() {
            s.push_str(&format!("{j},{l},{},{}\n", self.bound, l - self.bound));
        }
        s
    }
}

/// Correlations `E[f_j(x) Ψ_i(x)]`; `-` of this is `∇_w G_j(0)` for the hinge.
pub fn feature_correlations(psi: &FeatureMap, target: &BooleanFn, dist: &InputDistribution) -> Result<Vec<f64>> {
    let labels = labels_for(target, dist)?;
    if labels.len() != psi.points() {
        return Err(LabError::Dimension { expected: psi.points(), got: labels.len() });
    }
    let mut c = vec![0.0; psi.dim()];
    for (k, y) in labels.iter().enumerate() {
        for (ci, v) in c.iter_mut().zip(psi.row(k)) {
            *ci += y * v;
        }
    }
    let s = labels.len() as f64;
    Ok(c.into_iter().map(|v| v / s).collect())
}

/// `G_j(w) = L_j(w) + (λ/2)‖w‖²`.
pub fn regularized_objective(psi: &FeatureMap, labels: &[f64], w: &[f64], lambda: f64) -> f64 {
    let pred = psi.predict(w);
    let l = pred.iter().zip(labels).map(|(p, y)| hinge(*y, *p)).sum::<f64>() / labels.len() as f64;
    l + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradAtZeroCheck {
    pub feature: usize,
    pub target: usize,
    pub finite_difference: f64,
    pub correlation: f64,
}

/// Central differences of `G_j` at `w = 0` for each `(i, j)` pair.
pub fn grad_at_zero_check(
    psi: &FeatureMap,
    family: &[BooleanFn],
    dist: &InputDistribution,
    pairs: &[(usize, usize)],
    lambda: f64,
    h: f64,
) -> Result<Vec<GradAtZeroCheck>> {
    let mut out = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        if i >= psi.dim() || j >= family.len() {
            return Err(LabError::Precondition(format!("pair ({i}, {j}) out of range")));
        }
        let labels = labels_for(&family[j], dist)?;
        let mut e = vec![0.0; psi.dim()];
        e[i] = h;
        let plus = regularized_objective(psi, &labels, &e, lambda);
        e[i] = -h;
        let minus = regularized_objective(psi, &labels, &e, lambda);
        out.push(GradAtZeroCheck {
            feature: i,
            target: j,
            finite_difference: (plus - minus) / (2.0 * h),
            correlation: feature_correlations(psi, &family[j], dist)?[i],
        });
    }
    Ok(out)
}

/// Average of `min_hinge` over the family against the clamped bound.
pub fn verify_linear_hardness(
    psi: &FeatureMap,
    b: f64,
    family: &[BooleanFn],
    dist: &InputDistribution,
    solver: &KernelSolver,
) -> Result<LinearHardnessReport> {
    let cert = certify_sqdim(family, dist)?;
    if !cert.pass {
        return Err(LabError::Precondition(format!("family is not almost orthogonal (max {})", cert.max_abs_inner)));
    }
    let d = family.len();
    let mut losses = Vec::with_capacity(d);
    let mut max_gap: f64 = 0.0;
    let mut sq_grad = 0.0;
    for f in family {
        let r = min_hinge(psi, b, f, dist, solver)?;
        max_gap = max_gap.max(r.certificate.gap);
        losses.push(r.loss);
        sq_grad += feature_correlations(psi, f, dist)?.iter().map(|c| c * c).sum::<f64>();
    }
    let average_loss = losses.iter().sum::<f64>() / d as f64;
    let bound = hardness_bound(psi.dim(), b, d as f64);
    Ok(LinearHardnessReport {
        n_features: psi.dim(),
        b,
        d,
        losses,
        average_loss,
        bound,
        variants: hardness_variants(psi.dim(), b, d as f64),
        slack: average_loss - bound,
        vacuous: bound == 0.0,
        max_gap,
        mean_sq_grad_at_zero: sq_grad / d as f64,
        grad_sq_ceiling: 5.0 * psi.dim() as f64 / (d as f64).powf(1.0 / 3.0),
    })
}

/// A depth-2 network on `(x, z)` rewritten as `⟨u(z), Ψ(x)⟩` after rounding
/// the `z`-weights down to the lattice `ΔZ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Depth2Kernel {
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    pub r: f64,
    /// Feature count per the closed-form `2k⌊R√n/Δ⌋`.
    pub n_formula: usize,
    /// Lattice offsets `j = mΔ`, `m ∈ [-m_max, m_max]`, per hidden unit.
    pub m_max: i64,
    pub scale: f64,
    /// `x`-weights `w_i`, rounded `z`-weights as lattice integers, biases `b_i`, output weights `u_i`.
    pub w: Vec<Vec<f64>>,
    pub v_lattice: Vec<Vec<i64>>,
    pub bias: Vec<f64>,
    pub u: Vec<f64>,
    pub features: FeatureMap,
}

impl Depth2Kernel {
    pub fn n_features(&self) -> usize {
        self.features.dim()
    }
    fn offsets(&self) -> usize {
        (2 * self.m_max + 1) as usize
    }

    /// `Δ ⟨v̂_i, z⟩ / Δ` as an integer.
    pub fn lattice_offset(&self, i: usize, z: &[f64]) -> i64 {
        self.v_lattice[i].iter().zip(z).map(|(&m, &s)| if s < 0.0 { -m } else { m }).sum()
    }

    /// Coefficient vector `u(z)`: `3R√n u_i` at `(i, j(z))`, zero elsewhere.
    pub fn coefficients(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n {
            return Err(LabError::Dimension { expected: self.n, got: z.len() });
        }
        let mut c = vec![0.0; self.n_features()];
        for i in 0..self.k {
            let m = self.lattice_offset(i, z);
            if m.abs() > self.m_max {
                return Err(LabError::Precondition(format!("offset {m} outside lattice range {}", self.m_max)));
            }
            c[i * self.offsets() + (m + self.m_max) as usize] = self.u[i] / self.scale;
        }
        Ok(c)
    }

    /// `ĝ(x, z) = Σ u_i σ(⟨w_i, x⟩ + ⟨v̂_i, z⟩ + b_i)`.
    pub fn rounded_eval(&self, x: &[f64], z: &[f64]) -> f64 {
        (0..self.k)
            .map(|i| {
                let wx: f64 = self.w[i].iter().zip(x).map(|(a, b)| a * b).sum();
                let vz = self.lattice_offset(i, z) as f64 * self.delta;
                self.u[i] * relu(wx + vz + self.bias[i])
            })
            .sum()
    }

    /// `⟨u(z), Ψ(x)⟩` with `x` given by its sign index.
    pub fn kernel_eval(&self, x_index: usize, z: &[f64]) -> Result<f64> {
        let c = self.coefficients(z)?;
        Ok(self.features.row(x_index).iter().zip(&c).map(|(a, b)| a * b).sum())
    }

    /// `R√k Δ n`
    pub fn rounding_bound(&self) -> f64 {
        self.r * (self.k as f64).sqrt() * self.delta * self.n as f64
    }

    /// `B = 3R²√n`
    pub fn norm_bound(&self) -> f64 {
        3.0 * self.r * self.r * (self.n as f64).sqrt()
    }
}

/// Builds `Ψ_{i,j}(x) = σ(⟨w_i, x⟩ + j + b_i) / (3R√n)` over `x ∈ {±1}^n` and
/// `j ∈ [-R√n, R√n] ∩ ΔZ`.
pub fn depth2_to_kernel(net: &Mlp, delta: f64, r: f64, n: usize) -> Result<Depth2Kernel> {
    if net.depth() != 2 || net.in_dim() != 2 * n {
        return Err(LabError::Precondition(format!(
            "need a depth-2 net on 2n = {} inputs (got depth {}, input {})",
            2 * n,
            net.depth(),
            net.in_dim()
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LabError::Precondition(format!("lattice step {delta} not in (0, 1)")));
    }
    if n == 0 || n > crate::dist::ENUMERATION_CAP {
        return Err(LabError::Resource(format!("feature table over 2^{n} points")));
    }
    let hidden = &net.layers()[0];
    let out = &net.layers()[1];
    if out.bias()[0] != 0.0 {
        return Err(LabError::Precondition("output bias must be zero".into()));
    }
    let k = hidden.rows();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let u = out.row(0).to_vec();
    let mut w = Vec::with_capacity(k);
    let mut v_lattice = Vec::with_capacity(k);
    let tol = 1e-12 * r.max(1.0);
    for i in 0..k {
        let row = hidden.row(i);
        let (wi, vi) = row.split_at(n);
        if norm(wi) > r + tol || norm(vi) > r + tol {
            return Err(LabError::Precondition(format!("unit {i} has weight norm above R={r}")));
        }
        w.push(wi.to_vec());
        v_lattice.push(vi.iter().map(|&v| (v / delta).floor() as i64).collect::<Vec<_>>());
    }
    if norm(&u) > r + tol || norm(hidden.bias()) > r + tol {
        return Err(LabError::Precondition(format!("output weights or biases exceed R={r}")));
    }
    let rsn = r * (n as f64).sqrt();
    let m_max = (rsn / delta).floor() as i64;
    let scale = 1.0 / (3.0 * rsn);
    let offsets = (2 * m_max + 1) as usize;
    let bias = hidden.bias().to_vec();
    let dist = InputDistribution::UniformSigns { n };
    let features = FeatureMap::from_fn(&dist, k * offsets, |x, row| {
        for i in 0..k {
            let wx: f64 = w[i].iter().zip(x).map(|(a, b)| a * b).sum();
            for m in -m_max..=m_max {
                row[i * offsets + (m + m_max) as usize] = scale * relu(wx + m as f64 * delta + bias[i]);
            }
        }
    })?;
    Ok(Depth2Kernel {
        n,
        k,
        delta,
        r,
        n_formula: 2 * k * m_max as usize,
        m_max,
        scale,
        w,
        v_lattice,
        bias,
        u,
        features,
    })
}
