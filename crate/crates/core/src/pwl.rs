//! Exact piecewise-linear functions of one variable and the symbolic
//! propagation of 1-D ReLU networks into them.

use crate::constructions::TelgarskyTarget;
use crate::error::{LabError, Result};
use crate::net::{Layer, Mlp};
use serde::{Deserialize, Serialize};

pub const PIECE_CAP: usize = 1 << 22;
pub const MERGE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub slope: f64,
    pub intercept: f64,
}

impl Segment {
    pub fn at(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    fn close_to(&self, o: &Segment) -> bool {
        let near = |a: f64, b: f64| (a - b).abs() <= MERGE_TOL * 1f64.max(a.abs()).max(b.abs());
        near(self.slope, o.slope) && near(self.intercept, o.intercept)
    }
}

/// Continuous piecewise-linear function on `[lo, hi]`. Segment `i` covers
/// `[breakpoints[i-1], breakpoints[i]]` with the outer ends at `lo` and `hi`;
/// coefficients are in global coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwlFunction {
    pub lo: f64,
    pub hi: f64,
    pub breakpoints: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl PwlFunction {
    pub fn affine(lo: f64, hi: f64, slope: f64, intercept: f64) -> Self {
        PwlFunction { lo, hi, breakpoints: Vec::new(), segments: vec![Segment { slope, intercept }] }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) {
            return Err(LabError::Domain(format!("empty domain [{}, {}]", self.lo, self.hi)));
        }
        if self.segments.len() != self.breakpoints.len() + 1 {
            return Err(LabError::Construction("segment count must be breakpoint count + 1".into()));
        }
        let mut prev = self.lo;
        for &b in &self.breakpoints {
            if !(b > prev) {
                return Err(LabError::Construction(format!("breakpoint {b} not increasing")));
            }
            prev = b;
        }
        if !(self.hi > prev) {
            return Err(LabError::Construction("breakpoints must lie inside the domain".into()));
        }
        for (i, &b) in self.breakpoints.iter().enumerate() {
            let (l, r) = (self.segments[i].at(b), self.segments[i + 1].at(b));
            if (l - r).abs() > 1e-9 * 1f64.max(l.abs()) {
                return Err(LabError::Construction(format!("discontinuity at {b}: {l} vs {r}")));
            }
        }
        Ok(())
    }

    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, Segment)> + '_ {
        (0..self.segments.len()).map(move |i| {
            let l = if i == 0 { self.lo } else { self.breakpoints[i - 1] };
            let r = if i == self.breakpoints.len() { self.hi } else { self.breakpoints[i] };
            (l, r, self.segments[i])
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&b| b <= x);
        self.segments[i].at(x)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pwl serializes")
    }
}

/// Merges neighbours whose coefficients agree within `MERGE_TOL`.
fn merged(lo: f64, hi: f64, cuts: Vec<f64>, segs: Vec<Segment>) -> PwlFunction {
    let mut breakpoints = Vec::with_capacity(cuts.len());
    let mut segments: Vec<Segment> = Vec::with_capacity(segs.len());
    segments.push(segs[0]);
    for (b, s) in cuts.into_iter().zip(segs.into_iter().skip(1)) {
        if s.close_to(segments.last().unwrap()) {
            continue;
        }
        breakpoints.push(b);
        segments.push(s);
    }
    PwlFunction { lo, hi, breakpoints, segments }
}

/// Symbolic propagation of a 1-D network on `[lo, hi]`: every affine map
/// acts on per-unit affine forms, every ReLU splits at zero crossings.
pub fn from_mlp_1d(net: &Mlp, lo: f64, hi: f64) -> Result<PwlFunction> {
    from_mlp_1d_capped(net, lo, hi, PIECE_CAP)
}

pub fn from_mlp_1d_capped(net: &Mlp, lo: f64, hi: f64, cap: usize) -> Result<PwlFunction> {
    if net.in_dim() != 1 {
        return Err(LabError::Dimension { expected: 1, got: net.in_dim() });
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(LabError::Domain(format!("invalid interval [{lo}, {hi}]")));
    }
    // Per piece: right end and affine forms (slope, intercept) of each unit.
    let mut ends: Vec<f64> = vec![hi];
    let mut forms: Vec<Vec<(f64, f64)>> = vec![vec![(1.0, 0.0)]];
    let depth = net.depth();
    for (li, layer) in net.layers().iter().enumerate() {
        let last = li + 1 == depth;
        let mut new_ends = Vec::with_capacity(ends.len());
        let mut new_forms = Vec::with_capacity(forms.len());
        let mut left = lo;
        for (&right, form) in ends.iter().zip(&forms) {
            let z = affine_forms(layer, form);
            if last {
                new_ends.push(right);
                new_forms.push(z);
                left = right;
                continue;
            }
            let mut cuts: Vec<f64> = z
                .iter()
                .filter(|(a, _)| *a != 0.0)
                .map(|(a, c)| -c / a)
                .filter(|&r| r > left && r < right)
                .collect();
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cuts.dedup();
            cuts.push(right);
            let mut l = left;
            for &r in &cuts {
                let mid = 0.5 * (l + r);
                let f = z.iter().map(|&(a, c)| if a * mid + c > 0.0 { (a, c) } else { (0.0, 0.0) }).collect();
                new_ends.push(r);
                new_forms.push(f);
                l = r;
            }
            if new_ends.len() > cap {
                return Err(LabError::Resource(format!("more than {cap} linear pieces")));
            }
            left = right;
        }
        ends = new_ends;
        forms = new_forms;
    }
    let segs: Vec<Segment> = forms.iter().map(|f| Segment { slope: f[0].0, intercept: f[0].1 }).collect();
    ends.pop();
    Ok(merged(lo, hi, ends, segs))
}

fn affine_forms(layer: &Layer, input: &[(f64, f64)]) -> Vec<(f64, f64)> {
    (0..layer.rows())
        .map(|i| {
            let r = layer.row(i);
            let mut a = 0.0;
            let mut c = layer.bias()[i];
            for (j, &(ia, ic)) in input.iter().enumerate() {
                a += r[j] * ia;
                c += r[j] * ic;
            }
            (a, c)
        })
        .collect()
}

pub fn count_pieces(f: &PwlFunction) -> usize {
    f.segments.len()
}

/// `2^{L-1} k^L` for `L` affine maps of width at most `k`.
pub fn piece_bound(depth: usize, width: usize) -> f64 {
    2f64.powi(depth as i32 - 1) * (width as f64).powi(depth as i32)
}

/// Sign pattern of `f` (with `sign(0) = +1`) as maximal runs of positive length.
fn sign_runs(f: &PwlFunction) -> Vec<(f64, f64, bool)> {
    let mut runs: Vec<(f64, f64, bool)> = Vec::new();
    let mut push = |l: f64, r: f64, s: bool| {
        if r <= l {
            return;
        }
        match runs.last_mut() {
            Some(last) if last.2 == s => last.1 = r,
            _ => runs.push((l, r, s)),
        }
    };
    for (l, r, seg) in f.pieces() {
        if seg.slope != 0.0 {
            let root = -seg.intercept / seg.slope;
            if root > l && root < r {
                push(l, root, seg.at(0.5 * (l + root)) >= 0.0);
                push(root, r, seg.at(0.5 * (root + r)) >= 0.0);
                continue;
            }
        }
        push(l, r, seg.at(0.5 * (l + r)) >= 0.0);
    }
    runs
}

/// Number of sign changes of `sign(f)` between runs of positive length.
pub fn sign_crossings(f: &PwlFunction) -> usize {
    sign_runs(f).len() - 1
}

fn check_covers_unit(f: &PwlFunction, n: u32) -> Result<TelgarskyTarget> {
    if f.lo > 0.0 || f.hi < 1.0 {
        return Err(LabError::Domain(format!("domain [{}, {}] does not cover [0,1]", f.lo, f.hi)));
    }
    if n == 0 || n > 22 || (1usize << n) + f.segments.len() > PIECE_CAP {
        return Err(LabError::Resource(format!("refinement at n={n} exceeds {PIECE_CAP} pieces")));
    }
    TelgarskyTarget::new(n, 1)
}

/// Common refinement of `f` on `[0,1]` with the square-wave interval
/// boundaries; yields `(l, r, label, segment)`.
fn refine(f: &PwlFunction, t: &TelgarskyTarget, mut visit: impl FnMut(f64, f64, f64, Segment)) {
    let m = 1u64 << t.n;
    let inner: Vec<(f64, Segment)> = f
        .pieces()
        .filter(|(l, r, _)| *r > 0.0 && *l < 1.0)
        .map(|(_, r, s)| (r.min(1.0), s))
        .collect();
    let mut k = 1u64;
    let mut left = 0.0;
    for (right, seg) in inner {
        while k < m && (k as f64 / m as f64) < right {
            let b = k as f64 / m as f64;
            visit(left, b, t.eval_unchecked(0.5 * (left + b)), seg);
            left = b;
            k += 1;
        }
        if right > left {
            visit(left, right, t.eval_unchecked(0.5 * (left + right)), seg);
            left = right;
        }
        if k < m && (k as f64 / m as f64) == right {
            k += 1;
        }
    }
}

/// `∫_0^1 max(0, 1 - f_n(x) f(x)) dx`, integrated piece by piece in closed form.
pub fn exact_hinge_loss_vs_fn(f: &PwlFunction, n: u32) -> Result<f64> {
    let t = check_covers_unit(f, n)?;
    let mut total = 0.0;
    refine(f, &t, |l, r, y, seg| {
        let hl = 1.0 - y * seg.at(l);
        let hr = 1.0 - y * seg.at(r);
        let w = r - l;
        total += if hl >= 0.0 && hr >= 0.0 {
            0.5 * (hl + hr) * w
        } else if hl <= 0.0 && hr <= 0.0 {
            0.0
        } else if hl > 0.0 {
            0.5 * hl * w * hl / (hl - hr)
        } else {
            0.5 * hr * w * hr / (hr - hl)
        };
    });
    Ok(total)
}

/// Hinge loss of the ±1 function `sign(f)` against `f_n`: twice the measure
/// of `{x ∈ [0,1] : sign(f(x)) ≠ f_n(x)}`.
pub fn exact_sign_hinge_loss_vs_fn(f: &PwlFunction, n: u32) -> Result<f64> {
    let t = check_covers_unit(f, n)?;
    let mut wrong = 0.0;
    refine(f, &t, |l, r, y, seg| {
        let want = y > 0.0;
        if seg.slope != 0.0 {
            let root = -seg.intercept / seg.slope;
            if root > l && root < r {
                if (seg.at(0.5 * (l + root)) >= 0.0) != want {
                    wrong += root - l;
                }
                if (seg.at(0.5 * (root + r)) >= 0.0) != want {
                    wrong += r - root;
                }
                return;
            }
        }
        if (seg.at(0.5 * (l + r)) >= 0.0) != want {
            wrong += r - l;
        }
    });
    Ok(2.0 * wrong)
}

/// `(2^{n-1} - K) / 2^{n-1}`, clamped at 0.
pub fn crossing_loss_bound(n: u32, crossings: usize) -> f64 {
    let half = 2f64.powi(n as i32 - 1);
    ((half - crossings as f64) / half).max(0.0)
}

/// Fixes the first `d-1` inputs to `y`; the last input stays free.
pub fn restrict_to_line(net: &Mlp, y: &[f64]) -> Result<Mlp> {
    let d = net.in_dim();
    if y.len() + 1 != d {
        return Err(LabError::Dimension { expected: d - 1, got: y.len() });
    }
    let first = &net.layers()[0];
    let mut w = Vec::with_capacity(first.rows());
    let mut b = Vec::with_capacity(first.rows());
    for i in 0..first.rows() {
        let r = first.row(i);
        let mut bias = first.bias()[i];
        for (j, &yj) in y.iter().enumerate() {
            bias += r[j] * yj;
        }
        w.push(r[d - 1]);
        b.push(bias);
    }
    let mut layers = vec![Layer::new(first.rows(), 1, w, b)?];
    layers.extend(net.layers()[1..].iter().cloned());
    Mlp::new(layers)
}

/// One certification record for a network against `f_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceRecord {
    pub depth: usize,
    pub width: usize,
    pub pieces: usize,
    pub bound: f64,
    pub crossings: usize,
    pub loss: f64,
    pub lower_bound: f64,
}

impl PieceRecord {
    pub const CSV_HEADER: &'static str = "depth,width,pieces,bound,crossings,loss,lower_bound";

    /// Loss is that of `sign(net)`.
    pub fn certify(net: &Mlp, n: u32) -> Result<Self> {
        let f = from_mlp_1d(net, 0.0, 1.0)?;
        let crossings = sign_crossings(&f);
        Ok(PieceRecord {
            depth: net.depth(),
            width: net.width(),
            pieces: count_pieces(&f),
            bound: piece_bound(net.depth(), net.width()),
            crossings,
            loss: exact_sign_hinge_loss_vs_fn(&f, n)?,
            lower_bound: crossing_loss_bound(n, crossings),
        })
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:e},{},{:e},{:e}",
            self.depth, self.width, self.pieces, self.bound, self.crossings, self.loss, self.lower_bound
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{telgarsky_net, tent_net, tent_power};

    #[test]
    fn affine_net_is_one_piece() {
        let net = Mlp::new(vec![Layer::new(1, 1, vec![3.0], vec![-1.0]).unwrap()]).unwrap();
        let f = from_mlp_1d(&net, -2.0, 2.0).unwrap();
        assert_eq!(count_pieces(&f), 1);
        assert_eq!(f.segments[0], Segment { slope: 3.0, intercept: -1.0 });
    }

    #[test]
    fn tent_pieces() {
        let f = from_mlp_1d(&tent_net(), -1.0, 2.0).unwrap();
        f.validate().unwrap();
        assert_eq!(f.breakpoints, vec![0.0, 0.5, 1.0]);
        let want = [(0.0, 0.0), (2.0, 0.0), (-2.0, 2.0), (0.0, 0.0)];
        for (s, (a, c)) in f.segments.iter().zip(want) {
            assert_eq!((s.slope, s.intercept), (a, c));
        }
        let g = from_mlp_1d(&tent_power(2), -1.0, 2.0).unwrap();
        assert_eq!(count_pieces(&g), 6);
        assert_eq!(g.eval(0.25), 1.0);
        assert_eq!(g.eval(0.75), 1.0);
    }

    #[test]
    fn crossings_simple() {
        assert_eq!(sign_crossings(&PwlFunction::affine(0.0, 1.0, 0.0, 1.0)), 0);
        assert_eq!(sign_crossings(&PwlFunction::affine(0.0, 1.0, 1.0, -0.5)), 1);
        // flat zero between two negative stretches reads as a positive run
        let f = PwlFunction {
            lo: 0.0,
            hi: 3.0,
            breakpoints: vec![1.0, 2.0],
            segments: vec![
                Segment { slope: 1.0, intercept: -1.0 },
                Segment { slope: 0.0, intercept: 0.0 },
                Segment { slope: -1.0, intercept: 2.0 },
            ],
        };
        f.validate().unwrap();
        assert_eq!(sign_crossings(&f), 2);
        let n = telgarsky_net(3).unwrap();
        assert_eq!(sign_crossings(&from_mlp_1d(&n, 0.0, 1.0).unwrap()), 7);
    }

    #[test]
    fn constant_losses() {
        let zero = PwlFunction::affine(0.0, 1.0, 0.0, 0.0);
        let one = PwlFunction::affine(0.0, 1.0, 0.0, 1.0);
        for n in [1, 3, 7] {
            assert_eq!(exact_hinge_loss_vs_fn(&zero, n).unwrap(), 1.0);
            assert_eq!(exact_hinge_loss_vs_fn(&one, n).unwrap(), 1.0);
            assert_eq!(exact_sign_hinge_loss_vs_fn(&one, n).unwrap(), 1.0);
        }
        assert!(exact_hinge_loss_vs_fn(&PwlFunction::affine(0.2, 1.0, 0.0, 0.0), 2).is_err());
        assert!(exact_hinge_loss_vs_fn(&zero, 30).is_err());
    }

    #[test]
    fn restrict_folds_bias() {
        let net = Mlp::new(vec![
            Layer::from_rows(vec![vec![1.0, 2.0], vec![-1.0, 0.5]], vec![0.1, 0.2]).unwrap(),
            Layer::from_rows(vec![vec![1.0, 1.0]], vec![0.0]).unwrap(),
        ])
        .unwrap();
        let r = restrict_to_line(&net, &[0.3]).unwrap();
        for x in [-1.0, 0.0, 0.7] {
            assert!((r.forward(&[x]).unwrap() - net.forward(&[0.3, x]).unwrap()).abs() < 1e-15);
        }
        assert!(restrict_to_line(&net, &[]).is_err());
    }
}
