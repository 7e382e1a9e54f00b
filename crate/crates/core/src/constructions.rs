//! Target functions and exact network constructions: the square-wave target
//! with its deep width-2 realization, box indicators and the grid
//! approximator built from them, and parity / OR-parity networks on sign
//! vectors.
//!
//! Coordinate subsets are 0-based throughout.

use crate::error::{LabError, Result};
use crate::net::{Layer, Mlp};
use serde::{Deserialize, Serialize};

/// The ±1 square wave on the first coordinate with `2^n` alternating
/// intervals of width `2^{-n}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelgarskyTarget {
    pub n: u32,
    pub d: usize,
}

impl TelgarskyTarget {
    pub fn new(n: u32, d: usize) -> Result<Self> {
        if n == 0 || n > 52 || d == 0 {
            return Err(LabError::Precondition(format!("square wave needs 1 <= n <= 52, d >= 1 (n={n}, d={d})")));
        }
        Ok(TelgarskyTarget { n, d })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(LabError::Dimension { expected: self.d, got: x.len() });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(LabError::Domain(format!("{x:?} outside the unit cube")));
        }
        Ok(self.eval_unchecked(x[0]))
    }

    /// +1 iff `floor(x_1 2^n)` is even.
    pub fn eval_unchecked(&self, x1: f64) -> f64 {
        let k = (x1 * 2f64.powi(self.n as i32)).floor() as u64;
        if k % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Interval endpoints `t 2^{-n}` for `t = 0..=2^n`.
    pub fn boundaries(&self) -> Vec<f64> {
        let m = 1u64 << self.n;
        (0..=m).map(|t| t as f64 / m as f64).collect()
    }
}

fn layer(rows: Vec<Vec<f64>>, bias: Vec<f64>) -> Layer {
    Layer::from_rows(rows, bias).expect("construction shapes are consistent")
}

/// The tent map `m(x) = relu(2 relu(x) - 4 relu(x - 1/2))`.
pub fn tent_net() -> Mlp {
    tent_power(1)
}

/// `m` composed `k >= 1` times; consecutive stages share one width-2 layer.
pub fn tent_power(k: usize) -> Mlp {
    tent_chain(k.max(1), 0.0, 0.0)
}

fn tent_chain(k: usize, shift: f64, offset: f64) -> Mlp {
    let mut layers = vec![layer(vec![vec![1.0], vec![1.0]], vec![shift, shift - 0.5])];
    for _ in 1..k {
        layers.push(layer(vec![vec![2.0, -4.0], vec![2.0, -4.0]], vec![0.0, -0.5]));
    }
    layers.push(layer(vec![vec![2.0, -4.0]], vec![0.0]));
    layers.push(layer(vec![vec![1.0]], vec![offset]));
    Mlp::new(layers).expect("tent chain is valid")
}

/// Width-2 network with `sign(N(x)) = f_n(x)` off the interval endpoints:
/// `N(x) = m^{∘n}(x + 2^{-(n+1)}) - 1/2`. It has `n + 2` affine maps.
pub fn telgarsky_net(n: u32) -> Result<Mlp> {
    if n == 0 || n > 52 {
        return Err(LabError::Precondition(format!("telgarsky_net needs 1 <= n <= 52, got {n}")));
    }
    Ok(tent_chain(n as usize, 2f64.powi(-(n as i32 + 1)), -0.5))
}

/// Axis-aligned box `[a_1,b_1]×…×[a_d,b_d]` with indicator margin `gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub gamma: f64,
}

impl AxisBox {
    /// `gamma` may equal the half-width, in which case the inner box is a point.
    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(LabError::Construction("box bounds must be nonempty and equal length".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(LabError::Construction(format!("margin {} must be positive", self.gamma)));
        }
        for (a, b) in self.lo.iter().zip(&self.hi) {
            if !(a < b) {
                return Err(LabError::Construction(format!("empty side [{a}, {b}]")));
            }
            if self.gamma > (b - a) / 2.0 {
                return Err(LabError::Construction(format!(
                    "margin {} exceeds half-width of [{a}, {b}]",
                    self.gamma
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// First-layer rows for one box: `relu(a_i + γ - x_i)` and `relu(x_i - b_i + γ)`.
fn box_units(b: &AxisBox, rows: &mut Vec<Vec<f64>>, bias: &mut Vec<f64>) {
    let d = b.dim();
    for i in 0..d {
        let mut r = vec![0.0; d];
        r[i] = -1.0;
        rows.push(r);
        bias.push(b.lo[i] + b.gamma);
        let mut r = vec![0.0; d];
        r[i] = 1.0;
        rows.push(r);
        bias.push(-b.hi[i] + b.gamma);
    }
}

/// `N(x) = relu(1 - (1/γ) Σ relu(a_i + γ - x_i) - (1/γ) Σ relu(x_i - b_i + γ))`:
/// 1 on the γ-shrunk box, 0 outside the box, within `[0,1]` everywhere.
pub fn cube_indicator_net(b: &AxisBox) -> Result<Mlp> {
    b.validate()?;
    let mut rows = Vec::new();
    let mut bias = Vec::new();
    box_units(b, &mut rows, &mut bias);
    let k = rows.len();
    Mlp::new(vec![
        layer(rows, bias),
        layer(vec![vec![-1.0 / b.gamma; k]], vec![1.0]),
        layer(vec![vec![1.0]], vec![0.0]),
    ])
}

/// `(2C + L√d) / n^d`
pub fn lipschitz_approx_bound(lipschitz: f64, bound: f64, n: usize, d: usize) -> f64 {
    (2.0 * bound + lipschitz * (d as f64).sqrt()) / (n as f64).powi(d as i32)
}

/// The second layer is stored densely, so its size grows with the square of the cell count.
pub const DEFAULT_CELL_CAP: usize = 1 << 10;

/// Sum of box indicators over the `n^d` congruent cells of `[0,1]^d`, each
/// scaled by `h` at the cell center, with margin `γ = n^{-2d}`.
/// The L1 error is at most `(2C + L√d) / n^d` for `|h| <= C`, `h` L-Lipschitz.
pub fn lipschitz_approx_net(h: &dyn Fn(&[f64]) -> f64, n: usize, d: usize, cell_cap: usize) -> Result<Mlp> {
    if n < 2 || d < 1 {
        return Err(LabError::Precondition(format!("grid approximator needs n >= 2, d >= 1 (n={n}, d={d})")));
    }
    let cells = (n as u128).checked_pow(d as u32).filter(|&c| c <= cell_cap as u128).ok_or_else(|| {
        LabError::Resource(format!("{n}^{d} cells exceed the cap of {cell_cap}"))
    })? as usize;
    let gamma = (n as f64).powi(-2 * d as i32);
    let side = 1.0 / n as f64;
    let mut rows1 = Vec::with_capacity(cells * 2 * d);
    let mut bias1 = Vec::with_capacity(cells * 2 * d);
    let mut rows2 = Vec::with_capacity(cells);
    let mut coef = Vec::with_capacity(cells);
    let mut idx = vec![0usize; d];
    let mut center = vec![0.0; d];
    for c in 0..cells {
        let lo: Vec<f64> = idx.iter().map(|&k| k as f64 * side).collect();
        let hi: Vec<f64> = idx.iter().map(|&k| (k + 1) as f64 * side).collect();
        for k in 0..d {
            center[k] = (idx[k] as f64 + 0.5) * side;
        }
        let b = AxisBox { lo, hi, gamma };
        b.validate()?;
        box_units(&b, &mut rows1, &mut bias1);
        let mut r = vec![0.0; cells * 2 * d];
        r[c * 2 * d..(c + 1) * 2 * d].iter_mut().for_each(|v| *v = -1.0 / gamma);
        rows2.push(r);
        coef.push(h(&center));
        for k in 0..d {
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
        }
    }
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Domain("approximated function is not finite at a cell center".into()));
    }
    Mlp::new(vec![layer(rows1, bias1), layer(rows2, vec![1.0; cells]), layer(vec![coef], vec![0.0])])
}

/// Rows, biases and output coefficients of the zigzag through
/// `(−k + 2j, (−1)^{k−j})`, `j = 0..=k`, on an input sum `s`:
/// units `relu(s − s_j)` for `j < k`, output bias `(−1)^k`.
fn staircase(k: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let v = |j: usize| if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
    let offsets = (0..k).map(|j| k as f64 - 2.0 * j as f64).collect();
    let coef = (0..k).map(|j| if j == 0 { v(1) } else { 2.0 * v(j + 1) }).collect();
    (offsets, coef, v(0))
}

/// One-hidden-layer network computing `Π_{i∈I} x_i` exactly on `{±1}^n`.
pub fn parity_net(subset: &[usize], n: usize) -> Result<Mlp> {
    check_subset(subset, n)?;
    if subset.is_empty() {
        return Err(LabError::Precondition("parity subset must be nonempty".into()));
    }
    let k = subset.len();
    let (offsets, coef, out_bias) = staircase(k);
    let mut row = vec![0.0; n];
    for &i in subset {
        row[i] = 1.0;
    }
    Mlp::new(vec![layer(vec![row; k], offsets), layer(vec![coef], vec![out_bias])])
}

fn check_subset(subset: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in subset {
        if i >= n || seen[i] {
            return Err(LabError::Precondition(format!("subset index {i} invalid for n={n}")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// `x ∨ z` on ±1 with +1 as true.
pub fn or_bit(x: f64, z: f64) -> f64 {
    if x > 0.0 || z > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Coordinates `i` with `z'_i = +1`.
pub fn or_support(zprime: &[i8]) -> Vec<usize> {
    zprime.iter().enumerate().filter(|(_, &v)| v == 1).map(|(i, _)| i).collect()
}

/// `F_{z'}(x, z) = Π_{i ∈ I(z')} (x_i ∨ z_i)` on the concatenated input `(x, z)`.
pub fn or_parity_eval(zprime: &[i8], xz: &[f64]) -> f64 {
    let n = zprime.len();
    or_support(zprime).into_iter().map(|i| or_bit(xz[i], xz[n + i])).product()
}

/// Three affine maps: OR bits `-1 + relu(x_i+z_i+2) - relu(x_i+z_i)`, the
/// parity zigzag on their sum, and the output combination. Input is `(x, z)`.
pub fn or_parity_net(zprime: &[i8], n: usize) -> Result<Mlp> {
    if zprime.len() != n {
        return Err(LabError::Dimension { expected: n, got: zprime.len() });
    }
    if zprime.iter().any(|&v| v != 1 && v != -1) {
        return Err(LabError::Precondition("z' entries must be ±1".into()));
    }
    let support = or_support(zprime);
    let k = support.len();
    if k == 0 {
        return Mlp::new(vec![
            Layer::zeros(1, 2 * n),
            Layer::zeros(1, 1),
            layer(vec![vec![0.0]], vec![1.0]),
        ]);
    }
    let mut rows1 = Vec::with_capacity(2 * k);
    let mut bias1 = Vec::with_capacity(2 * k);
    for &i in &support {
        let mut r = vec![0.0; 2 * n];
        r[i] = 1.0;
        r[n + i] = 1.0;
        rows1.push(r.clone());
        bias1.push(2.0);
        rows1.push(r);
        bias1.push(0.0);
    }
    // Σ OR bits = -k + Σ_i (u_i - v_i); the zigzag subtracts s_j on top.
    let (offsets, coef, out_bias) = staircase(k);
    let row2: Vec<f64> = (0..2 * k).map(|c| if c % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let bias2: Vec<f64> = offsets.iter().map(|o| o - k as f64).collect();
    Mlp::new(vec![layer(rows1, bias1), layer(vec![row2; k], bias2), layer(vec![coef], vec![out_bias])])
}
