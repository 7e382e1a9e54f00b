//! Dense feedforward ReLU networks.
//!
//! Every layer is affine; ReLU is applied after every layer except the last,
//! whose output dimension is 1. Parameters flatten layer by layer as the
//! weights in row-major order followed by the bias.

use crate::error::{LabError, Result};
use serde::{Deserialize, Serialize};

#[inline]
pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// One affine map `x -> W x + b` with `W` stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayerRepr", into = "LayerRepr")]
pub struct Layer {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl TryFrom<LayerRepr> for Layer {
    type Error = LabError;
    fn try_from(r: LayerRepr) -> Result<Self> {
        Layer::from_rows(r.weights, r.bias)
    }
}

impl From<Layer> for LayerRepr {
    fn from(l: Layer) -> Self {
        LayerRepr {
            weights: (0..l.rows).map(|i| l.row(i).to_vec()).collect(),
            bias: l.b,
        }
    }
}

impl Layer {
    pub fn new(rows: usize, cols: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LabError::Construction("empty layer".into()));
        }
        if w.len() != rows * cols {
            return Err(LabError::Dimension { expected: rows * cols, got: w.len() });
        }
        if b.len() != rows {
            return Err(LabError::Dimension { expected: rows, got: b.len() });
        }
        Ok(Layer { rows, cols, w, b })
    }

    pub fn from_rows(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let rows = weights.len();
        let cols = weights.first().map_or(0, Vec::len);
        if weights.iter().any(|r| r.len() != cols) {
            return Err(LabError::Construction("ragged weight matrix".into()));
        }
        Layer::new(rows, cols, weights.concat(), bias)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer { rows, cols, w: vec![0.0; rows * cols], b: vec![0.0; rows] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn weights(&self) -> &[f64] {
        &self.w
    }
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }
    pub fn bias(&self) -> &[f64] {
        &self.b
    }
    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.cols..(i + 1) * self.cols]
    }
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.cols + j]
    }
    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// `out = W x + b`
    pub fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for i in 0..self.rows {
            let r = self.row(i);
            let mut s = self.b[i];
            for j in 0..self.cols {
                s += r[j] * x[j];
            }
            out.push(s);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr", into = "MlpRepr")]
pub struct Mlp {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct MlpRepr {
    layers: Vec<Layer>,
}

impl TryFrom<MlpRepr> for Mlp {
    type Error = LabError;
    fn try_from(r: MlpRepr) -> Result<Self> {
        Mlp::new(r.layers)
    }
}

impl From<Mlp> for MlpRepr {
    fn from(m: Mlp) -> Self {
        MlpRepr { layers: m.layers }
    }
}

/// Scratch buffers for a forward/backward pass, reusable across samples.
#[derive(Default, Clone, Debug)]
pub struct Workspace {
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(LabError::Construction("network has no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].rows != pair[1].cols {
                return Err(LabError::Dimension { expected: pair[0].rows, got: pair[1].cols });
            }
        }
        let last = layers.last().unwrap();
        if last.rows != 1 {
            return Err(LabError::Dimension { expected: 1, got: last.rows });
        }
        if layers.iter().any(|l| l.w.iter().chain(&l.b).any(|v| !v.is_finite())) {
            return Err(LabError::Construction("non-finite parameter".into()));
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
    pub fn in_dim(&self) -> usize {
        self.layers[0].cols
    }
    /// Number of affine maps.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }
    /// Widest hidden layer (1 for a single affine map).
    pub fn width(&self) -> usize {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.rows).max().unwrap_or(1)
    }
    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            p.extend_from_slice(&l.w);
            p.extend_from_slice(&l.b);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(LabError::Dimension { expected: self.num_params(), got: p.len() });
        }
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    /// Index ranges of each layer's weights inside the flattened parameters.
    pub fn weight_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut k = 0;
        self.layers
            .iter()
            .map(|l| {
                let r = k..k + l.w.len();
                k += l.num_params();
                r
            })
            .collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.in_dim() {
            return Err(LabError::Dimension { expected: self.in_dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub fn forward_unchecked(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut nxt = Vec::new();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            l.apply(&cur, &mut nxt);
            if i < last {
                nxt.iter_mut().for_each(|v| *v = relu(*v));
            }
            std::mem::swap(&mut cur, &mut nxt);
        }
        cur[0]
    }

    /// Forward pass that keeps pre-activations and activations in `ws`.
    fn forward_cached(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        let depth = self.layers.len();
        ws.pre.resize_with(depth, Vec::new);
        ws.act.resize_with(depth + 1, Vec::new);
        ws.act[0].clear();
        ws.act[0].extend_from_slice(x);
        for (i, l) in self.layers.iter().enumerate() {
            let (head, tail) = ws.act.split_at_mut(i + 1);
            l.apply(&head[i], &mut ws.pre[i]);
            let a = &mut tail[0];
            a.clear();
            if i + 1 < depth {
                a.extend(ws.pre[i].iter().map(|&z| relu(z)));
            } else {
                a.extend_from_slice(&ws.pre[i]);
            }
        }
        ws.act[depth][0]
    }

    /// Adds `scale * d out / d theta` at `x` into `grad` (flattened layout).
    /// ReLU units count as active when the pre-activation is >= 0.
    fn backward_accumulate(&self, ws: &mut Workspace, scale: f64, grad: &mut [f64]) {
        let depth = self.layers.len();
        let mut offsets = Vec::with_capacity(depth);
        let mut k = 0;
        for l in &self.layers {
            offsets.push(k);
            k += l.num_params();
        }
        ws.delta.clear();
        ws.delta.push(scale);
        for li in (0..depth).rev() {
            let l = &self.layers[li];
            let input = &ws.act[li];
            let off = offsets[li];
            for i in 0..l.rows {
                let d = ws.delta[i];
                if d == 0.0 {
                    continue;
                }
                let g = &mut grad[off + i * l.cols..off + (i + 1) * l.cols];
                for j in 0..l.cols {
                    g[j] += d * input[j];
                }
                grad[off + l.w.len() + i] += d;
            }
            if li == 0 {
                break;
            }
            ws.next.clear();
            ws.next.resize(l.cols, 0.0);
            for i in 0..l.rows {
                let d = ws.delta[i];
                if d == 0.0 {
                    continue;
                }
                let r = l.row(i);
                for j in 0..l.cols {
                    ws.next[j] += r[j] * d;
                }
            }
            let pre = &ws.pre[li - 1];
            for j in 0..l.cols {
                if pre[j] < 0.0 {
                    ws.next[j] = 0.0;
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.next);
        }
    }

    /// Gradient of the network output with respect to the parameters.
    pub fn grad_output(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut ws = Workspace::default();
        let mut g = vec![0.0; self.num_params()];
        self.forward_cached(x, &mut ws);
        self.backward_accumulate(&mut ws, 1.0, &mut g);
        Ok(g)
    }

    /// Hinge-loss subgradient with respect to the parameters. The hinge counts
    /// as active when the margin `y * out` is <= 1.
    pub fn grad_params(&self, x: &[f64], y: f64) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut ws = Workspace::default();
        let mut g = vec![0.0; self.num_params()];
        self.accumulate_hinge(x, y, 1.0, &mut ws, &mut g);
        Ok(g)
    }

    /// Adds `weight * hinge subgradient` at `(x, y)` into `grad` and returns
    /// the hinge value. No shape checks.
    pub fn accumulate_hinge(
        &self,
        x: &[f64],
        y: f64,
        weight: f64,
        ws: &mut Workspace,
        grad: &mut [f64],
    ) -> f64 {
        let out = self.forward_cached(x, ws);
        let margin = y * out;
        if margin <= 1.0 {
            self.backward_accumulate(ws, -y * weight, grad);
        }
        hinge(y, out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("network serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| LabError::Construction(e.to_string()))
    }
}

/// `max(1 - y * yhat, 0)`
#[inline]
pub fn hinge(y: f64, yhat: f64) -> f64 {
    let v = 1.0 - y * yhat;
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neuron(u: f64, w: f64, b: f64) -> Mlp {
        Mlp::new(vec![
            Layer::new(1, 1, vec![w], vec![b]).unwrap(),
            Layer::new(1, 1, vec![u], vec![0.0]).unwrap(),
        ])
        .unwrap()
    }

    fn tent() -> Mlp {
        Mlp::new(vec![
            Layer::from_rows(vec![vec![1.0], vec![1.0]], vec![0.0, -0.5]).unwrap(),
            Layer::from_rows(vec![vec![2.0, -4.0]], vec![0.0]).unwrap(),
            Layer::from_rows(vec![vec![1.0]], vec![0.0]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn single_affine_layer() {
        let net = Mlp::new(vec![Layer::new(1, 1, vec![2.0], vec![1.0]).unwrap()]).unwrap();
        assert_eq!(net.forward(&[3.0]).unwrap(), 7.0);
    }

    #[test]
    fn tent_values() {
        let m = tent();
        assert_eq!(m.forward(&[0.5]).unwrap(), 1.0);
        assert_eq!(m.forward(&[1.5]).unwrap(), 0.0);
    }

    #[test]
    fn shape_errors() {
        let m = tent();
        assert!(matches!(m.forward(&[0.5, 1.0]), Err(LabError::Dimension { .. })));
        assert!(Mlp::new(vec![Layer::zeros(2, 1)]).is_err());
        assert!(Mlp::new(vec![Layer::zeros(3, 1), Layer::zeros(1, 2)]).is_err());
    }

    #[test]
    fn inactive_hinge_gives_zero() {
        let g = neuron(1.0, 1.0, 0.0).grad_params(&[2.0], 1.0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_neuron_gradient() {
        // Layout (w, b, u, c). Central differences at step 1e-6 give
        // d/dw = u*x = 2, d/db = u = 1, d/du = relu(wx+b) = 2, d/dc = 1.
        let g = neuron(1.0, 1.0, 0.0).grad_params(&[2.0], -1.0).unwrap();
        assert_eq!(g, vec![2.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn params_roundtrip_and_json() {
        let m = tent();
        let mut n = m.clone();
        let p: Vec<f64> = (0..m.num_params()).map(|i| i as f64 * 0.25).collect();
        n.set_params(&p).unwrap();
        assert_eq!(n.params(), p);
        let back = Mlp::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(m.to_json().starts_with("{\"layers\":[{\"weights\":[[1.0],[1.0]]"));
    }

    #[test]
    fn depth_and_width() {
        let m = tent();
        assert_eq!(m.depth(), 3);
        assert_eq!(m.width(), 2);
        assert_eq!(m.num_params(), 4 + 3 + 2);
    }
}
