//! Gaussian (Xavier-style) initialization with zero biases.

use crate::error::{LabError, Result};
use crate::net::{Layer, Mlp};
use crate::seed;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Variance convention for weight entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScale {
    /// Variance `1 / fan-in` of each layer.
    FanIn,
    /// Variance `1 / width` for every layer, including the first and last,
    /// i.e. standard Gaussians times `width^{-depth/2}` overall.
    Width,
}

/// `depth` affine maps: `in_dim -> width -> ... -> width -> 1`.
pub fn xavier_init(depth: usize, width: usize, in_dim: usize, seed: u64) -> Result<Mlp> {
    xavier_init_scaled(depth, width, in_dim, seed, WeightScale::FanIn)
}

pub fn xavier_init_scaled(
    depth: usize,
    width: usize,
    in_dim: usize,
    seed: u64,
    scale: WeightScale,
) -> Result<Mlp> {
    if depth < 2 || width < 1 || in_dim < 1 {
        return Err(LabError::Precondition(format!(
            "xavier_init needs depth >= 2, width >= 1, in_dim >= 1 (got {depth}, {width}, {in_dim})"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let cols = if l == 0 { in_dim } else { width };
        let rows = if l + 1 == depth { 1 } else { width };
        let var = match scale {
            WeightScale::FanIn => 1.0 / cols as f64,
            WeightScale::Width => 1.0 / width as f64,
        };
        let normal = Normal::new(0.0, var.sqrt()).expect("positive variance");
        let w: Vec<f64> = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
        layers.push(Layer::new(rows, cols, w, vec![0.0; rows])?);
    }
    Mlp::new(layers)
}

/// Every weight and bias i.i.d. `N(0, std²)`; `depth` affine maps
/// `in_dim -> width -> ... -> 1`.
pub fn gaussian_init(depth: usize, width: usize, in_dim: usize, std: f64, seed: u64) -> Result<Mlp> {
    if depth < 1 || width < 1 || in_dim < 1 || !(std > 0.0 && std.is_finite()) {
        return Err(LabError::Precondition(format!(
            "gaussian_init needs depth, width, in_dim >= 1 and std > 0 (got {depth}, {width}, {in_dim}, {std})"
        )));
    }
    let mut rng = seed::rng(seed);
    let normal = Normal::new(0.0, std).expect("positive std");
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let cols = if l == 0 { in_dim } else { width };
        let rows = if l + 1 == depth { 1 } else { width };
        let w = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
        let b = (0..rows).map(|_| normal.sample(&mut rng)).collect();
        layers.push(Layer::new(rows, cols, w, b)?);
    }
    Mlp::new(layers)
}
