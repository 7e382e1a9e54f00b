//! Finite input distributions. Every variant is a uniformly weighted point
//! set that is visited lazily, so large enumerations never materialize.
//!
//! Sign vectors are indexed by integers: bit `j` of the index set means
//! coordinate `j` is -1, so index 0 is the all-ones vector.

use crate::error::{LabError, Result};
use crate::seed;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const ENUMERATION_CAP: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CubeRule {
    /// Midpoint grid with `per_axis` points along every axis.
    Grid { per_axis: usize },
    /// Fixed seeded sample of `samples` uniform points.
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputDistribution {
    UniformCube { dim: usize, rule: CubeRule },
    UniformSigns { n: usize },
    /// Uniform over `{±1}^n × zset`; points are `(x_1..x_n, z_1..z_n)`.
    InducedPair { n: usize, zset: Vec<Vec<i8>> },
}

/// Writes the sign vector with the given index into `out` as ±1.0.
pub fn signs_from_index(index: usize, out: &mut [f64]) {
    for (j, v) in out.iter_mut().enumerate() {
        *v = if (index >> j) & 1 == 1 { -1.0 } else { 1.0 };
    }
}

impl InputDistribution {
    pub fn dim(&self) -> usize {
        match self {
            InputDistribution::UniformCube { dim, .. } => *dim,
            InputDistribution::UniformSigns { n } => *n,
            InputDistribution::InducedPair { n, .. } => 2 * n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InputDistribution::UniformCube { dim, rule } => {
                if *dim == 0 {
                    return Err(LabError::Domain("cube dimension must be positive".into()));
                }
                match rule {
                    CubeRule::Grid { per_axis } => {
                        if *per_axis == 0 {
                            return Err(LabError::Domain("empty grid".into()));
                        }
                        let total = (*per_axis as f64).powi(*dim as i32);
                        if total > (1u64 << 32) as f64 {
                            return Err(LabError::Resource(format!("grid of {total} points")));
                        }
                    }
                    CubeRule::MonteCarlo { samples, .. } => {
                        if *samples == 0 {
                            return Err(LabError::Domain("empty Monte Carlo sample".into()));
                        }
                    }
                }
            }
            InputDistribution::UniformSigns { n } => {
                if *n == 0 || *n > ENUMERATION_CAP {
                    return Err(LabError::Resource(format!("sign enumeration at n={n}")));
                }
            }
            InputDistribution::InducedPair { n, zset } => {
                if *n == 0 || *n > ENUMERATION_CAP {
                    return Err(LabError::Resource(format!("pair enumeration at n={n}")));
                }
                if zset.is_empty() {
                    return Err(LabError::Domain("empty z-set".into()));
                }
                for z in zset {
                    if z.len() != *n {
                        return Err(LabError::Dimension { expected: *n, got: z.len() });
                    }
                    if z.iter().any(|&v| v != 1 && v != -1) {
                        return Err(LabError::Domain("z-set entries must be ±1".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of support points.
    pub fn len(&self) -> usize {
        match self {
            InputDistribution::UniformCube { dim, rule } => match rule {
                CubeRule::Grid { per_axis } => per_axis.pow(*dim as u32),
                CubeRule::MonteCarlo { samples, .. } => *samples,
            },
            InputDistribution::UniformSigns { n } => 1 << n,
            InputDistribution::InducedPair { n, zset } => (1 << n) * zset.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Probability mass of each support point.
    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn is_enumeration(&self) -> bool {
        !matches!(self, InputDistribution::UniformCube { .. })
    }

    /// Calls `visit(point)` once per support point in a fixed order.
    pub fn for_each_point(&self, mut visit: impl FnMut(&[f64])) -> Result<()> {
        self.validate()?;
        let d = self.dim();
        let mut x = vec![0.0; d];
        match self {
            InputDistribution::UniformCube { dim, rule } => match rule {
                CubeRule::Grid { per_axis } => {
                    let m = *per_axis;
                    let mut idx = vec![0usize; *dim];
                    for _ in 0..self.len() {
                        for k in 0..*dim {
                            x[k] = (idx[k] as f64 + 0.5) / m as f64;
                        }
                        visit(&x);
                        for k in 0..*dim {
                            idx[k] += 1;
                            if idx[k] < m {
                                break;
                            }
                            idx[k] = 0;
                        }
                    }
                }
                CubeRule::MonteCarlo { samples, seed } => {
                    let mut rng = seed::rng(*seed);
                    for _ in 0..*samples {
                        for v in x.iter_mut() {
                            *v = rng.random::<f64>();
                        }
                        visit(&x);
                    }
                }
            },
            InputDistribution::UniformSigns { n } => {
                for i in 0..(1usize << n) {
                    signs_from_index(i, &mut x);
                    visit(&x);
                }
            }
            InputDistribution::InducedPair { n, zset } => {
                for z in zset {
                    for (k, &v) in z.iter().enumerate() {
                        x[n + k] = v as f64;
                    }
                    for i in 0..(1usize << n) {
                        signs_from_index(i, &mut x[..*n]);
                        visit(&x);
                    }
                }
            }
        }
        Ok(())
    }

    /// Materialized support, for small distributions.
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        let mut v = Vec::with_capacity(self.len());
        self.for_each_point(|x| v.push(x.to_vec()))?;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_midpoints() {
        let d = InputDistribution::UniformCube { dim: 1, rule: CubeRule::Grid { per_axis: 4 } };
        let p = d.points().unwrap();
        assert_eq!(p, vec![vec![0.125], vec![0.375], vec![0.625], vec![0.875]]);
    }

    #[test]
    fn sign_enumeration_is_complete() {
        let d = InputDistribution::UniformSigns { n: 3 };
        let mut p = d.points().unwrap();
        assert_eq!(p.len(), 8);
        assert_eq!(p[0], vec![1.0, 1.0, 1.0]);
        assert_eq!(p[1], vec![-1.0, 1.0, 1.0]);
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        p.dedup();
        assert_eq!(p.len(), 8);
    }

    #[test]
    fn pair_support() {
        let d = InputDistribution::InducedPair { n: 2, zset: vec![vec![1, -1], vec![-1, -1]] };
        let p = d.points().unwrap();
        assert_eq!(p.len(), 8);
        assert_eq!(p[0], vec![1.0, 1.0, 1.0, -1.0]);
        assert_eq!(p[7], vec![-1.0, -1.0, -1.0, -1.0]);
        assert!((d.weight() * d.len() as f64 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn caps() {
        assert!(InputDistribution::UniformSigns { n: 21 }.validate().is_err());
        assert!(InputDistribution::InducedPair { n: 2, zset: vec![vec![1, 0]] }.validate().is_err());
    }
}
