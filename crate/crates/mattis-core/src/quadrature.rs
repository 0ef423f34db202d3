//! Gauss–Hermite rules for expectations under the standard normal law.

use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, sqrt};

use crate::error::{Error, Result};

/// Default number of nodes per Gaussian dimension.
pub const DEFAULT_ORDER: usize = 41;
/// Tensor nodes whose product weight falls below this are dropped.
pub const TENSOR_WEIGHT_CUTOFF: f64 = 1e-25;

/// Nodes and weights with `E f(η) ≈ Σ w_k f(x_k)` for `η ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::config("quadrature order must be at least 2"));
        }
        let (x, w) = physicists_rule(order);
        let norm = 1.0 / sqrt(core::f64::consts::PI);
        let nodes = x.iter().map(|v| v * core::f64::consts::SQRT_2).collect();
        let weights = w.iter().map(|v| v * norm).collect();
        Ok(GaussHermite { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

/// Tensor-product rule in `dim` dimensions.
#[derive(Debug, Clone)]
pub struct TensorRule {
    pub dim: usize,
    /// Row-major `len × dim` node coordinates.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TensorRule {
    pub fn new(rule: &GaussHermite, dim: usize) -> Self {
        let n = rule.order();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut idx = vec![0usize; dim];
        loop {
            let w: f64 = idx.iter().map(|&i| rule.weights[i]).product();
            if w >= TENSOR_WEIGHT_CUTOFF || dim == 1 {
                points.extend(idx.iter().map(|&i| rule.nodes[i]));
                weights.push(w);
            }
            let mut u = 0;
            loop {
                if u == dim {
                    return TensorRule {
                        dim,
                        points,
                        weights,
                    };
                }
                idx[u] += 1;
                if idx[u] < n {
                    break;
                }
                idx[u] = 0;
                u += 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }
}

/// Roots and weights for `∫ f(x) e^{-x²} dx` by Newton iteration on the
/// orthonormal Hermite recurrence.
fn physicists_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = 0.751_125_544_464_942_5; // π^{-1/4}
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => sqrt(2.0 * nf + 1.0) - 1.85575 * libm::pow(2.0 * nf + 1.0, -0.16667),
            1 => z - 1.14 * libm::pow(nf, 0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * sqrt(2.0 / jf) * p2 - sqrt((jf - 1.0) / jf) * p3;
            }
            pp = sqrt(2.0 * nf) * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if fabs(z - z1) <= 1e-15 * f64::max(1.0, fabs(z)) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    // Sort ascending for readability of dumps.
    let mut pairs: Vec<(f64, f64)> = x.into_iter().zip(w).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_factorial_odd(k: u32) -> f64 {
        (1..=k).step_by(2).map(|v| v as f64).product()
    }

    #[test]
    fn integrates_even_moments_exactly() {
        for &n in &[2usize, 5, 20, 41, 81] {
            let gh = GaussHermite::new(n).unwrap();
            let total: f64 = gh.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-13, "order {n}: {total}");
            for k in 1..n.min(12) as u32 {
                let exact = double_factorial_odd(2 * k - 1);
                let approx: f64 = gh
                    .nodes
                    .iter()
                    .zip(&gh.weights)
                    .map(|(x, w)| w * crate::numeric::powi(*x, 2 * k))
                    .sum();
                assert!(
                    ((approx - exact) / exact).abs() < 1e-11,
                    "order {n} moment {}: {approx} vs {exact}",
                    2 * k
                );
            }
        }
    }

    #[test]
    fn nodes_symmetric() {
        let gh = GaussHermite::new(41).unwrap();
        for i in 0..41 {
            assert!((gh.nodes[i] + gh.nodes[40 - i]).abs() < 1e-12);
        }
        assert_eq!(gh.nodes[20], 0.0);
    }

    #[test]
    fn rejects_tiny_order() {
        assert!(GaussHermite::new(1).is_err());
    }

    #[test]
    fn tensor_rule_mass() {
        let gh = GaussHermite::new(41).unwrap();
        let t = TensorRule::new(&gh, 2);
        let total: f64 = t.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
        assert!(t.len() < 41 * 41);
    }
}
