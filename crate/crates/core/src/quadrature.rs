//! Gauss-Hermite quadrature for expectations over a standard normal.
//!
//! Nodes and weights come from the Golub-Welsch construction: eigenvalues of
//! the symmetric tridiagonal Jacobi matrix with off-diagonals `sqrt(k/2)`,
//! weights `sqrt(pi)` times the squared first eigenvector components.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A Gauss-Hermite rule for the weight `exp(-x^2)` on the real line.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Domain("quadrature order must be at least 1".into()));
        }
        if order == 1 {
            return Ok(Self {
                nodes: vec![0.0],
                weights: vec![std::f64::consts::PI.sqrt()],
            });
        }
        let mut jacobi = DMatrix::zeros(order, order);
        for k in 1..order {
            let off = (k as f64 / 2.0).sqrt();
            jacobi[(k - 1, k)] = off;
            jacobi[(k, k - 1)] = off;
        }
        let eig = jacobi.symmetric_eigen();
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], sqrt_pi * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Raw nodes for the `exp(-x^2)` weight.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(Z)]` for `Z ~ N(0, 1)`: sum of `w_i f(sqrt(2) x_i) / sqrt(pi)`.
    pub fn expect_standard_normal<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let sqrt2 = std::f64::consts::SQRT_2;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(sqrt2 * x))
            .sum::<f64>()
            / sqrt_pi
    }

    /// Points `sqrt(2) x_i` and normalized weights `w_i / sqrt(pi)` so callers
    /// can run several expectations off one rule without re-scaling.
    pub fn standard_normal_rule(&self) -> Vec<(f64, f64)> {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let sqrt2 = std::f64::consts::SQRT_2;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| (sqrt2 * x, w / sqrt_pi))
            .collect()
    }
}
