//! Critical-edge weights at the patching delay, their flipped complement and
//! the normalized Laplacian of the flipped-weight graph.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::epidemic::check_probabilities;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::CsrMatrix;

/// Weights below this are stored as exact zeros.
pub const WEIGHT_EPS: f64 = 1e-15;
/// Floor applied to generalized degrees before `D^{-1/2}`.
pub const DEGREE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightFlavor {
    /// Probability that the edge joins a healthy and an infected node.
    Critical,
    /// One minus the critical weight.
    Flipped,
}

/// Per-edge weights, aligned with the edge list they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    pub flavor: WeightFlavor,
    n: usize,
    edges: Vec<(usize, usize)>,
    values: Vec<f64>,
}

impl EdgeWeights {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.edges.iter().copied().zip(self.values.iter().copied())
    }

    /// Weighted degree `sum_j w_ij` of every node.
    pub fn node_strengths(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for ((i, j), w) in self.iter() {
            d[i] += w;
            d[j] += w;
        }
        d
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,w\n");
        for ((i, j), w) in self.iter() {
            out.push_str(&format!("{i},{j},{w}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn build(g: &Graph, xhat: &[f64], flavor: WeightFlavor) -> Result<EdgeWeights> {
    check_probabilities(g, xhat)?;
    let values = g
        .edges()
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (xhat[i], xhat[j]);
            let w = match flavor {
                WeightFlavor::Critical => a * (1.0 - b) + (1.0 - a) * b,
                WeightFlavor::Flipped => a * b + (1.0 - a) * (1.0 - b),
            };
            if w < WEIGHT_EPS {
                0.0
            } else {
                w
            }
        })
        .collect();
    Ok(EdgeWeights {
        flavor,
        n: g.n(),
        edges: g.edges().to_vec(),
        values,
    })
}

/// `w_ij = x_i (1 - x_j) + (1 - x_i) x_j` on every edge.
pub fn critical_weights(g: &Graph, xhat: &[f64]) -> Result<EdgeWeights> {
    build(g, xhat, WeightFlavor::Critical)
}

/// `w_ij = x_i x_j + (1 - x_i)(1 - x_j)`: critical edges become the cheapest
/// to cut.
pub fn flipped_weights(g: &Graph, xhat: &[f64]) -> Result<EdgeWeights> {
    build(g, xhat, WeightFlavor::Flipped)
}

/// Laplacian `L = D - W` and normalized Laplacian `D^{-1/2} L D^{-1/2}` of a
/// flipped-weight graph.
#[derive(Debug, Clone)]
pub struct WeightedLaplacian {
    /// Generalized degrees, unclamped.
    pub degrees: Vec<f64>,
    pub laplacian: CsrMatrix,
    pub normalized: CsrMatrix,
}

impl WeightedLaplacian {
    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    /// `Vol(N) = sum_i d_i`.
    pub fn volume(&self) -> f64 {
        self.degrees.iter().sum()
    }
}

pub fn build_laplacian(w: &EdgeWeights) -> Result<WeightedLaplacian> {
    if w.flavor != WeightFlavor::Flipped {
        return Err(Error::InvalidParameter(
            "the Laplacian is built from flipped weights only".into(),
        ));
    }
    if w.values.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let n = w.n;
    let degrees = w.node_strengths();
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| 1.0 / d.max(DEGREE_FLOOR).sqrt())
        .collect();

    let mut lap = Vec::with_capacity(n + 2 * w.edges.len());
    let mut norm = Vec::with_capacity(n + 2 * w.edges.len());
    for (i, &d) in degrees.iter().enumerate() {
        lap.push((i, i, d));
        norm.push((i, i, d * inv_sqrt[i] * inv_sqrt[i]));
    }
    for ((i, j), v) in w.iter() {
        if v == 0.0 {
            continue;
        }
        let s = -v * inv_sqrt[i] * inv_sqrt[j];
        lap.push((i, j, -v));
        lap.push((j, i, -v));
        norm.push((i, j, s));
        norm.push((j, i, s));
    }
    Ok(WeightedLaplacian {
        degrees,
        laplacian: CsrMatrix::from_triplets(n, &lap),
        normalized: CsrMatrix::from_triplets(n, &norm),
    })
}
