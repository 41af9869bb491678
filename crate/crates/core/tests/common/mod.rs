//! Shared fixtures and dense oracles for the integration tests.
#![allow(dead_code)]

use delaypatch_core::linalg::CsrMatrix;
use delaypatch_core::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Connected Erdos-Renyi style graph: a one-block SBM restricted to its
/// largest component. The degree is capped so tiny graphs stay feasible.
pub fn random_graph(n: usize, avg_degree: f64, seed: u64) -> Graph {
    let spec = SbmSpec {
        n,
        k: 1,
        avg_degree: avg_degree.min(0.8 * (n - 1) as f64),
        in_out_ratio: SbmSpec::DEFAULT_IN_OUT_RATIO,
        seed,
    };
    generate_sbm(&spec).expect("feasible random graph")
}

pub fn random_probabilities(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// `k` infected and `k` healthy anchors on distinct random nodes.
pub fn random_anchors(n: usize, k: usize, seed: u64) -> ConstraintSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, n, 2 * k).into_vec();
    let anchors = picked
        .iter()
        .enumerate()
        .map(|(r, &i)| (i, if r < k { Side::Infected } else { Side::Healthy }))
        .collect();
    ConstraintSet::new(anchors).unwrap()
}

pub fn dense(m: &CsrMatrix) -> DMatrix<f64> {
    let n = m.dim();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, v) in m.row(i) {
            d[(i, j)] += v;
        }
    }
    d
}

/// Exact minimiser of `v^T L_norm v` subject to the anchor equalities, from
/// the dense KKT system `[L B^T; B 0] [v; lambda] = [0; c]`.
pub fn kkt_solution(lap: &WeightedLaplacian, cons: &ConstraintSet) -> DVector<f64> {
    let n = lap.n();
    let m = cons.len();
    let l = dense(&lap.normalized);
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&l);
    let mut rhs = DVector::zeros(n + m);
    for (r, &(i, side)) in cons.anchors().iter().enumerate() {
        k[(n + r, i)] = 1.0;
        k[(i, n + r)] = 1.0;
        rhs[n + r] = side.target();
    }
    let sol = k.lu().solve(&rhs).expect("nonsingular KKT system");
    sol.rows(0, n).into_owned()
}

/// Exhaustive minimum of the normalized cut over bipartitions that honour
/// the anchors. Bipartitions with an empty-volume side are skipped.
pub fn brute_force_ncut(w: &EdgeWeights, cons: &ConstraintSet) -> (Vec<Side>, f64) {
    let n = w.n();
    assert!(n <= 20, "brute force is exponential");
    let mut best = (Vec::new(), f64::INFINITY);
    for mask in 0u32..(1 << n) {
        let sides: Vec<Side> = (0..n)
            .map(|i| if mask >> i & 1 == 1 { Side::Infected } else { Side::Healthy })
            .collect();
        if cons.anchors().iter().any(|&(i, s)| sides[i] != s) {
            continue;
        }
        if let Ok(value) = ncut_value(w, &sides) {
            if value < best.1 {
                best = (sides, value);
            }
        }
    }
    best
}

/// Two triangles `{0,1,2}` and `{3,4,5}` joined by the bridge `2-3`.
pub fn two_triangles() -> Graph {
    Graph::from_edges(6, [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5)]).unwrap()
}
