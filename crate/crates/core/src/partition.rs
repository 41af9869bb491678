//! Constrained normalized-cut partitioning.
//!
//! Anchor nodes whose state at the patching delay is clear are pinned to
//! `+1` (infected) or `-1` (healthy); the relaxed cut is then solved either
//! with the projected power method or with a single penalised Uzawa step,
//! and the sign of the solution splits the graph.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::epidemic::{check_probabilities, InitialCondition};
use crate::error::{Error, Result};
use crate::graph::{multi_source_bfs, Graph};
use crate::linalg::{conjugate_gradient, dot, max_abs_diff, norm, CsrMatrix};
use crate::weights::{EdgeWeights, WeightedLaplacian};

/// Fraction of the node set that may be anchored.
pub const ANCHOR_FRACTION: f64 = 0.1;
/// Nodes with predicted infection probability above this are labeled infected.
pub const INFECTED_THRESHOLD: f64 = 0.5;
/// Relative residual demanded from the linear solver.
pub const CG_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Infected,
    Healthy,
}

impl Side {
    /// Target value in `B v = c`.
    pub fn target(self) -> f64 {
        match self {
            Side::Infected => 1.0,
            Side::Healthy => -1.0,
        }
    }

    /// Positive entries are infected; zero counts as healthy.
    pub fn of(value: f64) -> Self {
        if value > 0.0 {
            Side::Infected
        } else {
            Side::Healthy
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Infected => "infected",
            Side::Healthy => "healthy",
        })
    }
}

/// Anchored nodes and their labels; row `k` of `B` is the one-hot vector of
/// `anchors[k].0` and `c_k = anchors[k].1.target()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    anchors: Vec<(usize, Side)>,
}

impl ConstraintSet {
    pub fn new(anchors: Vec<(usize, Side)>) -> Result<Self> {
        let mut nodes: Vec<usize> = anchors.iter().map(|a| a.0).collect();
        nodes.sort_unstable();
        if nodes.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("anchor nodes must be distinct".into()));
        }
        let has = |side| anchors.iter().any(|a| a.1 == side);
        if !has(Side::Infected) || !has(Side::Healthy) {
            return Err(Error::MissingAnchorLabel);
        }
        Ok(Self { anchors })
    }

    pub fn anchors(&self) -> &[(usize, Side)] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn with_label(&self, side: Side) -> impl Iterator<Item = usize> + '_ {
        self.anchors.iter().filter(move |a| a.1 == side).map(|a| a.0)
    }

    fn check_range(&self, n: usize) -> Result<()> {
        match self.anchors.iter().find(|a| a.0 >= n) {
            Some(&(node, _)) => Err(Error::NodeOutOfRange { node, n }),
            None => Ok(()),
        }
    }

    /// Dense `B^T c`: the target on anchors, zero elsewhere.
    fn lifted_targets(&self, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; n];
        for &(i, side) in &self.anchors {
            c[i] = side.target();
        }
        c
    }

    fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &(i, _) in &self.anchors {
            m[i] = true;
        }
        m
    }
}

/// Chooses anchors from the predicted infection probabilities at the
/// patching delay.
///
/// Infected anchors are the sources followed by their one-hop neighbours in
/// ascending id. Healthy anchors are nodes with `xhat <= 0.5`, taken in
/// decreasing order of hop distance to the nearest source (unreachable
/// first, ties by ascending id). The total is capped at `floor(0.1 n)`:
/// sources are always kept, neighbours are truncated to fit, and at least one
/// healthy anchor is added even when that overshoots the cap.
pub fn select_constraints(g: &Graph, init: &InitialCondition, xhat: &[f64]) -> Result<ConstraintSet> {
    init.check_len(g)?;
    check_probabilities(g, xhat)?;
    let n = g.n();
    let cap = (ANCHOR_FRACTION * n as f64).floor() as usize;
    let sources = init.sources();
    if sources.is_empty() {
        return Err(Error::EmptySources);
    }

    let mut anchored = vec![false; n];
    let mut anchors: Vec<(usize, Side)> = Vec::new();
    for &s in &sources {
        anchored[s] = true;
        anchors.push((s, Side::Infected));
    }
    let mut neighbours: Vec<usize> = sources
        .iter()
        .flat_map(|&s| g.neighbors(s).iter().copied())
        .filter(|&v| !init.is_source(v))
        .collect();
    neighbours.sort_unstable();
    neighbours.dedup();
    for v in neighbours {
        if anchors.len() >= cap {
            break;
        }
        anchored[v] = true;
        anchors.push((v, Side::Infected));
    }

    let dist = multi_source_bfs(g, &sources)?;
    let mut healthy: Vec<usize> = (0..n)
        .filter(|&i| !anchored[i] && xhat[i] <= INFECTED_THRESHOLD)
        .collect();
    if healthy.is_empty() {
        return Err(Error::NoHealthyNodes);
    }
    healthy.sort_by(|&a, &b| {
        let key = |i: usize| dist[i].unwrap_or(usize::MAX);
        key(b).cmp(&key(a)).then(a.cmp(&b))
    });
    let k = cap.saturating_sub(anchors.len()).max(1);
    anchors.extend(healthy.into_iter().take(k).map(|i| (i, Side::Healthy)));
    ConstraintSet::new(anchors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Ppm,
    Uzawa,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Ppm => "ppm",
            SolverKind::Uzawa => "uzawa",
        })
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ppm" => Ok(SolverKind::Ppm),
            "uzawa" => Ok(SolverKind::Uzawa),
            other => Err(Error::InvalidParameter(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Uzawa penalty.
    pub mu: f64,
    /// Spectral shift in `M = alpha I - L_norm`.
    pub alpha: f64,
    /// PPM stopping threshold on the max-norm change between iterates.
    pub tol: f64,
    /// PPM iteration cap.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mu: 1e4,
            alpha: 2.0,
            tol: 1e-9,
            max_iter: 200_000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.alpha >= 2.0) {
            return Err(Error::InvalidParameter(format!("alpha must be at least 2, got {}", self.alpha)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    /// Relaxed solution.
    pub v: Vec<f64>,
    pub sides: Vec<Side>,
    /// Graph edges whose endpoints fall on opposite sides.
    pub cutset: Vec<(usize, usize)>,
    pub solver: SolverKind,
    /// `v^T L_norm v`.
    pub objective: f64,
    pub iterations: usize,
    /// Set when the PPM start direction had to be perturbed.
    pub perturbed: bool,
}

impl PartitionResult {
    fn assemble(g: &Graph, lap: &WeightedLaplacian, v: Vec<f64>, solver: SolverKind, iterations: usize, perturbed: bool) -> Self {
        let sides: Vec<Side> = v.iter().map(|&x| Side::of(x)).collect();
        let cutset = extract_cutset(g, &sides);
        let objective = dot(&v, &lap.normalized.mul_vec(&v));
        Self {
            v,
            sides,
            cutset,
            solver,
            objective,
            iterations,
            perturbed,
        }
    }

    pub fn side_count(&self, side: Side) -> usize {
        self.sides.iter().filter(|&&s| s == side).count()
    }

    pub fn nodes_csv(&self) -> String {
        let mut out = String::from("node,v,side\n");
        for (i, (v, s)) in self.v.iter().zip(&self.sides).enumerate() {
            out.push_str(&format!("{i},{v},{s}\n"));
        }
        out
    }

    pub fn cutset_csv(&self) -> String {
        let mut out = String::from("i,j\n");
        for (i, j) in &self.cutset {
            out.push_str(&format!("{i},{j}\n"));
        }
        out
    }

    /// Writes `partition_nodes.csv` and `partition_cutset.csv` into `dir`.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("partition_nodes.csv", self.nodes_csv()),
            ("partition_cutset.csv", self.cutset_csv()),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn check_lap(g: &Graph, lap: &WeightedLaplacian, cons: &ConstraintSet) -> Result<()> {
    if lap.n() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            actual: lap.n(),
        });
    }
    cons.check_range(g.n())
}

/// Projected power method on the sphere `||v||^2 = Vol(N)` intersected with
/// `B v = c`.
///
/// With one-hot rows `B B^T = I`, so the projection zeroes the anchored
/// coordinates and `n0 = B^T c`. Each step maps `v` to
/// `gamma P M v / ||P M v|| + n0` with `M = alpha I - L_norm` and
/// `gamma = sqrt(Vol(N) - m)`.
pub fn ppm_solve(g: &Graph, lap: &WeightedLaplacian, cons: &ConstraintSet, opts: &SolverOptions) -> Result<PartitionResult> {
    opts.validate()?;
    check_lap(g, lap, cons)?;
    let n = g.n();
    let m = cons.len();
    let volume = lap.volume();
    if volume <= m as f64 {
        return Err(Error::InfeasibleSphere { volume, anchors: m });
    }
    let n0 = cons.lifted_targets(n);
    let anchored = cons.mask(n);
    if anchored.iter().all(|&a| a) {
        return Ok(PartitionResult::assemble(g, lap, n0, SolverKind::Ppm, 0, false));
    }
    let gamma = (volume - m as f64).sqrt();

    let stretch_project = |v: &[f64], out: &mut Vec<f64>| {
        lap.normalized.mul_vec_into(v, out);
        for i in 0..n {
            out[i] = if anchored[i] { 0.0 } else { opts.alpha * v[i] - out[i] };
        }
    };
    let place = |dir: &[f64], v: &mut Vec<f64>| -> bool {
        let len = norm(dir);
        if !(len > 1e-300) {
            return false;
        }
        for i in 0..n {
            v[i] = gamma * dir[i] / len + n0[i];
        }
        true
    };

    let mut dir = vec![0.0; n];
    stretch_project(&n0, &mut dir);
    let mut perturbed = false;
    if norm(&dir) <= 1e-12 * norm(&n0) {
        // n0 is (numerically) an eigenvector of M, so P M n0 vanishes.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for i in 0..n {
            let r: f64 = rng.random::<f64>() - 0.5;
            dir[i] += if anchored[i] { 0.0 } else { 1e-6 * r };
        }
        perturbed = true;
    }
    let mut v = vec![0.0; n];
    place(&dir, &mut v);

    let mut next = vec![0.0; n];
    for it in 1..=opts.max_iter {
        stretch_project(&v, &mut dir);
        if !place(&dir, &mut next) {
            return Ok(PartitionResult::assemble(g, lap, v, SolverKind::Ppm, it, perturbed));
        }
        let change = max_abs_diff(&v, &next);
        std::mem::swap(&mut v, &mut next);
        if change < opts.tol {
            return Ok(PartitionResult::assemble(g, lap, v, SolverKind::Ppm, it, perturbed));
        }
    }
    Err(Error::NoConvergence {
        what: "projected power method",
        iterations: opts.max_iter,
        residual: max_abs_diff(&v, &next),
    })
}

/// `L_norm + mu B^T B` for one-hot `B`.
pub fn penalized_system(lap: &WeightedLaplacian, cons: &ConstraintSet, mu: f64) -> CsrMatrix {
    let penalty: Vec<f64> = cons.mask(lap.n()).into_iter().map(|a| if a { mu } else { 0.0 }).collect();
    lap.normalized.add_diagonal(&penalty)
}

/// One Uzawa step from zero multipliers: solves
/// `(L_norm + mu B^T B) v = mu B^T c` by preconditioned conjugate gradient.
pub fn uzawa_solve(g: &Graph, lap: &WeightedLaplacian, cons: &ConstraintSet, opts: &SolverOptions) -> Result<PartitionResult> {
    opts.validate()?;
    check_lap(g, lap, cons)?;
    let n = g.n();
    let system = penalized_system(lap, cons, opts.mu);
    let rhs: Vec<f64> = cons.lifted_targets(n).into_iter().map(|c| opts.mu * c).collect();
    let (v, outcome) = conjugate_gradient(&system, &rhs, CG_REL_TOL, 10 * n.max(10))?;
    Ok(PartitionResult::assemble(g, lap, v, SolverKind::Uzawa, outcome.iterations, false))
}

pub fn solve(kind: SolverKind, g: &Graph, lap: &WeightedLaplacian, cons: &ConstraintSet, opts: &SolverOptions) -> Result<PartitionResult> {
    match kind {
        SolverKind::Ppm => ppm_solve(g, lap, cons, opts),
        SolverKind::Uzawa => uzawa_solve(g, lap, cons, opts),
    }
}

/// Edges of `g` whose endpoints lie on different sides.
pub fn extract_cutset(g: &Graph, sides: &[Side]) -> Vec<(usize, usize)> {
    g.edges()
        .iter()
        .copied()
        .filter(|&(i, j)| sides[i] != sides[j])
        .collect()
}

/// `Cut/Vol(U) + Cut/Vol(U^c)` with volumes as sums of weighted degrees.
pub fn ncut_value(w: &EdgeWeights, sides: &[Side]) -> Result<f64> {
    if sides.len() != w.n() {
        return Err(Error::DimensionMismatch {
            expected: w.n(),
            actual: sides.len(),
        });
    }
    let degrees = w.node_strengths();
    let mut vol = [0.0; 2];
    for (d, s) in degrees.iter().zip(sides) {
        vol[usize::from(*s == Side::Healthy)] += d;
    }
    if vol.iter().any(|&v| v <= 0.0) {
        return Err(Error::ZeroVolume);
    }
    let cut: f64 = w
        .iter()
        .filter(|&((i, j), _)| sides[i] != sides[j])
        .map(|(_, x)| x)
        .sum();
    Ok(cut / vol[0] + cut / vol[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epidemic::{transient_bound, EpidemicParams, SERIES_TOL};
    use crate::weights::{build_laplacian, flipped_weights};

    use Side::{Healthy as H, Infected as I};

    fn two_triangles() -> Graph {
        Graph::from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]).unwrap()
    }

    fn unit_laplacian(g: &Graph) -> (EdgeWeights, WeightedLaplacian) {
        let w = flipped_weights(g, &vec![0.0; g.n()]).unwrap();
        let lap = build_laplacian(&w).unwrap();
        (w, lap)
    }

    fn path(n: usize) -> Graph {
        Graph::from_edges(n, (1..n).map(|i| (i - 1, i))).unwrap()
    }

    #[test]
    fn constraint_set_validation() {
        assert!(matches!(ConstraintSet::new(vec![(0, I)]), Err(Error::MissingAnchorLabel)));
        assert!(ConstraintSet::new(vec![(0, I), (0, H)]).is_err());
        assert!(ConstraintSet::new(vec![(0, I), (3, H)]).is_ok());
    }

    #[test]
    fn select_on_path_of_100() {
        let g = path(100);
        let init = InitialCondition::from_sources(100, &[0]).unwrap();
        let xhat = transient_bound(&g, &init, &EpidemicParams::new(0.01, 10.0).unwrap(), SERIES_TOL).unwrap();
        let cons = select_constraints(&g, &init, &xhat).unwrap();
        assert_eq!(cons.with_label(I).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(cons.with_label(H).collect::<Vec<_>>(), (92..100).rev().collect::<Vec<_>>());
        assert_eq!(cons.len(), 10);
    }

    #[test]
    fn select_with_two_sources_prefers_middle() {
        let g = path(41);
        let init = InitialCondition::from_sources(41, &[0, 40]).unwrap();
        let xhat = vec![0.0; 41];
        let cons = select_constraints(&g, &init, &xhat).unwrap();
        let healthy: Vec<usize> = cons.with_label(H).collect();
        // cap 4: sources 0 and 40, neighbours 1 and 39, then one forced healthy anchor.
        assert_eq!(healthy, vec![20]);
    }

    #[test]
    fn select_on_star_truncates_to_source() {
        let g = Graph::from_edges(11, (1..11).map(|i| (0, i))).unwrap();
        let init = InitialCondition::from_sources(11, &[0]).unwrap();
        let mut xhat = vec![0.2; 11];
        xhat[0] = 1.0;
        let cons = select_constraints(&g, &init, &xhat).unwrap();
        assert_eq!(cons.anchors(), &[(0, I), (1, H)]);
        let xhat = vec![1.0; 11];
        assert!(matches!(select_constraints(&g, &init, &xhat), Err(Error::NoHealthyNodes)));
    }

    #[test]
    fn cutset_examples() {
        let g = two_triangles();
        assert!(extract_cutset(&g, &[I; 6]).is_empty());
        assert_eq!(extract_cutset(&g, &[I, I, I, H, H, H]), vec![(2, 3)]);
        let k4 = Graph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        assert_eq!(extract_cutset(&k4, &[I, I, H, H]).len(), 4);
    }

    #[test]
    fn ncut_examples() {
        let g = two_triangles();
        let (w, _) = unit_laplacian(&g);
        assert!((ncut_value(&w, &[I, I, I, H, H, H]).unwrap() - 2.0 / 7.0).abs() < 1e-15);
        let single = ncut_value(&w, &[I, H, H, H, H, H]).unwrap();
        assert!((single - (1.0 + 2.0 / 12.0)).abs() < 1e-12);
        assert!(single > 2.0 / 7.0);
        let c4 = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let (w4, _) = unit_laplacian(&c4);
        assert!((ncut_value(&w4, &[I, I, H, H]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(ncut_value(&w4, &[I; 4]), Err(Error::ZeroVolume)));
    }

    #[test]
    fn uzawa_splits_two_triangles() {
        let g = two_triangles();
        let (_, lap) = unit_laplacian(&g);
        let cons = ConstraintSet::new(vec![(0, I), (5, H)]).unwrap();
        let res = uzawa_solve(&g, &lap, &cons, &SolverOptions::default()).unwrap();
        assert_eq!(res.cutset, vec![(2, 3)]);
        assert_eq!(res.sides, vec![I, I, I, H, H, H]);
    }

    #[test]
    fn uzawa_pins_anchor_with_large_penalty() {
        let g = two_triangles();
        let (_, lap) = unit_laplacian(&g);
        let cons = ConstraintSet::new(vec![(1, I), (4, H)]).unwrap();
        let opts = SolverOptions { mu: 1e8, ..Default::default() };
        let res = uzawa_solve(&g, &lap, &cons, &opts).unwrap();
        assert!((res.v[1] - 1.0).abs() < 1e-3);
        assert!((res.v[4] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn ppm_splits_two_triangles() {
        let g = two_triangles();
        let (_, lap) = unit_laplacian(&g);
        let cons = ConstraintSet::new(vec![(0, I), (5, H)]).unwrap();
        let res = ppm_solve(&g, &lap, &cons, &SolverOptions::default()).unwrap();
        assert_eq!(res.cutset, vec![(2, 3)]);
        assert_eq!(res.v[0], 1.0);
        assert_eq!(res.v[5], -1.0);
        assert!((norm(&res.v).powi(2) - lap.volume()).abs() < 1e-9);
        assert!(!res.perturbed);
    }

    #[test]
    fn ppm_perturbs_degenerate_start() {
        // Anchors cover two K2 components, so L_norm n0 = 0 and n0 is a
        // dominant eigenvector of M.
        let g = Graph::from_edges(7, [(0, 1), (2, 3), (4, 5), (5, 6)]).unwrap();
        let (_, lap) = unit_laplacian(&g);
        let cons = ConstraintSet::new(vec![(0, I), (1, I), (2, H), (3, H)]).unwrap();
        let res = ppm_solve(&g, &lap, &cons, &SolverOptions::default()).unwrap();
        assert!(res.perturbed);
        assert!((norm(&res.v).powi(2) - lap.volume()).abs() < 1e-9);
        assert_eq!(&res.v[..4], &[1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn ppm_fully_constrained_returns_targets() {
        let g = two_triangles();
        let (_, lap) = unit_laplacian(&g);
        let cons = ConstraintSet::new((0..6).map(|i| (i, if i < 3 { I } else { H })).collect()).unwrap();
        let res = ppm_solve(&g, &lap, &cons, &SolverOptions::default()).unwrap();
        assert_eq!(res.v, vec![1.0, 1.0, 1.0, -1.0, -1.0, -1.0]);
        assert_eq!(res.cutset, vec![(2, 3)]);
    }

    #[test]
    fn ppm_infeasible_sphere() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let (_, lap) = unit_laplacian(&g);
        // Vol = 4, four anchors impossible on 3 nodes; use 3 anchors on a
        // graph of volume 2 instead.
        let k2 = Graph::from_edges(2, [(0, 1)]).unwrap();
        let (_, lap2) = unit_laplacian(&k2);
        let cons = ConstraintSet::new(vec![(0, I), (1, H)]).unwrap();
        assert!(matches!(
            ppm_solve(&k2, &lap2, &cons, &SolverOptions::default()),
            Err(Error::InfeasibleSphere { .. })
        ));
        assert!(ppm_solve(&g, &lap, &cons, &SolverOptions::default()).is_ok());
    }

    #[test]
    fn solver_options_validation() {
        let bad = SolverOptions { alpha: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverOptions { mu: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert_eq!("PPM".parse::<SolverKind>().unwrap(), SolverKind::Ppm);
        assert!("lu".parse::<SolverKind>().is_err());
    }
}
