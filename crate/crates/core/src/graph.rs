//! Undirected, unweighted graphs: construction, SNAP edge-list ingestion,
//! stochastic block model sampling and the structural queries the policies
//! rely on.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::max_abs_diff;

/// Immutable simple undirected graph on nodes `0..n`.
///
/// Edges are stored once as `(i, j)` with `i < j`, sorted. The adjacency is
/// kept in CSR form; each adjacency slot also records the id of its edge so
/// per-edge data can be looked up from either endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    edge_ids: Vec<usize>,
}

impl Graph {
    /// Builds a graph from an arbitrary pair list. Self-loops are dropped and
    /// duplicate or reversed pairs collapse into one edge.
    pub fn from_edges<I>(n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut edges = Vec::new();
        for (u, v) in pairs {
            for node in [u, v] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
            }
            if u != v {
                edges.push((u.min(v), u.max(v)));
            }
        }
        edges.sort_unstable();
        edges.dedup();

        let mut deg = vec![0usize; n];
        for &(u, v) in &edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &deg {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0; 2 * edges.len()];
        let mut edge_ids = vec![0; 2 * edges.len()];
        // Edges are sorted, so each neighbor list comes out ascending.
        for (e, &(u, v)) in edges.iter().enumerate() {
            neighbors[fill[u]] = v;
            edge_ids[fill[u]] = e;
            fill[u] += 1;
        }
        for (e, &(u, v)) in edges.iter().enumerate() {
            neighbors[fill[v]] = u;
            edge_ids[fill[v]] = e;
            fill[v] += 1;
        }
        for i in 0..n {
            let span = offsets[i]..offsets[i + 1];
            let mut pairs: Vec<(usize, usize)> = neighbors[span.clone()]
                .iter()
                .copied()
                .zip(edge_ids[span.clone()].iter().copied())
                .collect();
            pairs.sort_unstable();
            for (k, (nb, e)) in pairs.into_iter().enumerate() {
                neighbors[span.start + k] = nb;
                edge_ids[span.start + k] = e;
            }
        }

        Ok(Self {
            n,
            edges,
            offsets,
            neighbors,
            edge_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Neighbors of `i` paired with the id of the connecting edge.
    pub fn incident(&self, i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let span = self.offsets[i]..self.offsets[i + 1];
        self.neighbors[span.clone()]
            .iter()
            .copied()
            .zip(self.edge_ids[span].iter().copied())
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Id of edge `{i, j}` in [`Graph::edges`], if present.
    pub fn edge_id(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (i.min(j), i.max(j));
        self.edges.binary_search(&(a, b)).ok()
    }

    /// `y = A x` for the unweighted adjacency.
    pub fn adjacency_mul(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.neighbors(i).iter().map(|&j| x[j]).sum();
        }
    }

    /// Max row sum of the adjacency, i.e. the maximum degree.
    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// Connected components as a label per node (labels in order of first
    /// node) plus the component count.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut label = vec![usize::MAX; self.n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbors(u) {
                    if label[v] == usize::MAX {
                        label[v] = count;
                        queue.push_back(v);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn is_connected(&self) -> bool {
        self.n > 0 && self.components().1 == 1
    }

    /// Induced subgraph on `keep` (ascending), relabelled to `0..keep.len()`
    /// in that order.
    pub fn induced(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(u, v)| map[u] != usize::MAX && map[v] != usize::MAX)
            .map(|&(u, v)| (map[u], map[v]));
        Self::from_edges(keep.len(), edges).expect("relabelled ids are in range")
    }

    /// Writes the graph as a whitespace-separated `u v` edge list.
    pub fn write_edgelist(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::with_capacity(self.edges.len() * 12);
        for &(u, v) in &self.edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Reads a SNAP-style edge list: one `u v` pair per line, `#` comments.
///
/// Node ids are relabelled to `0..n` in order of first appearance. Self-loops
/// are skipped before relabelling, so a node that only appears in a self-loop
/// does not exist in the result.
pub fn load_edgelist(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edgelist(&text)
}

pub fn parse_edgelist(text: &str) -> Result<Graph> {
    let mut ids: HashMap<u64, usize> = HashMap::new();
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::Parse {
                line: lineno + 1,
                token: line.to_string(),
            });
        }
        let mut ends = [0u64; 2];
        for (slot, tok) in ends.iter_mut().zip(&tokens) {
            *slot = tok.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                token: tok.to_string(),
            })?;
        }
        if ends[0] == ends[1] {
            continue;
        }
        let mut label = |raw: u64| {
            let next = ids.len();
            *ids.entry(raw).or_insert(next)
        };
        let (u, v) = (label(ends[0]), label(ends[1]));
        pairs.push((u, v));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyGraph);
    }
    Graph::from_edges(ids.len(), pairs)
}

/// Parameters of a planted-partition stochastic block model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub n: usize,
    pub k: usize,
    pub avg_degree: f64,
    /// Ratio of intra- to inter-community edge probability.
    pub in_out_ratio: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub const DEFAULT_AVG_DEGREE: f64 = 8.0;
    pub const DEFAULT_IN_OUT_RATIO: f64 = 10.0;

    pub fn new(n: usize, k: usize, seed: u64) -> Self {
        Self {
            n,
            k,
            avg_degree: Self::DEFAULT_AVG_DEGREE,
            in_out_ratio: Self::DEFAULT_IN_OUT_RATIO,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n < self.k {
            return Err(Error::InvalidParameter(format!(
                "SBM needs n >= k >= 1 (n = {}, k = {})",
                self.n, self.k
            )));
        }
        if !(self.avg_degree > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "SBM average degree must be positive, got {}",
                self.avg_degree
            )));
        }
        if !(self.in_out_ratio > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "SBM in/out ratio must exceed 1, got {}",
                self.in_out_ratio
            )));
        }
        Ok(())
    }

    /// Community sizes: the first `n mod k` communities get one extra node.
    pub fn community_sizes(&self) -> Vec<usize> {
        let base = self.n / self.k;
        let extra = self.n % self.k;
        (0..self.k).map(|c| base + usize::from(c < extra)).collect()
    }

    /// `(p_in, p_out)` such that the expected mean degree equals
    /// `avg_degree`.
    pub fn probabilities(&self) -> Result<(f64, f64)> {
        self.validate()?;
        let sizes = self.community_sizes();
        let n = self.n as f64;
        let total_pairs = n * (n - 1.0) / 2.0;
        let intra: f64 = sizes.iter().map(|&s| (s * s.saturating_sub(1)) as f64 / 2.0).sum();
        let inter = total_pairs - intra;
        let effective = intra + inter / self.in_out_ratio;
        if effective <= 0.0 {
            return Err(Error::InvalidParameter(
                "SBM has no node pairs to connect".into(),
            ));
        }
        let p_in = self.avg_degree * n / 2.0 / effective;
        if p_in > 1.0 {
            return Err(Error::InfeasibleSbm { p_in });
        }
        Ok((p_in, p_in / self.in_out_ratio))
    }
}

/// Samples an SBM and returns its largest connected component.
pub fn generate_sbm(spec: &SbmSpec) -> Result<Graph> {
    generate_sbm_labeled(spec).map(|(g, _)| g)
}

/// Like [`generate_sbm`], also returning each kept node's community.
pub fn generate_sbm_labeled(spec: &SbmSpec) -> Result<(Graph, Vec<usize>)> {
    let (p_in, p_out) = spec.probabilities()?;
    let sizes = spec.community_sizes();
    let mut starts = vec![0usize; sizes.len()];
    for c in 1..sizes.len() {
        starts[c] = starts[c - 1] + sizes[c - 1];
    }
    let community: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = Vec::new();
    for a in 0..sizes.len() {
        // Lower triangle of the diagonal block.
        let s = sizes[a];
        let total = s * s.saturating_sub(1) / 2;
        sample_bernoulli_indices(&mut rng, total, p_in, |idx| {
            let (i, j) = unrank_pair(idx);
            pairs.push((starts[a] + i, starts[a] + j));
        });
        for b in (a + 1)..sizes.len() {
            let cols = sizes[b];
            sample_bernoulli_indices(&mut rng, sizes[a] * cols, p_out, |idx| {
                pairs.push((starts[a] + idx / cols, starts[b] + idx % cols));
            });
        }
    }

    let full = Graph::from_edges(spec.n, pairs)?;
    let (label, count) = full.components();
    let mut size = vec![0usize; count];
    for &l in &label {
        size[l] += 1;
    }
    // Ties go to the component containing the lowest node id.
    let best = (0..count).fold(0, |best, c| if size[c] > size[best] { c } else { best });
    let keep: Vec<usize> = (0..spec.n).filter(|&i| label[i] == best).collect();
    let communities = keep.iter().map(|&i| community[i]).collect();
    Ok((full.induced(&keep), communities))
}

/// Calls `emit` for each index in `0..total` independently with probability
/// `p`, skipping geometrically between successes.
fn sample_bernoulli_indices(rng: &mut ChaCha8Rng, total: usize, p: f64, mut emit: impl FnMut(usize)) {
    if total == 0 || p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        (0..total).for_each(emit);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut idx: usize = 0;
    loop {
        let u: f64 = 1.0 - rng.random::<f64>();
        let skip = (u.ln() / log_q).floor();
        if skip >= (total - idx) as f64 {
            return;
        }
        idx += skip as usize;
        emit(idx);
        idx += 1;
        if idx >= total {
            return;
        }
    }
}

/// Maps `idx` in `0..s(s-1)/2` to the pair `(i, j)`, `j < i`, in row order.
fn unrank_pair(idx: usize) -> (usize, usize) {
    let mut i = ((((8 * idx + 1) as f64).sqrt() + 1.0) / 2.0).floor() as usize;
    while i * (i - 1) / 2 > idx {
        i -= 1;
    }
    while (i + 1) * i / 2 <= idx {
        i += 1;
    }
    (i, idx - i * (i - 1) / 2)
}

/// Hop distance to the nearest of `sources`; `None` means unreachable.
pub fn multi_source_bfs(g: &Graph, sources: &[usize]) -> Result<Vec<Option<usize>>> {
    if sources.is_empty() {
        return Err(Error::EmptySources);
    }
    let mut dist = vec![None; g.n()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if s >= g.n() {
            return Err(Error::NodeOutOfRange { node: s, n: g.n() });
        }
        if dist[s].is_none() {
            dist[s] = Some(0);
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for &v in g.neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    Ok(dist)
}

pub fn degrees(g: &Graph) -> Vec<usize> {
    (0..g.n()).map(|i| g.degree(i)).collect()
}

pub const CENTRALITY_MAX_ITER: usize = 10_000;
pub const CENTRALITY_DEFAULT_TOL: f64 = 1e-10;

/// Dominant eigenvector of the adjacency, unit Euclidean norm, nonnegative.
///
/// Power iteration runs on `A + I` from the all-ones vector. The shift leaves
/// the eigenvectors unchanged and makes the Perron root strictly dominant in
/// magnitude, so bipartite graphs (stars, paths, trees) converge instead of
/// oscillating between two iterates.
pub fn eigenvector_centrality(g: &Graph, tol: f64) -> Result<Vec<f64>> {
    let n = g.n();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0; n];
    let mut change = f64::INFINITY;
    for _ in 0..CENTRALITY_MAX_ITER {
        g.adjacency_mul(&x, &mut y);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += xi;
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for yi in y.iter_mut() {
            *yi /= norm;
        }
        change = max_abs_diff(&x, &y);
        std::mem::swap(&mut x, &mut y);
        if change < tol {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        what: "eigenvector centrality",
        iterations: CENTRALITY_MAX_ITER,
        residual: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn path(n: usize) -> Graph {
        Graph::from_edges(n, (1..n).map(|i| (i - 1, i))).unwrap()
    }

    fn star(leaves: usize) -> Graph {
        Graph::from_edges(leaves + 1, (1..=leaves).map(|i| (0, i))).unwrap()
    }

    fn cycle(n: usize) -> Graph {
        Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
    }

    #[test]
    fn from_edges_dedups_and_drops_loops() {
        let g = Graph::from_edges(3, [(0, 1), (1, 0), (2, 2), (1, 2)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert!(g.has_edge(2, 1));
        assert!(!g.has_edge(0, 2));
        assert_eq!(g.edge_id(2, 1), Some(1));
        assert!(matches!(
            Graph::from_edges(2, [(0, 2)]),
            Err(Error::NodeOutOfRange { node: 2, n: 2 })
        ));
    }

    #[test]
    fn parse_simple() {
        let g = parse_edgelist("0 1\n1 2").unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn parse_relabels_and_dedups() {
        let g = parse_edgelist("# c\n5 7\n7 5").unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn parse_first_appearance_order() {
        let g = parse_edgelist("10 3\n3 42\n").unwrap();
        // 10 -> 0, 3 -> 1, 42 -> 2
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn parse_errors() {
        match parse_edgelist("0 1\n# x\n1 b\n") {
            Err(Error::Parse { line, token }) => {
                assert_eq!(line, 3);
                assert_eq!(token, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_edgelist("# only\n3 3\n"), Err(Error::EmptyGraph)));
        assert!(matches!(load_edgelist("/nonexistent/x.txt"), Err(Error::Io { .. })));
    }

    #[test]
    fn bfs_examples() {
        let p = path(3);
        assert_eq!(multi_source_bfs(&p, &[0]).unwrap(), vec![Some(0), Some(1), Some(2)]);
        assert_eq!(multi_source_bfs(&p, &[0, 2]).unwrap(), vec![Some(0), Some(1), Some(0)]);
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        assert_eq!(multi_source_bfs(&g, &[0]).unwrap(), vec![Some(0), Some(1), None]);
        assert!(matches!(multi_source_bfs(&g, &[]), Err(Error::EmptySources)));
    }

    #[test]
    fn degree_examples() {
        assert_eq!(degrees(&star(4)), vec![4, 1, 1, 1, 1]);
        assert_eq!(degrees(&cycle(5)), vec![2; 5]);
        assert_eq!(degrees(&path(2)), vec![1, 1]);
    }

    #[test]
    fn centrality_star_and_cycle() {
        let s = eigenvector_centrality(&star(4), 1e-12).unwrap();
        let argmax = (0..5).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        assert_eq!(argmax, 0);
        let c = eigenvector_centrality(&cycle(5), 1e-12).unwrap();
        for v in &c {
            assert!((v - c[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn centrality_path3_matches_closed_form() {
        // Dominant eigenvector of P3 is (1, sqrt2, 1) / 2.
        let v = eigenvector_centrality(&path(3), 1e-13).unwrap();
        let expect = [0.5, std::f64::consts::SQRT_2 / 2.0, 0.5];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-10, "{v:?}");
        }
    }

    #[test]
    fn unrank_pair_enumerates_lower_triangle() {
        let mut seen = Vec::new();
        for idx in 0..(7 * 6 / 2) {
            seen.push(unrank_pair(idx));
        }
        let expected: Vec<(usize, usize)> =
            (1..7).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn sbm_validation() {
        let mut spec = SbmSpec::new(10, 0, 1);
        assert!(matches!(generate_sbm(&spec), Err(Error::InvalidParameter(_))));
        spec.k = 11;
        assert!(generate_sbm(&spec).is_err());
        spec.k = 2;
        spec.in_out_ratio = 1.0;
        assert!(generate_sbm(&spec).is_err());
        spec.in_out_ratio = 10.0;
        spec.avg_degree = 0.0;
        assert!(generate_sbm(&spec).is_err());
    }

    #[test]
    fn sbm_near_equal_sizes() {
        assert_eq!(SbmSpec::new(10, 3, 0).community_sizes(), vec![4, 3, 3]);
    }

    #[test]
    fn sbm_infeasible_degree() {
        let spec = SbmSpec {
            n: 4,
            k: 2,
            avg_degree: 3.0,
            in_out_ratio: 1e9,
            seed: 0,
        };
        assert!(matches!(generate_sbm(&spec), Err(Error::InfeasibleSbm { .. })));
    }

    #[test]
    fn sbm_limit_two_cliques() {
        // p_out ~ 1e-9: two K2 blocks, the first is kept.
        let spec = SbmSpec {
            n: 4,
            k: 2,
            avg_degree: 1.0,
            in_out_ratio: 1e9,
            seed: 3,
        };
        let (g, comm) = generate_sbm_labeled(&spec).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(comm, vec![0, 0]);
    }

    #[test]
    fn sbm_is_reproducible() {
        let spec = SbmSpec::new(500, 3, 11);
        assert_eq!(generate_sbm(&spec).unwrap(), generate_sbm(&spec).unwrap());
        let other = SbmSpec { seed: 12, ..spec };
        assert_ne!(generate_sbm(&spec).unwrap(), generate_sbm(&other).unwrap());
    }

    #[test]
    fn induced_relabels() {
        let g = path(5).induced(&[1, 2, 4]);
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges(), &[(0, 1)]);
    }
}
