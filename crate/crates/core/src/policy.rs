//! Budgeted patch selection: the cut-based delayed policy and the three
//! baselines (reactive, degree, eigenvector centrality).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::epidemic::{check_probabilities, InitialCondition};
use crate::error::{Error, Result};
use crate::graph::{eigenvector_centrality, Graph, CENTRALITY_DEFAULT_TOL};
use crate::partition::{PartitionResult, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Delayed,
    Reactive,
    Degree,
    Eigen,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Delayed, Policy::Reactive, Policy::Degree, Policy::Eigen];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Delayed => "delayed",
            Policy::Reactive => "reactive",
            Policy::Degree => "degree",
            Policy::Eigen => "eigen",
        }
    }

    /// Parses a comma-separated list, keeping first-seen order.
    pub fn parse_list(s: &str) -> Result<Vec<Policy>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let p: Policy = part.parse()?;
            if !out.contains(&p) {
                out.push(p);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidParameter("policy list is empty".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown policy {s:?}")))
    }
}

/// Patch budget as a fraction of the node count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub fraction: f64,
}

impl Budget {
    pub fn new(fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "budget fraction must lie in (0, 1], got {fraction}"
            )));
        }
        Ok(Self { fraction })
    }

    /// `floor(fraction * n)`, which must be at least one.
    pub fn count(&self, n: usize) -> Result<usize> {
        // The epsilon absorbs representation error such as 0.29 * 100.
        let count = (self.fraction * n as f64 + 1e-9).floor() as usize;
        if count == 0 {
            return Err(Error::InvalidParameter(format!(
                "budget {} of {n} nodes rounds down to zero patches",
                self.fraction
            )));
        }
        Ok(count)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchPlan {
    pub policy: Policy,
    /// Patch targets in selection order.
    pub nodes: Vec<usize>,
    pub budget: usize,
    /// The delayed policy found an empty cut-set and fell back to reactive
    /// ordering.
    #[serde(default)]
    pub fallback: bool,
}

impl PatchPlan {
    pub fn tag(&self) -> String {
        if self.fallback {
            format!("{}(reactive-fallback)", self.policy)
        } else {
            self.policy.to_string()
        }
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in &self.nodes {
            m[i] = true;
        }
        m
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy,budget,node\n");
        for node in &self.nodes {
            out.push_str(&format!("{},{},{}\n", self.tag(), self.budget, node));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Top `count` non-source nodes by descending score, ties by ascending id.
pub fn rank_top(scores: &[f64], init: &InitialCondition, count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| !init.is_source(i)).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

fn baseline(policy: Policy, scores: &[f64], init: &InitialCondition, count: usize) -> PatchPlan {
    PatchPlan {
        policy,
        nodes: rank_top(scores, init, count),
        budget: count,
        fallback: false,
    }
}

/// Patches the highest-risk non-sources by predicted infection probability.
pub fn reactive_select(g: &Graph, xhat: &[f64], init: &InitialCondition, budget: Budget) -> Result<PatchPlan> {
    init.check_len(g)?;
    check_probabilities(g, xhat)?;
    Ok(baseline(Policy::Reactive, xhat, init, budget.count(g.n())?))
}

pub fn degree_select(g: &Graph, init: &InitialCondition, budget: Budget) -> Result<PatchPlan> {
    init.check_len(g)?;
    let scores: Vec<f64> = (0..g.n()).map(|i| g.degree(i) as f64).collect();
    Ok(baseline(Policy::Degree, &scores, init, budget.count(g.n())?))
}

pub fn eigen_select(g: &Graph, init: &InitialCondition, budget: Budget) -> Result<PatchPlan> {
    init.check_len(g)?;
    let scores = eigenvector_centrality(g, CENTRALITY_DEFAULT_TOL)?;
    eigen_select_with_scores(g, &scores, init, budget)
}

/// [`eigen_select`] with precomputed centrality scores.
pub fn eigen_select_with_scores(g: &Graph, scores: &[f64], init: &InitialCondition, budget: Budget) -> Result<PatchPlan> {
    init.check_len(g)?;
    Ok(baseline(Policy::Eigen, scores, init, budget.count(g.n())?))
}

/// Greedy cut-set cover.
///
/// Healthy-side endpoints of the cut-set are taken by descending unweighted
/// degree, each pick clearing its cut edges, until the cut-set is empty or
/// the budget is spent. Leftover budget goes to one-hop neighbours of the
/// selected nodes (again by degree), widening ring by ring until the budget
/// or the reachable pool runs out. An empty cut-set falls back to reactive
/// ordering and marks the plan.
pub fn delayed_select(
    g: &Graph,
    part: &PartitionResult,
    init: &InitialCondition,
    xhat: &[f64],
    budget: Budget,
) -> Result<PatchPlan> {
    init.check_len(g)?;
    check_probabilities(g, xhat)?;
    if part.sides.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            actual: part.sides.len(),
        });
    }
    let count = budget.count(g.n())?;
    if part.cutset.is_empty() {
        return Ok(PatchPlan {
            fallback: true,
            ..baseline(Policy::Delayed, xhat, init, count)
        });
    }

    let by_degree = |a: &usize, b: &usize| g.degree(*b).cmp(&g.degree(*a)).then(a.cmp(b));

    // Every cut edge has exactly one healthy endpoint, so a pick only clears
    // its own edges and the greedy order is a plain degree sort.
    let mut boundary: Vec<usize> = part
        .cutset
        .iter()
        .map(|&(i, j)| if part.sides[i] == Side::Healthy { i } else { j })
        .filter(|&h| !init.is_source(h))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    boundary.sort_by(by_degree);

    let mut selected = vec![false; g.n()];
    let mut nodes = Vec::with_capacity(count);
    for h in boundary.into_iter().take(count) {
        selected[h] = true;
        nodes.push(h);
    }

    while nodes.len() < count {
        let mut pool: Vec<usize> = nodes
            .iter()
            .flat_map(|&s| g.neighbors(s).iter().copied())
            .filter(|&v| !selected[v] && !init.is_source(v))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if pool.is_empty() {
            break;
        }
        pool.sort_by(by_degree);
        for v in pool.into_iter().take(count - nodes.len()) {
            selected[v] = true;
            nodes.push(v);
        }
    }

    Ok(PatchPlan {
        policy: Policy::Delayed,
        nodes,
        budget: count,
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::SolverKind;

    /// Cut-set {(h1,i1),(h1,i2),(h2,i3)} with deg(h1)=5, deg(h2)=3.
    ///
    /// Nodes: i1=0 i2=1 i3=2 h1=3 h2=4; h1 also touches 5,6,7; h2 touches 8,9;
    /// node 7 has an extra neighbour 10 to break degree ties among
    /// expansion candidates.
    fn fixture() -> (Graph, PartitionResult, InitialCondition) {
        let edges = [(3, 0), (3, 1), (4, 2), (3, 5), (3, 6), (3, 7), (4, 8), (4, 9), (7, 10), (0, 1), (1, 2)];
        let g = Graph::from_edges(11, edges).unwrap();
        let mut sides = vec![Side::Healthy; 11];
        for i in 0..3 {
            sides[i] = Side::Infected;
        }
        let part = PartitionResult {
            v: sides.iter().map(|s| s.target()).collect(),
            cutset: crate::partition::extract_cutset(&g, &sides),
            sides,
            solver: SolverKind::Uzawa,
            objective: 0.0,
            iterations: 0,
            perturbed: false,
        };
        let init = InitialCondition::from_sources(11, &[0]).unwrap();
        (g, part, init)
    }

    fn frac(k: usize) -> Budget {
        Budget::new(k as f64 / 11.0).unwrap()
    }

    #[test]
    fn delayed_covers_cut_greedily() {
        let (g, part, init) = fixture();
        assert_eq!(part.cutset.len(), 3);
        let xhat = vec![0.0; 11];
        let plan = delayed_select(&g, &part, &init, &xhat, frac(2)).unwrap();
        assert_eq!(plan.nodes, vec![3, 4]);
        let plan = delayed_select(&g, &part, &init, &xhat, frac(1)).unwrap();
        assert_eq!(plan.nodes, vec![3]);
    }

    #[test]
    fn delayed_expands_to_neighbours() {
        let (g, part, init) = fixture();
        let plan = delayed_select(&g, &part, &init, &vec![0.0; 11], frac(4)).unwrap();
        // Pool: 1 (deg 3), 2 (deg 2), 7 (deg 2), 5, 6, 8, 9 (deg 1); source 0 excluded.
        assert_eq!(plan.nodes, vec![3, 4, 1, 2]);
        assert!(!plan.fallback);
    }

    #[test]
    fn delayed_falls_back_on_empty_cut() {
        let (g, mut part, init) = fixture();
        part.cutset.clear();
        let mut xhat = vec![0.0; 11];
        xhat[0] = 1.0;
        xhat[5] = 0.4;
        xhat[9] = 0.3;
        let plan = delayed_select(&g, &part, &init, &xhat, frac(2)).unwrap();
        assert!(plan.fallback);
        assert_eq!(plan.nodes, vec![5, 9]);
        assert_eq!(plan.tag(), "delayed(reactive-fallback)");
    }

    #[test]
    fn reactive_orders_by_risk() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let init = InitialCondition::from_sources(4, &[0]).unwrap();
        let xhat = vec![1.0, 0.4, 0.1, 0.01];
        let plan = reactive_select(&g, &xhat, &init, Budget::new(0.75).unwrap()).unwrap();
        assert_eq!(plan.nodes, vec![1, 2, 3]);
        let plan = reactive_select(&g, &xhat, &init, Budget::new(1.0).unwrap()).unwrap();
        assert_eq!(plan.nodes, vec![1, 2, 3]);
    }

    #[test]
    fn reactive_ties_by_id() {
        let g = Graph::from_edges(5, [(0, 1), (1, 2), (0, 3), (3, 4)]).unwrap();
        let init = InitialCondition::from_sources(5, &[0]).unwrap();
        let xhat = vec![1.0, 0.3, 0.05, 0.3, 0.05];
        let plan = reactive_select(&g, &xhat, &init, Budget::new(0.8).unwrap()).unwrap();
        assert_eq!(plan.nodes, vec![1, 3, 2, 4]);
    }

    #[test]
    fn degree_examples() {
        let star = Graph::from_edges(5, (1..5).map(|i| (0, i))).unwrap();
        let init = InitialCondition::from_sources(5, &[2]).unwrap();
        let plan = degree_select(&star, &init, Budget::new(0.2).unwrap()).unwrap();
        assert_eq!(plan.nodes, vec![0]);
        let c6 = Graph::from_edges(6, (0..6).map(|i| (i, (i + 1) % 6))).unwrap();
        let init = InitialCondition::from_sources(6, &[1]).unwrap();
        let plan = degree_select(&c6, &init, Budget::new(0.5).unwrap()).unwrap();
        assert_eq!(plan.nodes, vec![0, 2, 3]);
        let k2 = Graph::from_edges(2, [(0, 1)]).unwrap();
        let init = InitialCondition::from_sources(2, &[0]).unwrap();
        let plan = degree_select(&k2, &init, Budget::new(0.5).unwrap()).unwrap();
        assert_eq!(plan.nodes, vec![1]);
    }

    #[test]
    fn eigen_examples() {
        let star = Graph::from_edges(5, (1..5).map(|i| (0, i))).unwrap();
        let init = InitialCondition::from_sources(5, &[3]).unwrap();
        let plan = eigen_select(&star, &init, Budget::new(0.2).unwrap()).unwrap();
        assert_eq!(plan.nodes, vec![0]);
        let c5 = Graph::from_edges(5, (0..5).map(|i| (i, (i + 1) % 5))).unwrap();
        let init = InitialCondition::from_sources(5, &[0]).unwrap();
        let plan = eigen_select(&c5, &init, Budget::new(0.4).unwrap()).unwrap();
        assert_eq!(plan.nodes, vec![1, 2]);
    }

    #[test]
    fn budget_rules() {
        assert!(Budget::new(0.0).is_err());
        assert!(Budget::new(1.5).is_err());
        assert_eq!(Budget::new(0.29).unwrap().count(100).unwrap(), 29);
        assert_eq!(Budget::new(0.2).unwrap().count(1000).unwrap(), 200);
        assert!(Budget::new(0.01).unwrap().count(50).is_err());
    }

    #[test]
    fn policy_parsing() {
        assert_eq!(
            Policy::parse_list("delayed, Eigen,delayed").unwrap(),
            vec![Policy::Delayed, Policy::Eigen]
        );
        assert!(Policy::parse_list("").is_err());
        assert!("random".parse::<Policy>().is_err());
    }
}
