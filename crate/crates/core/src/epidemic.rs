//! SI dynamics on a graph: exact stochastic simulation, the mean-field ODE
//! and the two analytic upper bounds on per-node infection probability.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Default truncation tolerance for the transient-bound series.
pub const SERIES_TOL: f64 = 1e-12;
/// Safety cap on series terms; terms decay factorially.
pub const SERIES_MAX_TERMS: usize = 200;

/// Binary infection state at `t = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialCondition {
    infected: Vec<bool>,
}

impl InitialCondition {
    pub fn from_sources(n: usize, sources: &[usize]) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::EmptySources);
        }
        let mut infected = vec![false; n];
        for &s in sources {
            if s >= n {
                return Err(Error::NodeOutOfRange { node: s, n });
            }
            infected[s] = true;
        }
        Ok(Self { infected })
    }

    pub fn from_flags(infected: Vec<bool>) -> Self {
        Self { infected }
    }

    /// Accepts a real vector, rejecting anything outside `{0, 1}`.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let infected = values
            .iter()
            .enumerate()
            .map(|(node, &value)| match value {
                v if v == 0.0 => Ok(false),
                v if v == 1.0 => Ok(true),
                _ => Err(Error::NonBinaryInitial { node, value }),
            })
            .collect::<Result<_>>()?;
        Ok(Self { infected })
    }

    pub fn len(&self) -> usize {
        self.infected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infected.is_empty()
    }

    pub fn is_source(&self, i: usize) -> bool {
        self.infected[i]
    }

    pub fn flags(&self) -> &[bool] {
        &self.infected
    }

    pub fn sources(&self) -> Vec<usize> {
        (0..self.infected.len()).filter(|&i| self.infected[i]).collect()
    }

    pub fn as_values(&self) -> Vec<f64> {
        self.infected.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub(crate) fn check_len(&self, g: &Graph) -> Result<()> {
        check_dim(g.n(), self.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    /// Infection rate per edge per unit time.
    pub beta: f64,
    /// End time of the run (or the evaluation time of a bound).
    pub horizon: f64,
}

impl EpidemicParams {
    pub fn new(beta: f64, horizon: f64) -> Result<Self> {
        let p = Self { beta, horizon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "horizon must be nonnegative, got {}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Sample path of an SI run: the initial state plus time-ordered infections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfectionTrace {
    pub initial: InitialCondition,
    pub events: Vec<(f64, usize)>,
}

impl InfectionTrace {
    pub fn infected_by(&self, t: f64) -> usize {
        let initial = self.initial.flags().iter().filter(|&&b| b).count();
        initial + self.events.partition_point(|&(s, _)| s <= t)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,node\n");
        for (t, node) in &self.events {
            out.push_str(&format!("{t},{node}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Exponential transmission delays, one per edge direction.
///
/// In the SI process every node is infected at most once, so each directed
/// edge fires at most once. Drawing its delay up front gives the exact
/// continuous-time Markov chain (first-passage percolation) and lets several
/// runs share one realisation.
#[derive(Debug, Clone)]
pub struct EdgeDelays {
    /// `[low -> high, high -> low]` for each edge in `Graph::edges` order.
    delays: Vec<[f64; 2]>,
}

impl EdgeDelays {
    pub fn sample(g: &Graph, beta: f64, seed: u64) -> Result<Self> {
        let exp = Exp::new(beta).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let delays = (0..g.num_edges())
            .map(|_| [exp.sample(&mut rng), exp.sample(&mut rng)])
            .collect();
        Ok(Self { delays })
    }

    fn get(&self, edge: usize, from: usize, to: usize) -> f64 {
        self.delays[edge][usize::from(from > to)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    time: f64,
    node: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on time, then node id.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Nodes that become immune at `at` if still healthy then.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Immunization<'a> {
    pub nodes: &'a [bool],
    pub at: f64,
}

/// Infection time of every node (`0` for sources, `INFINITY` if not infected
/// by `horizon`).
///
/// An immunized node that is still healthy at `at` has all its edges
/// deactivated from then on; any infection attempt reaching it at or after
/// `at` is discarded.
pub(crate) fn spread(
    g: &Graph,
    init: &InitialCondition,
    delays: &EdgeDelays,
    horizon: f64,
    immunization: Option<Immunization<'_>>,
) -> Vec<f64> {
    let mut time = vec![f64::INFINITY; g.n()];
    let mut heap = BinaryHeap::new();
    for s in init.sources() {
        heap.push(Pending { time: 0.0, node: s });
    }
    while let Some(Pending { time: t, node }) = heap.pop() {
        if t > horizon {
            break;
        }
        if time[node].is_finite() {
            continue;
        }
        if let Some(imm) = immunization {
            if imm.nodes[node] && t >= imm.at && !init.is_source(node) {
                continue;
            }
        }
        time[node] = t;
        for (nb, edge) in g.incident(node) {
            if time[nb].is_infinite() {
                let arrival = t + delays.get(edge, node, nb);
                if arrival <= horizon {
                    heap.push(Pending {
                        time: arrival,
                        node: nb,
                    });
                }
            }
        }
    }
    time
}

/// Exact SI simulation up to `params.horizon`.
///
/// Each susceptible node with `m` infected neighbours is infected at rate
/// `beta * m`. Identical inputs and seed give an identical trace.
pub fn simulate_si(
    g: &Graph,
    init: &InitialCondition,
    params: &EpidemicParams,
    seed: u64,
) -> Result<InfectionTrace> {
    init.check_len(g)?;
    params.validate()?;
    let delays = EdgeDelays::sample(g, params.beta, seed)?;
    let times = spread(g, init, &delays, params.horizon, None);
    Ok(trace_from_times(init, &times))
}

pub(crate) fn trace_from_times(init: &InitialCondition, times: &[f64]) -> InfectionTrace {
    let mut events: Vec<(f64, usize)> = times
        .iter()
        .enumerate()
        .filter(|&(i, t)| t.is_finite() && !init.is_source(i))
        .map(|(i, &t)| (t, i))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    InfectionTrace {
        initial: init.clone(),
        events,
    }
}

/// Default ODE step, `0.01 / beta`.
pub fn default_dt(beta: f64) -> f64 {
    0.01 / beta
}

/// Integrates `dx_i/dt = beta (1 - x_i) sum_j a_ij x_j` to `params.horizon`
/// with classical fourth-order Runge-Kutta; the last step is shortened to
/// land exactly on the horizon.
pub fn solve_si_mean_field(
    g: &Graph,
    init: &InitialCondition,
    params: &EpidemicParams,
    dt: f64,
) -> Result<Vec<f64>> {
    init.check_len(g)?;
    params.validate()?;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let n = g.n();
    let beta = params.beta;
    let rhs = |x: &[f64], out: &mut [f64]| {
        g.adjacency_mul(x, out);
        for i in 0..n {
            out[i] *= beta * (1.0 - x[i]);
        }
    };

    let mut x = init.as_values();
    let steps = (params.horizon / dt).ceil() as usize;
    let h = if steps > 0 { params.horizon / steps as f64 } else { 0.0 };
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for _ in 0..steps {
        rhs(&x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(x.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// `exp(beta t A) x(0)`, the linearised bound. Not clamped: entries exceed 1
/// once `beta t` is moderate.
///
/// The exponent is split into `2^s` substeps with `h ||A||_inf <= 1/2`, each
/// applied by a Taylor series truncated at double precision.
pub fn linear_bound(g: &Graph, init: &InitialCondition, params: &EpidemicParams) -> Result<Vec<f64>> {
    init.check_len(g)?;
    params.validate()?;
    let tau = params.beta * params.horizon;
    let norm = g.max_degree() as f64;
    let mut x = init.as_values();
    if tau == 0.0 || norm == 0.0 {
        return Ok(x);
    }
    let mut s = 0u32;
    while tau * norm / 2f64.powi(s as i32) > 0.5 {
        s += 1;
    }
    let h = tau / 2f64.powi(s as i32);
    let n = g.n();
    let mut term = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..(1u64 << s) {
        term.copy_from_slice(&x);
        let mut acc = x.clone();
        for k in 1..=60 {
            g.adjacency_mul(&term, &mut next);
            let scale = h / k as f64;
            let mut biggest = 0.0f64;
            for i in 0..n {
                term[i] = next[i] * scale;
                acc[i] += term[i];
                biggest = biggest.max(term[i].abs());
            }
            let size = acc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if biggest <= f64::EPSILON * size {
                break;
            }
        }
        x = acc;
    }
    Ok(x)
}

/// The series exponent `y(t)` of the transient bound.
///
/// `y = -log(1 - x0) + sum_k (beta t)^{k+1}/(k+1)! [A diag(1 - x0)]^k A x0`;
/// sources get `+INFINITY` without evaluating `log(0)`. The series stops when
/// the max-norm of the newest term drops below `tol` or after
/// [`SERIES_MAX_TERMS`] terms.
pub fn transient_exponent(
    g: &Graph,
    init: &InitialCondition,
    params: &EpidemicParams,
    tol: f64,
) -> Result<Vec<f64>> {
    init.check_len(g)?;
    params.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("series tolerance must be positive, got {tol}")));
    }
    let n = g.n();
    let tau = params.beta * params.horizon;
    let healthy: Vec<f64> = init.flags().iter().map(|&b| if b { 0.0 } else { 1.0 }).collect();

    let mut y = vec![0.0; n];
    if tau > 0.0 {
        // term_0 = tau * A x0; term_{k+1} = tau / (k + 2) * A diag(1 - x0) term_k
        let mut term = vec![0.0; n];
        g.adjacency_mul(&init.as_values(), &mut term);
        term.iter_mut().for_each(|v| *v *= tau);
        let mut masked = vec![0.0; n];
        for k in 0..SERIES_MAX_TERMS {
            let mut biggest = 0.0f64;
            for i in 0..n {
                y[i] += term[i];
                biggest = biggest.max(term[i].abs());
            }
            if biggest < tol || k + 1 == SERIES_MAX_TERMS {
                break;
            }
            for i in 0..n {
                masked[i] = term[i] * healthy[i];
            }
            g.adjacency_mul(&masked, &mut term);
            let scale = tau / (k + 2) as f64;
            term.iter_mut().for_each(|v| *v *= scale);
        }
    }
    for (i, yi) in y.iter_mut().enumerate() {
        if init.is_source(i) {
            *yi = f64::INFINITY;
        }
    }
    Ok(y)
}

/// Upper bound `x_hat(t) = 1 - exp(-y(t))` on each node's infection
/// probability; exactly 1 on sources.
pub fn transient_bound(
    g: &Graph,
    init: &InitialCondition,
    params: &EpidemicParams,
    tol: f64,
) -> Result<Vec<f64>> {
    let y = transient_exponent(g, init, params, tol)?;
    Ok(y
        .into_iter()
        .enumerate()
        .map(|(i, yi)| if init.is_source(i) { 1.0 } else { -(-yi).exp_m1() })
        .collect())
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

pub(crate) fn check_probabilities(g: &Graph, xhat: &[f64]) -> Result<()> {
    check_dim(g.n(), xhat.len())?;
    if let Some(v) = xhat.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidParameter(format!(
            "probability {v} outside [0, 1]"
        )));
    }
    Ok(())
}
