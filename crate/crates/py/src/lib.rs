//! Python bindings: graphs, risk bounds, constrained partitions, patch plans
//! and Monte Carlo experiments.

use std::path::PathBuf;

use delaypatch_core as core;
use delaypatch_core::epidemic::{default_dt, SERIES_TOL};
use delaypatch_core::harness::plan_trial;
use delaypatch_core::{Error, ExperimentConfig, GraphSource, InitialCondition, Policy, SbmSpec, Side, SolverKind};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::NoConvergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for core::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Undirected simple graph with nodes `0..n`.
#[pyclass(frozen, module = "delaypatch")]
struct Graph {
    inner: core::Graph,
}

#[pymethods]
impl Graph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Self {
            inner: core::Graph::from_edges(n, edges).py_err()?,
        })
    }

    /// Loads a whitespace-separated edge list, keeping the largest component.
    #[staticmethod]
    fn from_edgelist(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: core::load_edgelist(path).py_err()?,
        })
    }

    /// Stochastic block model, restricted to its largest component.
    #[staticmethod]
    #[pyo3(signature = (n, k, avg_degree = SbmSpec::DEFAULT_AVG_DEGREE, in_out_ratio = SbmSpec::DEFAULT_IN_OUT_RATIO, seed = 0))]
    fn sbm(n: usize, k: usize, avg_degree: f64, in_out_ratio: f64, seed: u64) -> PyResult<Self> {
        let spec = SbmSpec {
            n,
            k,
            avg_degree,
            in_out_ratio,
            seed,
        };
        Ok(Self {
            inner: core::generate_sbm(&spec).py_err()?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn neighbors(&self, i: usize) -> PyResult<Vec<usize>> {
        self.check(i)?;
        Ok(self.inner.neighbors(i).to_vec())
    }

    fn degree(&self, i: usize) -> PyResult<usize> {
        self.check(i)?;
        Ok(self.inner.degree(i))
    }

    fn write_edgelist(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_edgelist(path).py_err()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.inner.n(), self.inner.num_edges())
    }
}

impl Graph {
    fn check(&self, i: usize) -> PyResult<()> {
        if i < self.inner.n() {
            Ok(())
        } else {
            Err(to_py(Error::NodeOutOfRange { node: i, n: self.inner.n() }))
        }
    }

    fn init(&self, sources: &[usize]) -> PyResult<InitialCondition> {
        InitialCondition::from_sources(self.inner.n(), sources).py_err()
    }
}

fn params(beta: f64, t: f64) -> PyResult<core::EpidemicParams> {
    core::EpidemicParams::new(beta, t).py_err()
}

/// Transient upper bound on each node's infection probability at time `t`.
#[pyfunction]
#[pyo3(signature = (graph, sources, beta, t, tol = SERIES_TOL))]
fn transient_bound(graph: &Graph, sources: Vec<usize>, beta: f64, t: f64, tol: f64) -> PyResult<Vec<f64>> {
    core::transient_bound(&graph.inner, &graph.init(&sources)?, &params(beta, t)?, tol).py_err()
}

/// Linearised bound `exp(beta t A) x0`; entries may exceed 1.
#[pyfunction]
fn linear_bound(graph: &Graph, sources: Vec<usize>, beta: f64, t: f64) -> PyResult<Vec<f64>> {
    core::linear_bound(&graph.inner, &graph.init(&sources)?, &params(beta, t)?).py_err()
}

/// Mean-field SI probabilities at time `t`.
#[pyfunction]
#[pyo3(signature = (graph, sources, beta, t, dt = None))]
fn mean_field(graph: &Graph, sources: Vec<usize>, beta: f64, t: f64, dt: Option<f64>) -> PyResult<Vec<f64>> {
    let dt = dt.unwrap_or_else(|| default_dt(beta));
    core::solve_si_mean_field(&graph.inner, &graph.init(&sources)?, &params(beta, t)?, dt).py_err()
}

/// One exact SI run; returns `(time, node)` infection events in time order.
#[pyfunction]
fn simulate_si(graph: &Graph, sources: Vec<usize>, beta: f64, horizon: f64, seed: u64) -> PyResult<Vec<(f64, usize)>> {
    let trace = core::simulate_si(&graph.inner, &graph.init(&sources)?, &params(beta, horizon)?, seed).py_err()?;
    Ok(trace.events)
}

/// Result of the constrained normalized cut.
#[pyclass(frozen, get_all, module = "delaypatch")]
struct Partition {
    /// Relaxed solution.
    v: Vec<f64>,
    /// `True` for nodes on the infected side.
    infected: Vec<bool>,
    cutset: Vec<(usize, usize)>,
    solver: String,
    objective: f64,
    iterations: usize,
    perturbed: bool,
}

#[pymethods]
impl Partition {
    fn __repr__(&self) -> String {
        let inside = self.infected.iter().filter(|&&b| b).count();
        format!(
            "Partition(solver={}, infected_side={inside}, cut_edges={})",
            self.solver,
            self.cutset.len()
        )
    }
}

fn solver_options(mu: f64) -> core::SolverOptions {
    core::SolverOptions {
        mu,
        ..core::SolverOptions::default()
    }
}

fn parse_solver(name: &str) -> PyResult<SolverKind> {
    name.parse().py_err()
}

/// Runs the bound, anchor selection and constrained cut for sources at the
/// patching delay `t`.
#[pyfunction]
#[pyo3(signature = (graph, sources, beta, t, solver = "uzawa", mu = 1e4))]
fn partition(graph: &Graph, sources: Vec<usize>, beta: f64, t: f64, solver: &str, mu: f64) -> PyResult<Partition> {
    let g = &graph.inner;
    let init = graph.init(&sources)?;
    let xhat = core::transient_bound(g, &init, &params(beta, t)?, SERIES_TOL).py_err()?;
    let cons = core::select_constraints(g, &init, &xhat).py_err()?;
    let lap = core::build_laplacian(&core::flipped_weights(g, &xhat).py_err()?).py_err()?;
    let res = core::partition::solve(parse_solver(solver)?, g, &lap, &cons, &solver_options(mu)).py_err()?;
    Ok(Partition {
        infected: res.sides.iter().map(|&s| s == Side::Infected).collect(),
        v: res.v,
        cutset: res.cutset,
        solver: res.solver.to_string(),
        objective: res.objective,
        iterations: res.iterations,
        perturbed: res.perturbed,
    })
}

/// Patch plans for the given policies as `(tag, nodes)` pairs, nodes in
/// selection order.
#[pyfunction]
#[pyo3(signature = (graph, sources, beta, t, budget, policies = "delayed,reactive,degree,eigen", solver = "uzawa", mu = 1e4))]
#[allow(clippy::too_many_arguments)]
fn select(
    graph: &Graph,
    sources: Vec<usize>,
    beta: f64,
    t: f64,
    budget: f64,
    policies: &str,
    solver: &str,
    mu: f64,
) -> PyResult<Vec<(String, Vec<usize>)>> {
    let mut cfg = ExperimentConfig::new(GraphSource::EdgeList { path: PathBuf::new() }, beta, t, budget, 1, 0);
    cfg.policies = Policy::parse_list(policies).py_err()?;
    cfg.solver = parse_solver(solver)?;
    cfg.solver_options = solver_options(mu);
    let init = graph.init(&sources)?;
    let plans = plan_trial(&graph.inner, &init, &cfg, None)
        .py_err()?
        .ok_or_else(|| to_py(Error::NoHealthyNodes))?;
    Ok(plans.into_iter().map(|p| (p.tag(), p.nodes)).collect())
}

/// Aggregated Monte Carlo trajectories.
#[pyclass(frozen, module = "delaypatch")]
struct Experiment {
    inner: core::TrajectoryResult,
}

#[pymethods]
impl Experiment {
    #[getter]
    fn time(&self) -> Vec<f64> {
        self.inner.time.clone()
    }

    #[getter]
    fn nodes(&self) -> usize {
        self.inner.nodes
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.config.seed
    }

    #[getter]
    fn saturated_trials(&self) -> usize {
        self.inner.saturated_trials
    }

    fn policies(&self) -> Vec<String> {
        self.inner.policies.iter().map(|p| p.policy.to_string()).collect()
    }

    fn mean_infected(&self, policy: &str) -> PyResult<Vec<f64>> {
        Ok(self.trajectory(policy)?.mean_infected.clone())
    }

    fn std_infected(&self, policy: &str) -> PyResult<Vec<f64>> {
        Ok(self.trajectory(policy)?.std_infected.clone())
    }

    fn final_counts(&self, policy: &str) -> PyResult<Vec<usize>> {
        Ok(self.trajectory(policy)?.final_counts.clone())
    }

    /// Writes `results.csv` and `results.json` into `dir`.
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        core::write_results(&self.inner, dir).py_err()
    }

    fn plot(&self, path: PathBuf) -> PyResult<()> {
        core::emit_plot(&self.inner, path).py_err()
    }

    fn __repr__(&self) -> String {
        let finals: Vec<String> = self
            .inner
            .policies
            .iter()
            .map(|p| format!("{}={:.1}", p.policy, p.mean_final()))
            .collect();
        format!("Experiment(nodes={}, {})", self.inner.nodes, finals.join(", "))
    }
}

impl Experiment {
    fn trajectory(&self, policy: &str) -> PyResult<&core::harness::PolicyTrajectory> {
        let p: Policy = policy.parse().py_err()?;
        self.inner
            .policy(p)
            .ok_or_else(|| PyValueError::new_err(format!("policy {p} was not run")))
    }
}

/// Runs a policy comparison on `graph`. `sources` is a count of random
/// sources per trial; `source_ids` pins them instead.
#[pyfunction]
#[pyo3(signature = (
    graph, beta, t, budget, trials = 100, seed = 0, sources = None, source_ids = None,
    horizon = core::harness::DEFAULT_HORIZON, policies = "delayed,reactive,degree,eigen", solver = "uzawa", mu = 1e4,
))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    graph: &Graph,
    beta: f64,
    t: f64,
    budget: f64,
    trials: usize,
    seed: u64,
    sources: Option<usize>,
    source_ids: Option<Vec<usize>>,
    horizon: f64,
    policies: &str,
    solver: &str,
    mu: f64,
) -> PyResult<Experiment> {
    let mut cfg = ExperimentConfig::new(GraphSource::EdgeList { path: PathBuf::new() }, beta, t, budget, trials, seed);
    cfg.n_sources = sources;
    cfg.source_ids = source_ids;
    cfg.horizon = horizon;
    cfg.policies = Policy::parse_list(policies).py_err()?;
    cfg.solver = parse_solver(solver)?;
    cfg.solver_options = solver_options(mu);
    let g = &graph.inner;
    let inner = py.detach(|| core::harness::run_experiment_on(g, &cfg)).py_err()?;
    Ok(Experiment { inner })
}

#[pymodule]
fn delaypatch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<Partition>()?;
    m.add_class::<Experiment>()?;
    m.add_function(wrap_pyfunction!(transient_bound, m)?)?;
    m.add_function(wrap_pyfunction!(linear_bound, m)?)?;
    m.add_function(wrap_pyfunction!(mean_field, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_si, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
