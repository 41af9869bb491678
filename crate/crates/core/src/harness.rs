//! Monte Carlo experiment runner with delayed-patching semantics.
//!
//! Every trial redraws the sources, runs the one-shot policy pipeline at
//! `t = 0` and replays one shared epidemic realisation (common random
//! numbers) under each policy's patch plan.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::epidemic::{
    spread, transient_bound, EdgeDelays, EpidemicParams, Immunization, InitialCondition, SERIES_TOL,
};
use crate::error::{Error, Result};
use crate::graph::{
    eigenvector_centrality, generate_sbm, load_edgelist, Graph, SbmSpec, CENTRALITY_DEFAULT_TOL,
};
use crate::partition::{select_constraints, solve, SolverKind, SolverOptions};
use crate::policy::{
    degree_select, delayed_select, eigen_select_with_scores, reactive_select, Budget, PatchPlan, Policy,
};
use crate::weights::{build_laplacian, flipped_weights};

pub const DEFAULT_HORIZON: f64 = 1000.0;
pub const DEFAULT_SAMPLE_POINTS: usize = 200;
/// Graphs up to this size start from a single source, larger ones from five.
pub const SMALL_GRAPH_NODES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GraphSource {
    Sbm(SbmSpec),
    EdgeList { path: PathBuf },
}

impl GraphSource {
    pub fn build(&self) -> Result<Graph> {
        match self {
            GraphSource::Sbm(spec) => generate_sbm(spec),
            GraphSource::EdgeList { path } => load_edgelist(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub beta: f64,
    /// Patching delay `T`.
    pub delay: f64,
    /// Budget as a fraction of the (realised) node count.
    pub budget: f64,
    /// Number of random sources per trial; `None` applies the size rule.
    pub n_sources: Option<usize>,
    /// Pins the sources for every trial instead of redrawing them.
    pub source_ids: Option<Vec<usize>>,
    pub trials: usize,
    pub horizon: f64,
    pub sample_points: usize,
    pub seed: u64,
    pub policies: Vec<Policy>,
    pub solver: SolverKind,
    pub solver_options: SolverOptions,
    /// Run trials on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn new(graph: GraphSource, beta: f64, delay: f64, budget: f64, trials: usize, seed: u64) -> Self {
        Self {
            graph,
            beta,
            delay,
            budget,
            n_sources: None,
            source_ids: None,
            trials,
            horizon: DEFAULT_HORIZON,
            sample_points: DEFAULT_SAMPLE_POINTS,
            seed,
            policies: Policy::ALL.to_vec(),
            solver: SolverKind::Uzawa,
            solver_options: SolverOptions::default(),
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.delay >= 0.0) || !(self.horizon >= self.delay) || !self.horizon.is_finite() {
            return bad(format!(
                "need horizon >= T >= 0 (horizon = {}, T = {})",
                self.horizon, self.delay
            ));
        }
        if self.sample_points < 2 {
            return bad("sample_points must be at least 2".into());
        }
        if self.policies.is_empty() {
            return bad("no policies selected".into());
        }
        Budget::new(self.budget)?;
        EpidemicParams::new(self.beta, self.horizon)?;
        self.solver_options.validate()
    }
}

/// `points` evenly spaced times covering `[0, horizon]`.
pub fn time_grid(horizon: f64, points: usize) -> Vec<f64> {
    let last = (points - 1) as f64;
    (0..points)
        .map(|k| if k + 1 == points { horizon } else { horizon * k as f64 / last })
        .collect()
}

/// Outcome of one patched epidemic run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Infected count at each grid time.
    pub counts: Vec<usize>,
    /// Plan nodes still healthy at `T`, hence immune afterwards.
    pub immunized: usize,
    /// Plan nodes infected before their patch took effect.
    pub patched_infected: usize,
}

/// Runs SI from `t = 0` with `plan` taking effect at `delay`.
///
/// Plan nodes are ordinary susceptibles on `[0, T)`. At `T` those still
/// healthy become immune and all their edges go dead; those already infected
/// keep spreading. The same `seed` yields the same transmission delays for
/// every plan.
pub fn run_trial(
    g: &Graph,
    init: &InitialCondition,
    plan: &PatchPlan,
    params: &EpidemicParams,
    delay: f64,
    seed: u64,
    grid: &[f64],
) -> Result<TrialOutcome> {
    init.check_len(g)?;
    params.validate()?;
    if let Some(&bad) = plan.nodes.iter().find(|&&i| i >= g.n() || init.is_source(i)) {
        return Err(Error::InvalidParameter(format!(
            "plan node {bad} is out of range or an infection source"
        )));
    }
    let delays = EdgeDelays::sample(g, params.beta, seed)?;
    let mask = plan.mask(g.n());
    let times = spread(
        g,
        init,
        &delays,
        params.horizon,
        Some(Immunization { nodes: &mask, at: delay }),
    );
    Ok(summarize(&times, plan, delay, grid))
}

fn summarize(times: &[f64], plan: &PatchPlan, delay: f64, grid: &[f64]) -> TrialOutcome {
    let mut finite: Vec<f64> = times.iter().copied().filter(|t| t.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    let counts = grid.iter().map(|&t| finite.partition_point(|&s| s <= t)).collect();
    let patched_infected = plan.nodes.iter().filter(|&&i| times[i] < delay).count();
    TrialOutcome {
        counts,
        immunized: plan.nodes.len() - patched_infected,
        patched_infected,
    }
}

/// Picks distinct sources uniformly at random. `None` means one source for
/// graphs up to 2000 nodes and five beyond.
pub fn choose_sources(g: &Graph, n_sources: Option<usize>, seed: u64) -> Result<InitialCondition> {
    let n = g.n();
    let k = n_sources.unwrap_or(if n <= SMALL_GRAPH_NODES { 1 } else { 5 });
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "need 0 < sources < n (sources = {k}, n = {n})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    InitialCondition::from_sources(n, &picked)
}

/// Per-trial seeds `(sources, epidemic)`, derived from the experiment seed
/// on an independent ChaCha stream per trial.
pub fn trial_seeds(seed: u64, trial: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    (rng.random(), rng.random())
}

/// Plans for every requested policy on one trial's sources.
///
/// `Ok(None)` means no node is predicted healthy at `T`, so the delayed
/// pipeline has nothing to partition.
pub fn plan_trial(
    g: &Graph,
    init: &InitialCondition,
    cfg: &ExperimentConfig,
    centrality: Option<&[f64]>,
) -> Result<Option<Vec<PatchPlan>>> {
    let budget = Budget::new(cfg.budget)?;
    let xhat = transient_bound(g, init, &EpidemicParams::new(cfg.beta, cfg.delay)?, SERIES_TOL)?;
    let mut plans = Vec::with_capacity(cfg.policies.len());
    for &policy in &cfg.policies {
        let plan = match policy {
            Policy::Delayed => {
                let cons = match select_constraints(g, init, &xhat) {
                    Ok(c) => c,
                    Err(Error::NoHealthyNodes) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let lap = build_laplacian(&flipped_weights(g, &xhat)?)?;
                let part = solve(cfg.solver, g, &lap, &cons, &cfg.solver_options)?;
                delayed_select(g, &part, init, &xhat, budget)?
            }
            Policy::Reactive => reactive_select(g, &xhat, init, budget)?,
            Policy::Degree => degree_select(g, init, budget)?,
            Policy::Eigen => match centrality {
                Some(scores) => eigen_select_with_scores(g, scores, init, budget)?,
                None => eigen_select_with_scores(g, &eigenvector_centrality(g, CENTRALITY_DEFAULT_TOL)?, init, budget)?,
            },
        };
        plans.push(plan);
    }
    Ok(Some(plans))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTrajectory {
    pub policy: Policy,
    pub mean_infected: Vec<f64>,
    pub std_infected: Vec<f64>,
    /// Infected count at the horizon, per trial.
    pub final_counts: Vec<usize>,
    pub immunized: Vec<usize>,
    pub patched_infected: Vec<usize>,
    /// Trials where the delayed policy fell back to reactive ordering.
    pub fallbacks: usize,
}

impl PolicyTrajectory {
    pub fn mean_final(&self) -> f64 {
        *self.mean_infected.last().unwrap_or(&0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub config: ExperimentConfig,
    pub nodes: usize,
    pub edges: usize,
    /// Trials where no node was predicted healthy at `T`; recorded as fully
    /// infected for every policy.
    pub saturated_trials: usize,
    pub time: Vec<f64>,
    pub policies: Vec<PolicyTrajectory>,
}

impl TrajectoryResult {
    pub fn policy(&self, p: Policy) -> Option<&PolicyTrajectory> {
        self.policies.iter().find(|t| t.policy == p)
    }

    pub fn series(&self) -> Vec<PlotSeries> {
        self.policies
            .iter()
            .map(|p| PlotSeries {
                label: p.policy.to_string(),
                time: self.time.clone(),
                mean: p.mean_infected.clone(),
            })
            .collect()
    }
}

struct TrialRecord {
    outcomes: Option<Vec<(TrialOutcome, bool)>>,
}

/// Runs the configured Monte Carlo experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TrajectoryResult> {
    cfg.validate()?;
    let g = cfg.graph.build()?;
    run_experiment_on(&g, cfg)
}

/// [`run_experiment`] on an already built graph.
pub fn run_experiment_on(g: &Graph, cfg: &ExperimentConfig) -> Result<TrajectoryResult> {
    cfg.validate()?;
    let n = g.n();
    let grid = time_grid(cfg.horizon, cfg.sample_points);
    let params = EpidemicParams::new(cfg.beta, cfg.horizon)?;
    let pinned = cfg
        .source_ids
        .as_ref()
        .map(|ids| InitialCondition::from_sources(n, ids))
        .transpose()?;
    let centrality = if cfg.policies.contains(&Policy::Eigen) {
        Some(eigenvector_centrality(g, CENTRALITY_DEFAULT_TOL)?)
    } else {
        None
    };

    let one = |trial: usize| -> Result<TrialRecord> {
        let wrap = |e: Error| Error::Trial {
            trial,
            source: Box::new(e),
        };
        let (source_seed, epidemic_seed) = trial_seeds(cfg.seed, trial);
        let init = match &pinned {
            Some(init) => init.clone(),
            None => choose_sources(g, cfg.n_sources, source_seed).map_err(wrap)?,
        };
        let Some(plans) = plan_trial(g, &init, cfg, centrality.as_deref()).map_err(wrap)? else {
            return Ok(TrialRecord { outcomes: None });
        };
        let outcomes = plans
            .iter()
            .map(|plan| {
                run_trial(g, &init, plan, &params, cfg.delay, epidemic_seed, &grid)
                    .map(|o| (o, plan.fallback))
                    .map_err(wrap)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrialRecord {
            outcomes: Some(outcomes),
        })
    };

    let records: Vec<TrialRecord> = if cfg.parallel {
        (0..cfg.trials).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..cfg.trials).map(one).collect::<Result<_>>()?
    };

    let saturated_trials = records.iter().filter(|r| r.outcomes.is_none()).count();
    let policies = cfg
        .policies
        .iter()
        .enumerate()
        .map(|(k, &policy)| aggregate(policy, k, &records, n, grid.len()))
        .collect();

    Ok(TrajectoryResult {
        config: cfg.clone(),
        nodes: n,
        edges: g.num_edges(),
        saturated_trials,
        time: grid,
        policies,
    })
}

/// Aggregates in trial order, so the result is independent of scheduling.
fn aggregate(policy: Policy, k: usize, records: &[TrialRecord], n: usize, points: usize) -> PolicyTrajectory {
    let saturated = TrialOutcome {
        counts: vec![n; points],
        immunized: 0,
        patched_infected: 0,
    };
    let mut fallbacks = 0;
    let outcomes: Vec<&TrialOutcome> = records
        .iter()
        .map(|r| match &r.outcomes {
            Some(list) => {
                fallbacks += usize::from(list[k].1);
                &list[k].0
            }
            None => &saturated,
        })
        .collect();
    let trials = outcomes.len() as f64;
    let mut mean = vec![0.0; points];
    let mut std = vec![0.0; points];
    for p in 0..points {
        let m = outcomes.iter().map(|o| o.counts[p] as f64).sum::<f64>() / trials;
        mean[p] = m;
        if outcomes.len() > 1 {
            let ss: f64 = outcomes.iter().map(|o| (o.counts[p] as f64 - m).powi(2)).sum();
            std[p] = (ss / (trials - 1.0)).sqrt();
        }
    }
    PolicyTrajectory {
        policy,
        mean_infected: mean,
        std_infected: std,
        final_counts: outcomes.iter().map(|o| *o.counts.last().unwrap()).collect(),
        immunized: outcomes.iter().map(|o| o.immunized).collect(),
        patched_infected: outcomes.iter().map(|o| o.patched_infected).collect(),
        fallbacks,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    policy: String,
    time: f64,
    mean_infected: f64,
    std_infected: f64,
}

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";

/// Writes `results.csv` (policy, time, mean_infected, std_infected) and the
/// `results.json` sidecar into `dir`, creating it if needed.
pub fn write_results(res: &TrajectoryResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let csv_path = dir.join(RESULTS_CSV);
    let mut w = csv::Writer::from_path(&csv_path)?;
    for p in &res.policies {
        for (i, &time) in res.time.iter().enumerate() {
            w.serialize(CsvRow {
                policy: p.policy.to_string(),
                time,
                mean_infected: p.mean_infected[i],
                std_infected: p.std_infected[i],
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let json_path = dir.join(RESULTS_JSON);
    let body = serde_json::to_string_pretty(res)?;
    fs::write(&json_path, body).map_err(|e| Error::io(&json_path, e))
}

/// One curve of a trajectory plot.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    pub time: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Reads a results CSV back into per-policy series, in first-seen order.
pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<PlotSeries>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut out: Vec<PlotSeries> = Vec::new();
    for row in r.deserialize() {
        let row: CsvRow = row?;
        let idx = match out.iter().position(|s| s.label == row.policy) {
            Some(i) => i,
            None => {
                out.push(PlotSeries {
                    label: row.policy.clone(),
                    time: Vec::new(),
                    mean: Vec::new(),
                });
                out.len() - 1
            }
        };
        out[idx].time.push(row.time);
        out[idx].mean.push(row.mean_infected);
    }
    Ok(out)
}

pub fn read_results_json(path: impl AsRef<Path>) -> Result<TrajectoryResult> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 50.0;

/// Renders the curves as a standalone SVG line chart: time on x, mean
/// infected count on y, one polyline and legend entry per series.
pub fn render_svg(series: &[PlotSeries]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::EmptyPlot);
    }
    let x_max = series
        .iter()
        .flat_map(|s| s.time.iter().copied())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let y_max = series
        .iter()
        .flat_map(|s| s.mean.iter().copied())
        .fold(1.0f64, f64::max);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |t: f64| MARGIN_LEFT + t / x_max * plot_w;
    let py = |y: f64| MARGIN_TOP + (1.0 - y / y_max) * plot_h;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let (x0, y0, x1, y1) = (MARGIN_LEFT, MARGIN_TOP + plot_h, MARGIN_LEFT + plot_w, MARGIN_TOP);
    svg.push_str(&format!(
        "<g class=\"axes\" stroke=\"black\"><line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\"/><line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\"/></g>\n"
    ));
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (tx, ty) = (px(f * x_max), py(f * y_max));
        svg.push_str(&format!(
            "<text x=\"{tx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n<text x=\"{:.1}\" y=\"{ty:.1}\" text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>\n",
            y0 + 18.0,
            fmt_tick(f * x_max),
            x0 - 6.0,
            fmt_tick(f * y_max),
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">time</text>\n<text transform=\"translate(16 {:.1}) rotate(-90)\" text-anchor=\"middle\">mean infected</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        MARGIN_TOP + plot_h / 2.0,
    ));

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = s
            .time
            .iter()
            .zip(&s.mean)
            .map(|(&t, &y)| format!("{:.2},{:.2}", px(t), py(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline data-label=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            escape(&s.label),
            points.join(" ")
        ));
        let ly = MARGIN_TOP + 14.0 + 20.0 * k as f64;
        let lx = x1 + 15.0;
        svg.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{}\" y=\"{ly}\" dominant-baseline=\"middle\">{}</text>\n",
            lx + 24.0,
            lx + 30.0,
            escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn fmt_tick(v: f64) -> String {
    if v >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Writes the SVG chart of `res` to `path`.
pub fn emit_plot(res: &TrajectoryResult, path: impl AsRef<Path>) -> Result<()> {
    write_svg(&res.series(), path)
}

pub fn write_svg(series: &[PlotSeries], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let svg = render_svg(series)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}
