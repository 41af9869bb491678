use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use delaypatch_core::epidemic::SERIES_TOL;
use delaypatch_core::harness::{plan_trial, read_results_csv, time_grid, write_svg, DEFAULT_SAMPLE_POINTS};
use delaypatch_core::*;

mod config;

#[derive(Parser, Debug)]
#[command(
    name = "delaypatch",
    version,
    about = "Delayed-patching malware control: risk bounds, constrained cuts, patch plans and Monte Carlo experiments"
)]
struct Cli {
    /// Read `flag = value` lines from FILE; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Sample an SBM graph and write it as an edge list.
    #[command(args_override_self = true)]
    Generate {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Edge-list file to write.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Print the transient infection bound at T as `node,xhat` lines.
    #[command(args_override_self = true)]
    Bound {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Write a CSV with a header instead of printing.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Solve the constrained cut and write the node sides and cut-set.
    #[command(args_override_self = true)]
    Partition {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Directory for partition_nodes.csv and partition_cutset.csv.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Compute patch plans for one or more policies.
    #[command(args_override_self = true)]
    Select {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        budget: Option<f64>,
        /// Comma-separated policies (delayed, reactive, degree, eigen).
        #[arg(long, default_value = "delayed,reactive,degree,eigen")]
        policies: String,
        #[command(flatten)]
        solver: SolverArgs,
        /// Directory for plans.csv and plans.json; prints CSV when absent.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run one SI trial, optionally with a single policy's patches.
    #[command(args_override_self = true)]
    Simulate {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value_t = harness::DEFAULT_HORIZON)]
        horizon: f64,
        #[arg(long)]
        budget: Option<f64>,
        /// Patch with this policy (needs --T and --budget).
        #[arg(long)]
        policies: Option<String>,
        #[command(flatten)]
        solver: SolverArgs,
        /// CSV of infection events, or of counts over time when patching.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo comparison of policies.
    #[command(args_override_self = true)]
    Experiment {
        #[command(flatten)]
        graph: GraphArgs,
        /// Number of random sources per trial (default: 1 up to 2000 nodes, else 5).
        #[arg(long)]
        sources: Option<usize>,
        /// Comma-separated fixed source ids, used for every trial.
        #[arg(long, value_name = "LIST")]
        source_ids: Option<String>,
        #[arg(long)]
        beta: Option<f64>,
        /// Patching delay.
        #[arg(long = "T", value_name = "T")]
        delay: Option<f64>,
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = harness::DEFAULT_HORIZON)]
        horizon: f64,
        #[arg(long, default_value = "delayed,reactive,degree,eigen")]
        policies: String,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for results.csv and results.json.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Also draw the trajectories to this SVG file.
        #[arg(long, value_name = "PATH")]
        svg: Option<PathBuf>,
    },
    /// Render a results CSV as an SVG line chart.
    #[command(args_override_self = true)]
    Plot {
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        svg: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct GraphArgs {
    /// Whitespace-separated edge list; the largest component is kept.
    #[arg(long, value_name = "PATH")]
    graph: Option<PathBuf>,
    /// SBM node count (instead of --graph).
    #[arg(long)]
    sbm_n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    sbm_k: usize,
    #[arg(long, default_value_t = SbmSpec::DEFAULT_AVG_DEGREE)]
    sbm_degree: f64,
    #[arg(long, default_value_t = SbmSpec::DEFAULT_IN_OUT_RATIO)]
    sbm_ratio: f64,
}

#[derive(Args, Debug)]
struct InstanceArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Comma-separated infected node ids (default: one random node).
    #[arg(long, alias = "source-ids", value_name = "LIST")]
    sources: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    /// Patching delay.
    #[arg(long = "T", value_name = "T")]
    delay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, default_value = "uzawa")]
    solver: String,
    /// Uzawa penalty.
    #[arg(long, default_value_t = 1e4)]
    mu: f64,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn required<T>(value: Option<T>, flag: &str) -> std::result::Result<T, Failure> {
    value.ok_or_else(|| usage(format!("missing required flag {flag}")))
}

/// Uses the given seed or draws one from entropy and reports it.
fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random();
        println!("seed: {s} (drawn)");
        s
    })
}

impl GraphArgs {
    fn source(&self, seed: u64) -> std::result::Result<GraphSource, Failure> {
        match (&self.graph, self.sbm_n) {
            (Some(_), Some(_)) => Err(usage("give either --graph or --sbm-n, not both")),
            (Some(path), None) => Ok(GraphSource::EdgeList { path: path.clone() }),
            (None, Some(n)) => Ok(GraphSource::Sbm(SbmSpec {
                n,
                k: self.sbm_k,
                avg_degree: self.sbm_degree,
                in_out_ratio: self.sbm_ratio,
                seed,
            })),
            (None, None) => Err(usage("no graph: give --graph PATH or --sbm-n N")),
        }
    }
}

fn parse_ids(list: &str) -> std::result::Result<Vec<usize>, Failure> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| usage(format!("bad node id {s:?}"))))
        .collect()
}

fn parse_solver(args: &SolverArgs) -> std::result::Result<(SolverKind, SolverOptions), Failure> {
    let kind = args.solver.parse().map_err(|e: Error| usage(e.to_string()))?;
    Ok((kind, SolverOptions { mu: args.mu, ..SolverOptions::default() }))
}

fn parse_policies(list: &str) -> std::result::Result<Vec<Policy>, Failure> {
    Policy::parse_list(list).map_err(|e| usage(e.to_string()))
}

/// A graph with an infection state and the risk parameters.
struct Instance {
    g: Graph,
    init: InitialCondition,
    beta: f64,
    delay: Option<f64>,
    seed: u64,
}

impl InstanceArgs {
    /// `random` forces a seed even when the graph and sources are fixed.
    fn load(&self, random: bool) -> std::result::Result<Instance, Failure> {
        self.graph.source(0)?;
        let beta = required(self.beta, "--beta")?;
        let fixed = self.graph.graph.is_some() && self.sources.is_some();
        let seed = if fixed && !random {
            self.seed.unwrap_or(0)
        } else {
            resolve_seed(self.seed)
        };
        let g = self.graph.source(seed)?.build()?;
        let init = match &self.sources {
            Some(list) => InitialCondition::from_sources(g.n(), &parse_ids(list)?)?,
            None => choose_sources(&g, Some(1), seed)?,
        };
        Ok(Instance {
            g,
            init,
            beta,
            delay: self.delay,
            seed,
        })
    }
}

impl Instance {
    fn delay(&self) -> std::result::Result<f64, Failure> {
        required(self.delay, "--T")
    }

    fn xhat(&self) -> std::result::Result<Vec<f64>, Failure> {
        let params = EpidemicParams::new(self.beta, self.delay()?)?;
        Ok(transient_bound(&self.g, &self.init, &params, SERIES_TOL)?)
    }
}

fn write_file(path: &Path, body: &str) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, body).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn generate(graph: GraphArgs, seed: Option<u64>, out: Option<PathBuf>) -> Outcome {
    let out = required(out, "--out")?;
    let seed = resolve_seed(seed);
    let g = graph.source(seed)?.build()?;
    g.write_edgelist(&out)?;
    println!("wrote {} nodes, {} edges to {}", g.n(), g.num_edges(), out.display());
    Ok(())
}

fn bound(instance: InstanceArgs, out: Option<PathBuf>) -> Outcome {
    let inst = instance.load(false)?;
    let xhat = inst.xhat()?;
    let rows: String = xhat.iter().enumerate().map(|(i, x)| format!("{i},{x}\n")).collect();
    match out {
        Some(path) => {
            write_file(&path, &format!("node,xhat\n{rows}"))?;
            println!("wrote bound for {} nodes to {}", xhat.len(), path.display());
        }
        None => print!("{rows}"),
    }
    Ok(())
}

fn partition_cmd(instance: InstanceArgs, solver: SolverArgs, out: Option<PathBuf>) -> Outcome {
    let out = required(out, "--out")?;
    let (kind, opts) = parse_solver(&solver)?;
    let inst = instance.load(false)?;
    let xhat = inst.xhat()?;
    let cons = select_constraints(&inst.g, &inst.init, &xhat)?;
    let lap = build_laplacian(&flipped_weights(&inst.g, &xhat)?)?;
    let part = partition::solve(kind, &inst.g, &lap, &cons, &opts)?;
    part.write_csv(&out)?;
    println!(
        "{kind}: {} infected-side, {} healthy-side, {} cut edges, objective {:.6}, {} iterations{}",
        part.side_count(Side::Infected),
        part.side_count(Side::Healthy),
        part.cutset.len(),
        part.objective,
        part.iterations,
        if part.perturbed { " (perturbed start)" } else { "" }
    );
    Ok(())
}

fn plans_for(
    inst: &Instance,
    budget: f64,
    policies: Vec<Policy>,
    solver: &SolverArgs,
) -> std::result::Result<Vec<PatchPlan>, Failure> {
    let (kind, opts) = parse_solver(solver)?;
    let mut cfg = ExperimentConfig::new(
        GraphSource::EdgeList { path: PathBuf::new() },
        inst.beta,
        inst.delay()?,
        budget,
        1,
        inst.seed,
    );
    cfg.policies = policies;
    cfg.solver = kind;
    cfg.solver_options = opts;
    plan_trial(&inst.g, &inst.init, &cfg, None)?
        .ok_or_else(|| Failure::Runtime("no node is predicted healthy at T; nothing to plan".into()))
}

fn select(instance: InstanceArgs, budget: Option<f64>, policies: String, solver: SolverArgs, out: Option<PathBuf>) -> Outcome {
    let budget = required(budget, "--budget")?;
    let policies = parse_policies(&policies)?;
    let inst = instance.load(false)?;
    let plans = plans_for(&inst, budget, policies, &solver)?;
    let mut csv = String::from("policy,budget,node\n");
    for plan in &plans {
        csv.extend(plan.to_csv().lines().skip(1).map(|l| format!("{l}\n")));
    }
    match out {
        Some(dir) => {
            write_file(&dir.join("plans.csv"), &csv)?;
            let json = plans_json(&plans)?;
            write_file(&dir.join("plans.json"), &json)?;
            for plan in &plans {
                println!("{}: {} of {} nodes", plan.tag(), plan.nodes.len(), plan.budget);
            }
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn plans_json(plans: &[PatchPlan]) -> std::result::Result<String, Failure> {
    let parts: Vec<String> = plans.iter().map(|p| p.to_json()).collect::<Result<_>>()?;
    Ok(format!("[\n{}\n]\n", parts.join(",\n")))
}

fn simulate(
    instance: InstanceArgs,
    horizon: f64,
    budget: Option<f64>,
    policies: Option<String>,
    solver: SolverArgs,
    out: Option<PathBuf>,
) -> Outcome {
    let inst = instance.load(true)?;
    let params = EpidemicParams::new(inst.beta, horizon)?;
    let (body, summary) = match policies {
        None => {
            let trace = simulate_si(&inst.g, &inst.init, &params, inst.seed)?;
            let summary = format!("{} of {} nodes infected by t = {horizon}", trace.infected_by(horizon), inst.g.n());
            (trace.to_csv(), summary)
        }
        Some(list) => {
            let policies = parse_policies(&list)?;
            if policies.len() != 1 {
                return Err(usage("simulate patches with exactly one policy"));
            }
            let budget = required(budget, "--budget")?;
            let plan = plans_for(&inst, budget, policies, &solver)?.remove(0);
            let grid = time_grid(horizon, DEFAULT_SAMPLE_POINTS);
            let outcome = run_trial(&inst.g, &inst.init, &plan, &params, inst.delay()?, inst.seed, &grid)?;
            let mut csv = String::from("time,infected\n");
            for (t, c) in grid.iter().zip(&outcome.counts) {
                csv.push_str(&format!("{t},{c}\n"));
            }
            let summary = format!(
                "{}: {} of {} nodes infected by t = {horizon}; {} patched in time, {} infected before T",
                plan.tag(),
                outcome.counts.last().copied().unwrap_or(0),
                inst.g.n(),
                outcome.immunized,
                outcome.patched_infected
            );
            (csv, summary)
        }
    };
    match out {
        Some(path) => {
            write_file(&path, &body)?;
            println!("{summary}");
        }
        None => print!("{body}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn experiment(
    graph: GraphArgs,
    sources: Option<usize>,
    source_ids: Option<String>,
    beta: Option<f64>,
    delay: Option<f64>,
    budget: Option<f64>,
    trials: usize,
    horizon: f64,
    policies: String,
    solver: SolverArgs,
    seed: Option<u64>,
    out: Option<PathBuf>,
    svg: Option<PathBuf>,
) -> Outcome {
    graph.source(0)?;
    let beta = required(beta, "--beta")?;
    let delay = required(delay, "--T")?;
    let budget = required(budget, "--budget")?;
    let out = required(out, "--out")?;
    let policies = parse_policies(&policies)?;
    let (kind, opts) = parse_solver(&solver)?;
    let ids = source_ids.as_deref().map(parse_ids).transpose()?;
    let seed = resolve_seed(seed);

    let mut cfg = ExperimentConfig::new(graph.source(seed)?, beta, delay, budget, trials, seed);
    cfg.n_sources = sources;
    cfg.source_ids = ids;
    cfg.horizon = horizon;
    cfg.policies = policies;
    cfg.solver = kind;
    cfg.solver_options = opts;

    let res = run_experiment(&cfg)?;
    write_results(&res, &out)?;
    if let Some(path) = &svg {
        emit_plot(&res, path)?;
    }
    println!(
        "{} nodes, {} edges, {} trials{}",
        res.nodes,
        res.edges,
        trials,
        if res.saturated_trials > 0 {
            format!(" ({} with no predicted-healthy node)", res.saturated_trials)
        } else {
            String::new()
        }
    );
    for p in &res.policies {
        let sd = p.std_infected.last().copied().unwrap_or(0.0);
        println!("{:<10} final infected {:>10.1} (sd {:.1})", p.policy.to_string(), p.mean_final(), sd);
    }
    println!("results in {}", out.display());
    Ok(())
}

fn plot(csv: Option<PathBuf>, svg: Option<PathBuf>) -> Outcome {
    let csv = required(csv, "--csv")?;
    let svg = required(svg, "--svg")?;
    let series = read_results_csv(&csv)?;
    write_svg(&series, &svg)?;
    println!("wrote {} series to {}", series.len(), svg.display());
    Ok(())
}

fn dispatch(cmd: Cmd) -> Outcome {
    match cmd {
        Cmd::Generate { graph, seed, out } => generate(graph, seed, out),
        Cmd::Bound { instance, out } => bound(instance, out),
        Cmd::Partition { instance, solver, out } => partition_cmd(instance, solver, out),
        Cmd::Select {
            instance,
            budget,
            policies,
            solver,
            out,
        } => select(instance, budget, policies, solver, out),
        Cmd::Simulate {
            instance,
            horizon,
            budget,
            policies,
            solver,
            out,
        } => simulate(instance, horizon, budget, policies, solver, out),
        Cmd::Experiment {
            graph,
            sources,
            source_ids,
            beta,
            delay,
            budget,
            trials,
            horizon,
            policies,
            solver,
            seed,
            out,
            svg,
        } => experiment(
            graph, sources, source_ids, beta, delay, budget, trials, horizon, policies, solver, seed, out, svg,
        ),
        Cmd::Plot { csv, svg } => plot(csv, svg),
    }
}

fn subcommand_usage(args: &[String]) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let name = args.iter().skip(1).find(|a| !a.starts_with('-')).cloned();
    match name.and_then(|n| cmd.find_subcommand_mut(&n).map(|s| s.render_usage().to_string())) {
        Some(u) => u,
        None => cmd.render_usage().to_string(),
    }
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let args = match config::merge(raw.clone()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}\n\n{}", Cli::command().render_usage());
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}\n\nFor more information, try '--help'.", subcommand_usage(&raw));
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
