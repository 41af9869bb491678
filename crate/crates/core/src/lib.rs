//! Delayed-patching malware control on networks.
//!
//! The pipeline predicts SI infection risk at the patching delay with a
//! transient upper bound, weights edges by how likely they are to sit on the
//! infection boundary, finds that boundary with a label-constrained
//! normalized cut, and greedily patches its healthy side under a budget.
//! [`harness`] validates policies with exact Monte Carlo SI simulation.

pub mod epidemic;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod partition;
pub mod policy;
pub mod weights;

pub use epidemic::{
    linear_bound, simulate_si, solve_si_mean_field, transient_bound, transient_exponent, EpidemicParams,
    InfectionTrace, InitialCondition,
};
pub use error::{Error, Result};
pub use graph::{
    degrees, eigenvector_centrality, generate_sbm, generate_sbm_labeled, load_edgelist, multi_source_bfs, Graph,
    SbmSpec,
};
pub use harness::{
    choose_sources, emit_plot, run_experiment, run_trial, write_results, ExperimentConfig, GraphSource,
    TrajectoryResult,
};
pub use partition::{
    extract_cutset, ncut_value, ppm_solve, select_constraints, uzawa_solve, ConstraintSet, PartitionResult, Side,
    SolverKind, SolverOptions,
};
pub use policy::{degree_select, delayed_select, eigen_select, reactive_select, Budget, PatchPlan, Policy};
pub use weights::{build_laplacian, critical_weights, flipped_weights, EdgeWeights, WeightFlavor, WeightedLaplacian};
