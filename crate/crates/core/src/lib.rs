//! Uplink SCMA cell shared with D2D pairs: channel model, capacity and its
//! eigenvalue bounds, a geometric-programming solver, and the iterative
//! power allocation built on it.
//!
//! ```
//! use scma_d2d_core::{allocate, allocator_solver_settings, draw_realization, Occupancy, ScenarioConfig};
//!
//! let cfg = ScenarioConfig::default();
//! let (_, ch) = draw_realization(&cfg, 2).unwrap();
//! let graph = cfg.factor_graph().unwrap();
//! let occ = Occupancy::diagonal(cfg.subcarriers, cfg.d2d_pairs).unwrap();
//! let trace = allocate(&cfg, &ch, &graph, &occ, 10, &allocator_solver_settings()).unwrap();
//! assert!(trace.final_sum_rate() >= trace.initial().sum_rate_bits);
//! ```

// `!(x > 0.0)` also rejects NaN, which is the point of those checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod allocator;
pub mod capacity;
pub mod channel;
pub mod error;
pub mod experiments;
pub mod gp;
pub mod hermitian;
pub mod posy;
pub mod scenario;
pub mod structure;

pub use allocator::{
    allocate, allocator_solver_settings, build_p2, expand_denominator, random_baseline, sum_rate, BaselineDraw, IterationRecord,
    IterationTrace, P2Problem, VariableRegistry,
};
pub use capacity::{
    capacity_bound_report, closed_form_cellular_capacity, d2d_capacity, equivalent_noise, exact_cellular_capacity_general, EquivalentNoise,
    Occupancy, PowerAllocation, UserCovariance,
};
pub use channel::{dbm_to_watts, draw_realization, watts_to_dbm, ChannelRealization, NodeGeometry};
pub use error::{Error, Result};
pub use experiments::{ExperimentKind, ExperimentSpec};
pub use gp::{find_feasible, solve, Feasibility, SolveStatus, SolverResult, SolverSettings};
pub use hermitian::{hermitian_eigenvalues, CMatrix};
pub use posy::{to_convex_form, ConvexFormProblem, LogSumExp, Monomial, Posynomial};
pub use scenario::{load_config_file, parse_config, parse_config_str, ConfigFile, ScenarioConfig};
pub use structure::{CodebookSkeleton, FactorGraph, IncidenceSets};
