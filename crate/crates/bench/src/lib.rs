//! Fixtures shared by the benchmarks.

use scma_d2d_core::{
    allocate, allocator_solver_settings, build_p2, draw_realization, ChannelRealization, FactorGraph, Occupancy, P2Problem, ScenarioConfig,
};

pub struct Fixture {
    pub cfg: ScenarioConfig,
    pub channel: ChannelRealization,
    pub graph: FactorGraph,
    pub occupancy: Occupancy,
    pub problem: P2Problem,
    /// Allocation after a full run; strictly feasible for the surrogate.
    pub point: Vec<f64>,
}

pub fn fixture(d2d_pairs: usize, seed: u64) -> Fixture {
    let cfg = ScenarioConfig { d2d_pairs, ..ScenarioConfig::default() };
    let (_, channel) = draw_realization(&cfg, seed).expect("draw");
    let graph = cfg.factor_graph().expect("graph");
    let occupancy = Occupancy::diagonal(cfg.subcarriers, d2d_pairs).expect("occupancy");
    let problem = build_p2(&cfg, &channel, &graph, &occupancy).expect("problem");
    let trace = allocate(&cfg, &channel, &graph, &occupancy, 10, &allocator_solver_settings()).expect("allocate");
    let point = problem.registry.to_point(&trace.final_record().powers);
    Fixture { cfg, channel, graph, occupancy, problem, point }
}
