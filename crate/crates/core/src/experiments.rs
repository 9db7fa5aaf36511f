//! Seeded Monte-Carlo experiments behind the CLI.
//!
//! Seed `i` of an experiment uses scenario seed `cfg.seed + i`. Seeds run in
//! parallel; results are collected in seed order so output is byte-identical
//! across runs and thread counts.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::allocator::{allocate, allocator_solver_settings, random_baseline, sum_rate, IterationTrace};
use crate::capacity::{capacity_bound_report, equivalent_noise, skeleton_covariances, CapacityBoundReport, Occupancy, PowerAllocation};
use crate::channel::{draw_realization, ChannelRealization};
use crate::error::{Error, Result};
use crate::gp::SolverSettings;
use crate::scenario::ScenarioConfig;
use crate::structure::{CodebookSkeleton, FactorGraph};

/// Draws per baseline before it is declared infeasible.
pub const BASELINE_MAX_RESAMPLE: usize = 1000;
/// Stream id of the baseline generator, disjoint from the channel streams.
const BASELINE_STREAM: u64 = u64::MAX;
const SKELETON_STREAM: u64 = u64::MAX - 1;
/// Relative difference below which two sum rates count as tied.
pub const TIE_TOL: f64 = 1e-6;

pub fn default_sweep_values_dbm() -> Vec<f64> {
    vec![24.0, 26.0, 28.0, 30.0, 32.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Convergence,
    SweepCellularCap,
    SweepD2dCap,
    BoundValidation,
    BaselineComparison,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub scenario: ScenarioConfig,
    pub sweep_values_dbm: Vec<f64>,
    pub num_seeds: usize,
    pub t_max: usize,
    /// Keep the per-solve barrier trace.
    pub solver_trace: bool,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, scenario: ScenarioConfig) -> Self {
        Self { kind, scenario, sweep_values_dbm: default_sweep_values_dbm(), num_seeds: 50, t_max: 10, solver_trace: false }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.num_seeds == 0 {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        if self.t_max == 0 {
            return Err(Error::InvalidArgument("tmax must be at least 1".into()));
        }
        let sweep = matches!(self.kind, ExperimentKind::SweepCellularCap | ExperimentKind::SweepD2dCap);
        if sweep && self.sweep_values_dbm.is_empty() {
            return Err(Error::InvalidArgument("sweep needs at least one value".into()));
        }
        if self.sweep_values_dbm.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sweep values must be finite".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.num_seeds as u64).map(|i| self.scenario.seed.wrapping_add(i)).collect()
    }

    fn settings(&self) -> SolverSettings {
        SolverSettings { trace: self.solver_trace, ..allocator_solver_settings() }
    }
}

struct Instance {
    ch: ChannelRealization,
    graph: FactorGraph,
    occupancy: Occupancy,
}

fn instance(cfg: &ScenarioConfig, seed: u64) -> Result<Instance> {
    let (_, ch) = draw_realization(cfg, seed)?;
    Ok(Instance { ch, graph: cfg.factor_graph()?, occupancy: Occupancy::diagonal(cfg.subcarriers, cfg.d2d_pairs)? })
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Result of one proposed-algorithm run; infeasible draws are kept, not dropped.
#[derive(Debug, Clone)]
pub enum RunOutcome {
    Trace(Box<IterationTrace>),
    Infeasible { slack: f64 },
}

impl RunOutcome {
    pub fn trace(&self) -> Option<&IterationTrace> {
        match self {
            RunOutcome::Trace(t) => Some(t),
            RunOutcome::Infeasible { .. } => None,
        }
    }

    pub fn final_sum_rate(&self) -> Option<f64> {
        self.trace().map(IterationTrace::final_sum_rate)
    }
}

fn run_allocate(cfg: &ScenarioConfig, inst: &Instance, t_max: usize, settings: &SolverSettings) -> Result<RunOutcome> {
    match allocate(cfg, &inst.ch, &inst.graph, &inst.occupancy, t_max, settings) {
        Ok(t) => Ok(RunOutcome::Trace(Box::new(t))),
        Err(Error::Infeasible { slack }) => Ok(RunOutcome::Infeasible { slack }),
        Err(e) => Err(e),
    }
}

/// Sum rate of the feasible random baseline, `None` when no feasible draw was found.
fn run_baseline(cfg: &ScenarioConfig, inst: &Instance, seed: u64) -> Result<Option<f64>> {
    let mut rng = stream_rng(seed, BASELINE_STREAM);
    let draw = random_baseline(cfg, &inst.ch, &inst.graph, &inst.occupancy, &mut rng, BASELINE_MAX_RESAMPLE)?;
    if !draw.feasible {
        return Ok(None);
    }
    sum_rate(&inst.ch, &inst.graph, &inst.occupancy, &draw.allocation).map(Some)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

// ---------------------------------------------------------------------------
// convergence

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub seed: u64,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    pub runs: Vec<ConvergenceRun>,
    pub rate_scale: f64,
}

pub fn run_convergence(spec: &ExperimentSpec) -> Result<ConvergenceResult> {
    spec.validate()?;
    let cfg = &spec.scenario;
    let settings = spec.settings();
    let runs = spec
        .seeds()
        .into_par_iter()
        .map(|seed| {
            let inst = instance(cfg, seed)?;
            Ok(ConvergenceRun { seed, outcome: run_allocate(cfg, &inst, spec.t_max, &settings)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceResult { runs, rate_scale: cfg.rate_scale() })
}

impl ConvergenceResult {
    pub fn infeasible_count(&self) -> usize {
        self.runs.iter().filter(|r| r.outcome.trace().is_none()).count()
    }

    /// `seed,iteration,sum_rate,solver_status,<variable>_w,<variable>_dbm,...`;
    /// an infeasible draw is a single row with status `infeasible_draw`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let Some(first) = self.runs.iter().find_map(|r| r.outcome.trace()) else {
            w.write_record(["seed", "iteration", "sum_rate", "solver_status"])?;
            for r in &self.runs {
                w.write_record([r.seed.to_string(), String::new(), String::new(), "infeasible_draw".into()])?;
            }
            w.flush()?;
            return Ok(());
        };
        let mut header = vec!["seed".to_string()];
        header.extend(first.csv_header());
        let width = header.len();
        w.write_record(&header)?;
        for r in &self.runs {
            match r.outcome.trace() {
                Some(t) => {
                    for row in t.csv_rows(self.rate_scale) {
                        let mut full = vec![r.seed.to_string()];
                        full.extend(row);
                        w.write_record(full)?;
                    }
                }
                None => {
                    let mut row = vec![String::new(); width];
                    row[0] = r.seed.to_string();
                    row[3] = "infeasible_draw".into();
                    w.write_record(row)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `seed,iteration,outer_iteration,t,objective,gap` for every barrier solve.
    pub fn write_solver_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["seed", "iteration", "outer_iteration", "t", "objective", "gap"])?;
        for r in &self.runs {
            let Some(t) = r.outcome.trace() else { continue };
            for rec in t.per_iteration() {
                for o in &rec.solver_trace {
                    w.write_record([
                        r.seed.to_string(),
                        rec.iteration.to_string(),
                        o.iteration.to_string(),
                        o.t.to_string(),
                        o.objective.to_string(),
                        o.gap.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    CellularCap,
    D2dCap,
}

impl SweepAxis {
    fn apply(self, cfg: &ScenarioConfig, dbm: f64) -> ScenarioConfig {
        let mut c = cfg.clone();
        match self {
            SweepAxis::CellularCap => c.cellular_power_cap_dbm = dbm,
            SweepAxis::D2dCap => c.d2d_power_cap_dbm = dbm,
        }
        c
    }
}

/// One (sweep value, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedPoint {
    pub sweep_value_dbm: f64,
    pub seed: u64,
    /// `None` for an infeasible draw.
    pub proposed: Option<f64>,
    /// `None` when no feasible random draw was found.
    pub random: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_value_dbm: f64,
    pub mean_sum_rate_proposed: f64,
    /// Mean over draws where both the proposed run and the baseline are feasible.
    pub mean_sum_rate_random: f64,
    pub num_infeasible_draws: usize,
    pub num_random_infeasible: usize,
    pub num_seeds: usize,
    pub seed_first: u64,
    pub seed_last: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    /// Ordered by (sweep value, seed).
    pub points: Vec<SeedPoint>,
    pub rate_scale: f64,
}

pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    spec.validate()?;
    let axis = match spec.kind {
        ExperimentKind::SweepCellularCap => SweepAxis::CellularCap,
        ExperimentKind::SweepD2dCap => SweepAxis::D2dCap,
        _ => return Err(Error::InvalidArgument("run_sweep needs a sweep experiment".into())),
    };
    let settings = spec.settings();
    let seeds = spec.seeds();
    let jobs: Vec<(f64, u64)> = spec.sweep_values_dbm.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    let points = jobs
        .into_par_iter()
        .map(|(value, seed)| {
            let cfg = axis.apply(&spec.scenario, value);
            let inst = instance(&cfg, seed)?;
            let proposed = run_allocate(&cfg, &inst, spec.t_max, &settings)?.final_sum_rate();
            let random = run_baseline(&cfg, &inst, seed)?;
            Ok(SeedPoint { sweep_value_dbm: value, seed, proposed, random })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = spec
        .sweep_values_dbm
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let chunk = &points[i * seeds.len()..(i + 1) * seeds.len()];
            summarize(value, chunk)
        })
        .collect();
    Ok(SweepResult { axis, rows, points, rate_scale: spec.scenario.rate_scale() })
}

fn summarize(value: f64, chunk: &[SeedPoint]) -> SweepRow {
    let feasible: Vec<&SeedPoint> = chunk.iter().filter(|p| p.proposed.is_some()).collect();
    SweepRow {
        sweep_value_dbm: value,
        mean_sum_rate_proposed: mean(feasible.iter().filter_map(|p| p.proposed)),
        mean_sum_rate_random: mean(feasible.iter().filter_map(|p| p.random)),
        num_infeasible_draws: chunk.len() - feasible.len(),
        num_random_infeasible: feasible.iter().filter(|p| p.random.is_none()).count(),
        num_seeds: chunk.len(),
        seed_first: chunk.first().map_or(0, |p| p.seed),
        seed_last: chunk.last().map_or(0, |p| p.seed),
    }
}

fn opt(v: Option<f64>, scale: f64) -> String {
    v.map_or(String::new(), |x| (x * scale).to_string())
}

impl SweepResult {
    /// `sweep_value_dbm,mean_sum_rate_proposed,mean_sum_rate_random,num_infeasible_draws,num_random_infeasible,num_seeds,seed_first,seed_last`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "sweep_value_dbm",
            "mean_sum_rate_proposed",
            "mean_sum_rate_random",
            "num_infeasible_draws",
            "num_random_infeasible",
            "num_seeds",
            "seed_first",
            "seed_last",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.sweep_value_dbm.to_string(),
                (r.mean_sum_rate_proposed * self.rate_scale).to_string(),
                (r.mean_sum_rate_random * self.rate_scale).to_string(),
                r.num_infeasible_draws.to_string(),
                r.num_random_infeasible.to_string(),
                r.num_seeds.to_string(),
                r.seed_first.to_string(),
                r.seed_last.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `sweep_value_dbm,seed,sum_rate_proposed,sum_rate_random`; empty cells mark infeasible draws.
    pub fn write_points_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sweep_value_dbm", "seed", "sum_rate_proposed", "sum_rate_random"])?;
        for p in &self.points {
            w.write_record([
                p.sweep_value_dbm.to_string(),
                p.seed.to_string(),
                opt(p.proposed, self.rate_scale),
                opt(p.random, self.rate_scale),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Proposed sum rates at sweep index `i`, keyed by seed.
    fn proposed_at(&self, i: usize) -> Vec<(u64, Option<f64>)> {
        let per = self.points.len() / self.rows.len();
        self.points[i * per..(i + 1) * per].iter().map(|p| (p.seed, p.proposed)).collect()
    }

    /// Sign test of the first against the last sweep value over seeds feasible at both.
    pub fn trend_test(&self, direction: Trend) -> SignTest {
        let first = self.proposed_at(0);
        let last = self.proposed_at(self.rows.len() - 1);
        let pairs: Vec<(f64, f64)> = first
            .iter()
            .zip(&last)
            .filter_map(|((_, a), (_, b))| Some(((*a)?, (*b)?)))
            .collect();
        sign_test(&pairs, direction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    NonDecreasing,
    NonIncreasing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignTest {
    pub increases: usize,
    pub decreases: usize,
    pub ties: usize,
    /// One-sided probability, under equal chances of either sign, of at least
    /// as many moves against the claimed trend as observed.
    pub p_value: f64,
}

impl SignTest {
    /// The claimed trend survives unless the data contradict it at level `alpha`.
    pub fn consistent(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Pairs are `(before, after)`. Differences within [`TIE_TOL`] relative are ties and are dropped.
pub fn sign_test(pairs: &[(f64, f64)], direction: Trend) -> SignTest {
    let (mut up, mut down, mut ties) = (0, 0, 0);
    for &(a, b) in pairs {
        if (b - a).abs() <= TIE_TOL * a.abs().max(b.abs()) {
            ties += 1;
        } else if b > a {
            up += 1;
        } else {
            down += 1;
        }
    }
    let against = match direction {
        Trend::NonDecreasing => down,
        Trend::NonIncreasing => up,
    };
    SignTest { increases: up, decreases: down, ties, p_value: binomial_upper_tail(up + down, against) }
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    // log C(n, i) built incrementally
    let mut log_c = 0.0f64;
    let mut total = 0.0;
    for i in 0..=n {
        if i > 0 {
            log_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        if i >= k {
            total += (log_c - n as f64 * std::f64::consts::LN_2).exp();
        }
    }
    total.min(1.0)
}

// ---------------------------------------------------------------------------
// bound validation

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub seed: u64,
    pub k: usize,
    pub lower: f64,
    pub exact: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundValidation {
    pub rows: Vec<BoundRow>,
    /// `(seed, report)` per draw.
    pub capacities: Vec<(u64, CapacityBoundReport)>,
}

/// Relative slack on eigenvalue comparisons (eigenvalues are in watts).
pub const EIGEN_SLACK_REL: f64 = 1e-9;
/// Absolute slack on capacity comparisons, in bits.
pub const CAPACITY_SLACK_BITS: f64 = 1e-9;

impl BoundValidation {
    pub fn eigen_violations(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| {
                let tol = EIGEN_SLACK_REL * r.upper.abs().max(r.exact.abs());
                r.lower > r.exact + tol || r.exact > r.upper + tol
            })
            .count()
    }

    pub fn capacity_violations(&self) -> usize {
        self.capacities
            .iter()
            .filter(|(_, c)| c.exact > c.upper + CAPACITY_SLACK_BITS || c.lower > c.exact + CAPACITY_SLACK_BITS)
            .count()
    }

    /// `seed,k,lower,exact,upper`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["seed", "k", "lower", "exact", "upper"])?;
        for r in &self.rows {
            w.write_record([r.seed.to_string(), r.k.to_string(), r.lower.to_string(), r.exact.to_string(), r.upper.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `seed,lower,exact,upper` in bits/s/Hz.
    pub fn write_capacity_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["seed", "lower", "exact", "upper"])?;
        for (seed, c) in &self.capacities {
            w.write_record([seed.to_string(), c.lower.to_string(), c.exact.to_string(), c.upper.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One random skeleton and channel per seed. Skeleton powers are uniform up
/// to `P_0 / d_f`; every pair transmits at `P'_0 / 2` so the equivalent
/// noise differs across subcarriers.
pub fn run_bound_validation(spec: &ExperimentSpec) -> Result<BoundValidation> {
    spec.validate()?;
    let cfg = &spec.scenario;
    let per_seed = spec
        .seeds()
        .into_par_iter()
        .map(|seed| {
            let inst = instance(cfg, seed)?;
            let mut rng = stream_rng(seed, SKELETON_STREAM);
            let scale = cfg.cellular_power_cap_w() / inst.graph.d_f() as f64;
            let skel = CodebookSkeleton::random(&inst.graph, scale, &mut rng)?;
            let covs = skeleton_covariances(&skel)?;
            let mut alloc = PowerAllocation::zeros(cfg.users, cfg.subcarriers, cfg.d2d_pairs);
            alloc.d2d.iter_mut().for_each(|p| *p = cfg.d2d_power_cap_w() / 2.0);
            let noise = equivalent_noise(&inst.ch, &alloc, &inst.occupancy);
            let report = capacity_bound_report(&inst.ch, &covs, &noise)?;
            Ok((seed, report))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = per_seed
        .iter()
        .flat_map(|(seed, rep)| {
            rep.per_eigenvalue.iter().enumerate().map(move |(k, e)| BoundRow { seed: *seed, k, lower: e.lower, exact: e.lambda, upper: e.upper })
        })
        .collect();
    Ok(BoundValidation { rows, capacities: per_seed })
}

// ---------------------------------------------------------------------------
// baseline comparison

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub seed: u64,
    pub proposed: Option<f64>,
    pub random: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub rate_scale: f64,
}

pub fn run_comparison(spec: &ExperimentSpec) -> Result<Comparison> {
    spec.validate()?;
    let cfg = &spec.scenario;
    let settings = spec.settings();
    let rows = spec
        .seeds()
        .into_par_iter()
        .map(|seed| {
            let inst = instance(cfg, seed)?;
            let proposed = run_allocate(cfg, &inst, spec.t_max, &settings)?.final_sum_rate();
            let random = run_baseline(cfg, &inst, seed)?;
            Ok(ComparisonRow { seed, proposed, random })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { rows, rate_scale: cfg.rate_scale() })
}

impl Comparison {
    pub fn infeasible_count(&self) -> usize {
        self.rows.iter().filter(|r| r.proposed.is_none()).count()
    }

    pub fn mean_proposed(&self) -> f64 {
        mean(self.rows.iter().filter_map(|r| r.proposed))
    }

    /// Over draws where the proposed run is feasible.
    pub fn mean_random(&self) -> f64 {
        mean(self.rows.iter().filter(|r| r.proposed.is_some()).filter_map(|r| r.random))
    }

    /// `seed,sum_rate_proposed,sum_rate_random,status`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["seed", "sum_rate_proposed", "sum_rate_random", "status"])?;
        for r in &self.rows {
            let status = match (r.proposed, r.random) {
                (None, _) => "infeasible_draw",
                (Some(_), None) => "random_infeasible",
                _ => "ok",
            };
            w.write_record([r.seed.to_string(), opt(r.proposed, self.rate_scale), opt(r.random, self.rate_scale), status.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Final sum rates with `J_D = 1` and `J_D = 2` on the same seeds. Pair 0 has
/// the same geometry and fading in both, so the second pair is the only
/// difference. Seeds infeasible under either setting are dropped.
pub fn pair_count_effect(cfg: &ScenarioConfig, seeds: &[u64], t_max: usize) -> Result<Vec<(u64, f64, f64)>> {
    let settings = allocator_solver_settings();
    let one = ScenarioConfig { d2d_pairs: 1, ..cfg.clone() };
    let two = ScenarioConfig { d2d_pairs: 2, ..cfg.clone() };
    let rows = seeds
        .par_iter()
        .map(|&seed| {
            let a = run_allocate(&one, &instance(&one, seed)?, t_max, &settings)?.final_sum_rate();
            let b = run_allocate(&two, &instance(&two, seed)?, t_max, &settings)?.final_sum_rate();
            Ok(a.zip(b).map(|(a, b)| (seed, a, b)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}
