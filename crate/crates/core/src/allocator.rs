//! Joint cellular/D2D power allocation by successive geometric programming.
//!
//! The sum rate is `log2(prod g / prod f)` where every `f` (noise plus
//! interference) and `g` (`f` plus the wanted signal) is a posynomial in the
//! powers. Maximizing it means minimizing `prod f / prod g`, which is not a
//! GP because of the posynomial denominator. Each iteration replaces the
//! expanded denominator by its monomial condensation at the current powers,
//! solves the resulting GP and moves to its optimum. Because the condensation
//! never exceeds the denominator and is exact at the expansion point, the
//! sum rate cannot decrease from one iteration to the next.

use std::io::Write;

use rand::Rng;

use crate::capacity::{closed_form_cellular_capacity, d2d_capacity, equivalent_noise, Occupancy, PowerAllocation};
use crate::channel::{watts_to_dbm, ChannelRealization};
use crate::error::{Error, Result};
use crate::gp::{self, Feasibility, OuterIterate, SolveStatus, SolverSettings};
use crate::posy::{to_convex_form, LogSumExp, Monomial, Posynomial};
use crate::scenario::ScenarioConfig;
use crate::structure::FactorGraph;

/// Relative sum-rate change below which the sum rate counts as converged.
pub const CONVERGENCE_TOL: f64 = 1e-6;
/// Largest relative power change of the final step. The sum rate settles a
/// few iterations before the powers along nearly flat directions do.
pub const POWER_STEP_TOL: f64 = 1e-6;

/// Maps powers to GP variables: `P_jk` for each user `j` and `k` in its
/// support (ascending), then `P'_l` for each pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableRegistry {
    cellular: Vec<Vec<Option<usize>>>,
    entries: Vec<(usize, usize)>,
    pairs: usize,
}

impl VariableRegistry {
    pub fn new(graph: &FactorGraph, pairs: usize) -> Self {
        let mut cellular = vec![vec![None; graph.subcarriers()]; graph.users()];
        let mut entries = Vec::new();
        for (j, ks) in graph.incidence_sets().zeta.iter().enumerate() {
            for &k in ks {
                cellular[j][k] = Some(entries.len());
                entries.push((j, k));
            }
        }
        Self { cellular, entries, pairs }
    }

    pub fn len(&self) -> usize {
        self.entries.len() + self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cellular(&self, user: usize, subcarrier: usize) -> Option<usize> {
        self.cellular.get(user)?.get(subcarrier).copied().flatten()
    }

    pub fn d2d(&self, pair: usize) -> usize {
        self.entries.len() + pair
    }

    /// `(user, subcarrier)` of every cellular variable in registry order.
    pub fn cellular_entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    /// Column names: `p_j{j}_k{k}` and `pd_{l}`, 0-based.
    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.entries.iter().map(|(j, k)| format!("p_j{j}_k{k}")).collect();
        names.extend((0..self.pairs).map(|l| format!("pd_{l}")));
        names
    }

    pub fn to_point(&self, alloc: &PowerAllocation) -> Vec<f64> {
        let mut x: Vec<f64> = self.entries.iter().map(|&(j, k)| alloc.cellular[j][k]).collect();
        x.extend_from_slice(&alloc.d2d[..self.pairs]);
        x
    }

    pub fn to_allocation(&self, x: &[f64]) -> PowerAllocation {
        let users = self.cellular.len();
        let subcarriers = self.cellular.first().map_or(0, Vec::len);
        let mut alloc = PowerAllocation::zeros(users, subcarriers, self.pairs);
        for (&(j, k), &v) in self.entries.iter().zip(x) {
            alloc.cellular[j][k] = v;
        }
        alloc.d2d.copy_from_slice(&x[self.entries.len()..]);
        alloc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// Cellular SINR floor of user `j` on subcarrier `k`.
    CellularSinr { user: usize, subcarrier: usize },
    D2dSinr { pair: usize },
    /// `P_jk <= P_0 / d_f`.
    CellularCap { user: usize, subcarrier: usize },
    D2dCap { pair: usize },
}

/// One constraint `posynomial <= 1`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub posynomial: Posynomial,
}

/// The sum-rate problem with factors kept separate.
#[derive(Debug, Clone)]
pub struct P2Problem {
    pub registry: VariableRegistry,
    /// `f_k` for each subcarrier, then `f'_l` for each pair.
    pub numerator_factors: Vec<Posynomial>,
    /// `g_k` for each subcarrier, then `g'_l` for each pair.
    pub denominator_factors: Vec<Posynomial>,
    /// Cellular SINR floors, D2D SINR floors, cellular caps, D2D caps, in that order.
    pub constraints: Vec<Constraint>,
    pub cellular_cap_w: f64,
    pub d2d_cap_w: f64,
}

fn term(coefficient: f64, vars: &[(usize, f64)], n: usize) -> Result<Monomial> {
    let mut exponents = vec![0.0; n];
    for &(v, a) in vars {
        exponents[v] += a;
    }
    Monomial::new(coefficient, exponents)
}

pub fn build_p2(cfg: &ScenarioConfig, ch: &ChannelRealization, graph: &FactorGraph, occupancy: &Occupancy) -> Result<P2Problem> {
    let (users, subcarriers, pairs) = (graph.users(), graph.subcarriers(), occupancy.pairs());
    if ch.users() != users || ch.subcarriers() != subcarriers || ch.pairs() != pairs || occupancy.subcarriers() != subcarriers {
        return Err(Error::Dimension(format!(
            "channel is {}x{} with {} pairs, graph is {users}x{subcarriers}, occupancy has {pairs} pairs on {} subcarriers",
            ch.users(),
            ch.subcarriers(),
            ch.pairs(),
            occupancy.subcarriers()
        )));
    }
    if let Some(l) = (0..pairs).find(|&l| occupancy.tone_of(l).is_none()) {
        return Err(Error::UnassignedPair(l));
    }
    let reg = VariableRegistry::new(graph, pairs);
    let n = reg.len();
    let n0 = ch.noise_power_w;
    let xi = graph.incidence_sets().xi;

    // f_k: noise plus D2D leakage at the BS
    let f: Vec<Vec<Monomial>> = (0..subcarriers)
        .map(|k| {
            let mut t = vec![term(n0, &[], n)?];
            if let Some(l) = occupancy.pair_on(k) {
                t.push(term(ch.d2d_to_bs[l].norm_sqr(), &[(reg.d2d(l), 1.0)], n)?);
            }
            Ok(t)
        })
        .collect::<Result<_>>()?;
    // f'_l: noise plus cellular leakage at D2D receiver l
    let fd: Vec<Vec<Monomial>> = (0..pairs)
        .map(|l| {
            let tone = occupancy.tone_of(l).expect("checked above");
            let mut t = vec![term(n0, &[], n)?];
            for &j in &xi[tone] {
                let v = reg.cellular(j, tone).expect("user on its own subcarrier");
                t.push(term(ch.cell_to_d2d[j][l].norm_sqr(), &[(v, 1.0)], n)?);
            }
            Ok(t)
        })
        .collect::<Result<_>>()?;

    let mut numerator_factors = Vec::with_capacity(subcarriers + pairs);
    let mut denominator_factors = Vec::with_capacity(subcarriers + pairs);
    for (k, fk) in f.iter().enumerate() {
        numerator_factors.push(Posynomial::new(fk.clone())?);
        let mut g = fk.clone();
        for &j in &xi[k] {
            g.push(term(ch.cell_to_bs[j][k].norm_sqr(), &[(reg.cellular(j, k).unwrap(), 1.0)], n)?);
        }
        denominator_factors.push(Posynomial::new(g)?);
    }
    for (l, fl) in fd.iter().enumerate() {
        numerator_factors.push(Posynomial::new(fl.clone())?);
        let mut g = fl.clone();
        g.push(term(ch.d2d_pair[l].norm_sqr(), &[(reg.d2d(l), 1.0)], n)?);
        denominator_factors.push(Posynomial::new(g)?);
    }

    let gamma_c = cfg.cellular_sinr_floor();
    let gamma_d = cfg.d2d_sinr_floor();
    let cap_c = cfg.cellular_power_cap_w() / graph.d_f() as f64;
    let cap_d = cfg.d2d_power_cap_w();
    if !(cap_c > 0.0 && cap_c.is_finite() && cap_d > 0.0 && cap_d.is_finite()) {
        return Err(Error::InvalidArgument(format!("power caps must be positive, got {cap_c} W and {cap_d} W")));
    }
    let mut constraints = Vec::with_capacity(2 * n);
    for &(j, k) in reg.cellular_entries() {
        // gamma * f_k / (|h|^2 P_jk) <= 1
        let v = reg.cellular(j, k).unwrap();
        let scale = gamma_c / ch.cell_to_bs[j][k].norm_sqr();
        let inv = term(scale, &[(v, -1.0)], n)?;
        let terms = f[k].iter().map(|t| t.mul(&inv)).collect::<Result<_>>()?;
        constraints.push(Constraint { kind: ConstraintKind::CellularSinr { user: j, subcarrier: k }, posynomial: Posynomial::new(terms)? });
    }
    for (l, fl) in fd.iter().enumerate() {
        let inv = term(gamma_d / ch.d2d_pair[l].norm_sqr(), &[(reg.d2d(l), -1.0)], n)?;
        let terms = fl.iter().map(|t| t.mul(&inv)).collect::<Result<_>>()?;
        constraints.push(Constraint { kind: ConstraintKind::D2dSinr { pair: l }, posynomial: Posynomial::new(terms)? });
    }
    for &(j, k) in reg.cellular_entries() {
        let m = term(1.0 / cap_c, &[(reg.cellular(j, k).unwrap(), 1.0)], n)?;
        constraints.push(Constraint { kind: ConstraintKind::CellularCap { user: j, subcarrier: k }, posynomial: m.into() });
    }
    for l in 0..pairs {
        let m = term(1.0 / cap_d, &[(reg.d2d(l), 1.0)], n)?;
        constraints.push(Constraint { kind: ConstraintKind::D2dCap { pair: l }, posynomial: m.into() });
    }

    Ok(P2Problem { registry: reg, numerator_factors, denominator_factors, constraints, cellular_cap_w: cap_c, d2d_cap_w: cap_d })
}

impl P2Problem {
    pub fn nvars(&self) -> usize {
        self.registry.len()
    }

    /// `log2(prod g / prod f)` at `x` (watts, registry order).
    pub fn sum_rate_ratio(&self, x: &[f64]) -> Result<f64> {
        let mut bits = 0.0;
        for (f, g) in self.numerator_factors.iter().zip(&self.denominator_factors) {
            bits += (eval_nonneg(g, x)? / eval_nonneg(f, x)?).log2();
        }
        Ok(bits)
    }

    /// Largest `log` of a constraint left side; `<= 0` means feasible.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        self.constraints
            .iter()
            .map(|c| LogSumExp::from_posynomial(&c.posynomial).value(&y))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest log value over the SINR floor constraints.
    fn sinr_violation(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        self.constraints
            .iter()
            .filter(|c| matches!(c.kind, ConstraintKind::CellularSinr { .. } | ConstraintKind::D2dSinr { .. }))
            .map(|c| LogSumExp::from_posynomial(&c.posynomial).value(&y))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `p0 = (P_0 / (2 d_f), ..., P'_0 / 2, ...)`.
    pub fn initial_point(&self) -> Vec<f64> {
        let mut x = vec![self.cellular_cap_w / 2.0; self.registry.cellular_entries().len()];
        x.extend(std::iter::repeat_n(self.d2d_cap_w / 2.0, self.registry.pairs()));
        x
    }

    /// The GP solved at one iteration: `prod f / condense(prod g)` under the constraints.
    pub fn surrogate(&self, denominator: &Posynomial, at: &[f64]) -> Result<crate::posy::ConvexFormProblem> {
        let condensed = denominator.condense(at)?;
        let mut numerator = self.numerator_factors[0].clone();
        for f in &self.numerator_factors[1..] {
            numerator = numerator.multiply(f)?;
        }
        let objective = numerator.mul_monomial(&condensed.recip())?;
        let cons: Vec<Posynomial> = self.constraints.iter().map(|c| c.posynomial.clone()).collect();
        to_convex_form(&objective, &cons, &[])
    }
}

/// Posynomial value that tolerates zero variables when the exponents allow it.
fn eval_nonneg(p: &Posynomial, x: &[f64]) -> Result<f64> {
    if x.iter().all(|&v| v > 0.0) {
        return p.eval(x);
    }
    let mut total = 0.0;
    for t in p.terms() {
        let mut v = t.coefficient();
        for (&a, &xi) in t.exponents().iter().zip(x) {
            if a != 0.0 {
                v *= xi.powf(a);
            }
        }
        total += v;
    }
    Ok(total)
}

/// Full product of the denominator factors.
pub fn expand_denominator(p2: &P2Problem) -> Result<Posynomial> {
    let mut acc = p2.denominator_factors[0].clone();
    for g in &p2.denominator_factors[1..] {
        acc = acc.multiply(g)?;
    }
    Ok(acc)
}

/// Cellular plus D2D capacity in bits/s/Hz.
pub fn sum_rate(ch: &ChannelRealization, graph: &FactorGraph, occupancy: &Occupancy, alloc: &PowerAllocation) -> Result<f64> {
    alloc.validate(graph)?;
    let noise = equivalent_noise(ch, alloc, occupancy);
    Ok(closed_form_cellular_capacity(ch, alloc, &noise, graph) + d2d_capacity(ch, alloc, graph, occupancy)?)
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// 0 for the starting point.
    pub iteration: usize,
    pub powers: PowerAllocation,
    pub sum_rate_bits: f64,
    /// `None` for the starting point.
    pub solver_status: Option<SolveStatus>,
    pub newton_steps: usize,
    pub solver_trace: Vec<OuterIterate>,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub registry: VariableRegistry,
    /// Starting point followed by one record per GP solve.
    pub records: Vec<IterationRecord>,
    /// Both the sum rate and the powers stopped moving.
    pub converged: bool,
    /// First iteration whose relative sum-rate change fell below [`CONVERGENCE_TOL`].
    pub rate_converged_at: Option<usize>,
    pub iterations_used: usize,
    /// The default start violated an SINR floor and phase 1 supplied another.
    pub phase_one_start: bool,
}

impl IterationTrace {
    /// Records of the GP solves, without the starting point.
    pub fn per_iteration(&self) -> &[IterationRecord] {
        &self.records[1..]
    }

    pub fn initial(&self) -> &IterationRecord {
        &self.records[0]
    }

    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("trace always holds the starting point")
    }

    pub fn final_sum_rate(&self) -> f64 {
        self.final_record().sum_rate_bits
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["iteration".to_string(), "sum_rate".to_string(), "solver_status".to_string()];
        for name in self.registry.names() {
            h.push(format!("{name}_w"));
            h.push(format!("{name}_dbm"));
        }
        h
    }

    /// CSV fields per record; `rate_scale` converts bits/s/Hz to the reported unit.
    pub fn csv_rows(&self, rate_scale: f64) -> Vec<Vec<String>> {
        self.records
            .iter()
            .map(|r| {
                let mut row = vec![r.iteration.to_string(), (r.sum_rate_bits * rate_scale).to_string(), status_name(r.solver_status).to_string()];
                for v in self.registry.to_point(&r.powers) {
                    row.push(v.to_string());
                    row.push(watts_to_dbm(v).to_string());
                }
                row
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W, rate_scale: f64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.csv_header())?;
        for row in self.csv_rows(rate_scale) {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn status_name(s: Option<SolveStatus>) -> &'static str {
    match s {
        None => "initial",
        Some(SolveStatus::Optimal) => "optimal",
        Some(SolveStatus::Infeasible) => "infeasible",
        Some(SolveStatus::MaxIterations) => "max_iterations",
    }
}

/// Solver settings used for every surrogate GP. The duality gap is tightened
/// below the default so that solver inexactness stays well under the 1e-8 bit
/// ascent tolerance.
pub fn allocator_solver_settings() -> SolverSettings {
    SolverSettings { duality_gap_tol: 1e-10, ..SolverSettings::default() }
}

/// Runs up to `t_max` condense-and-solve iterations from the default start.
pub fn allocate(
    cfg: &ScenarioConfig,
    ch: &ChannelRealization,
    graph: &FactorGraph,
    occupancy: &Occupancy,
    t_max: usize,
    settings: &SolverSettings,
) -> Result<IterationTrace> {
    let p2 = build_p2(cfg, ch, graph, occupancy)?;
    let denominator = expand_denominator(&p2)?;
    let mut x = p2.initial_point();
    let mut phase_one_start = false;
    if p2.max_violation(&x) >= 0.0 {
        let probe = to_convex_form(&Monomial::constant(1.0, p2.nvars())?.into(), &p2.constraints.iter().map(|c| c.posynomial.clone()).collect::<Vec<_>>(), &[])?;
        let y0: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        match gp::find_feasible_from(&probe, &y0, settings)? {
            Feasibility::Feasible(y) => x = y.iter().map(|v| v.exp()).collect(),
            Feasibility::Infeasible { slack } => return Err(Error::Infeasible { slack }),
        }
        phase_one_start = true;
    }
    let rate = |x: &[f64]| sum_rate(ch, graph, occupancy, &p2.registry.to_allocation(x));
    let mut records = vec![IterationRecord {
        iteration: 0,
        powers: p2.registry.to_allocation(&x),
        sum_rate_bits: rate(&x)?,
        solver_status: None,
        newton_steps: 0,
        solver_trace: Vec::new(),
    }];
    let mut converged = false;
    let mut rate_converged_at = None;
    for it in 1..=t_max {
        let problem = p2.surrogate(&denominator, &x)?;
        let y0: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let res = gp::solve(&problem, &y0, settings)?;
        if res.status == SolveStatus::Infeasible {
            return Err(Error::Infeasible { slack: res.max_constraint });
        }
        let step = res.x.iter().zip(&x).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max);
        x = res.x;
        let r = rate(&x)?;
        let prev = records.last().unwrap().sum_rate_bits;
        records.push(IterationRecord {
            iteration: it,
            powers: p2.registry.to_allocation(&x),
            sum_rate_bits: r,
            solver_status: Some(res.status),
            newton_steps: res.newton_steps_used,
            solver_trace: res.trace,
        });
        if (r - prev).abs() <= CONVERGENCE_TOL * prev.abs().max(f64::MIN_POSITIVE) {
            rate_converged_at.get_or_insert(it);
            if step <= POWER_STEP_TOL {
                converged = true;
                break;
            }
        }
    }
    let iterations_used = records.len() - 1;
    Ok(IterationTrace { registry: p2.registry, records, converged, rate_converged_at, iterations_used, phase_one_start })
}

/// One draw of the random-allocation baseline.
#[derive(Debug, Clone)]
pub struct BaselineDraw {
    pub allocation: PowerAllocation,
    /// Every SINR floor holds.
    pub feasible: bool,
    pub draws: usize,
    /// Largest log SINR-floor constraint value of the returned draw.
    pub violation: f64,
}

/// Uniform powers on `(0, P_0/d_f]` and `(0, P'_0]`, resampled until every
/// SINR floor holds; after `max_resample` draws the least-violating draw is
/// returned with `feasible = false`.
pub fn random_baseline(
    cfg: &ScenarioConfig,
    ch: &ChannelRealization,
    graph: &FactorGraph,
    occupancy: &Occupancy,
    rng: &mut impl Rng,
    max_resample: usize,
) -> Result<BaselineDraw> {
    if !(cfg.cellular_power_cap_w() > 0.0) || !(cfg.d2d_power_cap_w() > 0.0) {
        let allocation = PowerAllocation::zeros(graph.users(), graph.subcarriers(), occupancy.pairs());
        return Ok(BaselineDraw { allocation, feasible: false, draws: 0, violation: f64::INFINITY });
    }
    let p2 = build_p2(cfg, ch, graph, occupancy)?;
    let ncell = p2.registry.cellular_entries().len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for draw in 1..=max_resample.max(1) {
        // 1 - U[0,1) lies in (0, 1]
        let x: Vec<f64> = (0..p2.nvars())
            .map(|v| {
                let cap = if v < ncell { p2.cellular_cap_w } else { p2.d2d_cap_w };
                cap * (1.0 - rng.random::<f64>())
            })
            .collect();
        let violation = if x.iter().all(|&v| v > 0.0) { p2.sinr_violation(&x) } else { f64::INFINITY };
        if violation <= 0.0 {
            return Ok(BaselineDraw { allocation: p2.registry.to_allocation(&x), feasible: true, draws: draw, violation });
        }
        if best.as_ref().is_none_or(|(_, b)| violation < *b) {
            best = Some((x, violation));
        }
    }
    let (x, violation) = best.expect("at least one draw");
    Ok(BaselineDraw { allocation: p2.registry.to_allocation(&x), feasible: false, draws: max_resample.max(1), violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_realization;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(cfg: &ScenarioConfig, seed: u64) -> (ChannelRealization, FactorGraph, Occupancy) {
        let (_, ch) = draw_realization(cfg, seed).unwrap();
        let graph = cfg.factor_graph().unwrap();
        let occ = Occupancy::diagonal(cfg.subcarriers, cfg.d2d_pairs).unwrap();
        (ch, graph, occ)
    }

    #[test]
    fn table_one_counts() {
        let cfg = ScenarioConfig::default();
        let (ch, graph, occ) = setup(&cfg, 1);
        let p2 = build_p2(&cfg, &ch, &graph, &occ).unwrap();
        assert_eq!(p2.nvars(), 13);
        assert_eq!(p2.constraints.len(), 26);
        assert_eq!(p2.numerator_factors.len(), 5);
        // unoccupied subcarriers have the constant numerator N_0
        for k in 1..4 {
            assert_eq!(p2.numerator_factors[k].len(), 1);
            assert!((p2.numerator_factors[k].terms()[0].coefficient() / ch.noise_power_w - 1.0).abs() < 1e-15);
        }
        assert_eq!(p2.numerator_factors[0].len(), 2);
        assert_eq!(p2.numerator_factors[4].len(), 4);
        for g in &p2.denominator_factors {
            assert!(g.terms().iter().any(|t| t.exponents().iter().all(|&a| a == 0.0)));
        }
    }

    #[test]
    fn no_pairs_drops_d2d_parts() {
        let cfg = ScenarioConfig { d2d_pairs: 0, ..ScenarioConfig::default() };
        let (ch, graph, occ) = setup(&cfg, 2);
        let p2 = build_p2(&cfg, &ch, &graph, &occ).unwrap();
        assert_eq!(p2.nvars(), 12);
        assert_eq!(p2.denominator_factors.len(), 4);
        assert_eq!(p2.constraints.len(), 24);
        assert!(p2.constraints.iter().all(|c| !matches!(c.kind, ConstraintKind::D2dSinr { .. } | ConstraintKind::D2dCap { .. })));
    }

    #[test]
    fn expansion_is_a_homomorphism() {
        let cfg = ScenarioConfig::default();
        let (ch, graph, occ) = setup(&cfg, 3);
        let p2 = build_p2(&cfg, &ch, &graph, &occ).unwrap();
        let d = expand_denominator(&p2).unwrap();
        // factors share variables, so count distinct exponent vectors over every term combination
        let mut distinct = std::collections::BTreeSet::new();
        let mut combos: Vec<Vec<i64>> = vec![vec![0; p2.nvars()]];
        for g in &p2.denominator_factors {
            combos = combos
                .iter()
                .flat_map(|c| g.terms().iter().map(move |t| c.iter().zip(t.exponents()).map(|(a, b)| a + *b as i64).collect()))
                .collect();
        }
        distinct.extend(combos);
        assert_eq!(d.len(), distinct.len());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let x: Vec<f64> = (0..p2.nvars()).map(|_| rng.random_range(1e-3..1.0)).collect();
            let direct: f64 = p2.denominator_factors.iter().map(|g| g.eval(&x).unwrap()).product();
            assert!((d.eval(&x).unwrap() / direct - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_factor_scales_coefficients() {
        let n0 = Posynomial::from(Monomial::constant(3.0, 2).unwrap());
        let g = Posynomial::new(vec![term(1.0, &[(0, 1.0)], 2).unwrap(), term(2.0, &[(1, 1.0)], 2).unwrap()]).unwrap();
        let prod = n0.multiply(&g).unwrap();
        let coeffs: Vec<f64> = prod.terms().iter().map(Monomial::coefficient).collect();
        assert_eq!(coeffs, vec![3.0, 6.0]);
        let h = Posynomial::new(vec![term(1.0, &[(0, 1.0)], 4).unwrap(), term(1.0, &[(1, 1.0)], 4).unwrap()]).unwrap();
        let k = Posynomial::new(vec![term(1.0, &[(2, 1.0)], 4).unwrap(), term(1.0, &[(3, 1.0)], 4).unwrap()]).unwrap();
        assert_eq!(h.multiply(&k).unwrap().len(), 4);
    }

    #[test]
    fn sum_rate_routes_agree() {
        let cfg = ScenarioConfig { d2d_pairs: 2, ..ScenarioConfig::default() };
        for seed in 0..5 {
            let (ch, graph, occ) = setup(&cfg, seed);
            let p2 = build_p2(&cfg, &ch, &graph, &occ).unwrap();
            let x = p2.initial_point();
            let a = sum_rate(&ch, &graph, &occ, &p2.registry.to_allocation(&x)).unwrap();
            let b = p2.sum_rate_ratio(&x).unwrap();
            assert!((a / b - 1.0).abs() < 1e-10, "{a} vs {b}");
        }
        let (ch, graph, occ) = setup(&cfg, 0);
        assert_eq!(sum_rate(&ch, &graph, &occ, &PowerAllocation::zeros(6, 4, 2)).unwrap(), 0.0);
    }

    #[test]
    fn trace_ascends_and_stays_feasible() {
        let cfg = ScenarioConfig::default();
        for seed in 1..4 {
            let (ch, graph, occ) = setup(&cfg, seed);
            let trace = match allocate(&cfg, &ch, &graph, &occ, 10, &allocator_solver_settings()) {
                Ok(t) => t,
                Err(Error::Infeasible { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            let p2 = build_p2(&cfg, &ch, &graph, &occ).unwrap();
            for w in trace.records.windows(2) {
                assert!(w[1].sum_rate_bits >= w[0].sum_rate_bits - 1e-8);
            }
            for r in &trace.records {
                let x = p2.registry.to_point(&r.powers);
                assert!(p2.max_violation(&x) <= 1e-8);
                for (j, row) in r.powers.cellular.iter().enumerate() {
                    for (k, &p) in row.iter().enumerate() {
                        assert!(graph.entry(k, j) || p == 0.0);
                    }
                    assert!(row.iter().sum::<f64>() <= cfg.cellular_power_cap_w() * (1.0 + 1e-9));
                }
            }
            assert!(trace.iterations_used <= 10);
        }
    }

    #[test]
    fn single_step_records_one_solve() {
        let cfg = ScenarioConfig::default();
        let (ch, graph, occ) = setup(&cfg, 1);
        let trace = allocate(&cfg, &ch, &graph, &occ, 1, &allocator_solver_settings()).unwrap();
        assert_eq!(trace.per_iteration().len(), 1);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf, 1.0).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("iteration,sum_rate,solver_status,p_j0_k0_w,p_j0_k0_dbm,"));
    }

    #[test]
    fn baseline_is_deterministic_and_degenerate_caps_fail() {
        let cfg = ScenarioConfig::default();
        let (ch, graph, occ) = setup(&cfg, 5);
        let a = random_baseline(&cfg, &ch, &graph, &occ, &mut ChaCha8Rng::seed_from_u64(1), 1000).unwrap();
        let b = random_baseline(&cfg, &ch, &graph, &occ, &mut ChaCha8Rng::seed_from_u64(1), 1000).unwrap();
        assert_eq!(a.allocation, b.allocation);
        let zero = ScenarioConfig { cellular_power_cap_dbm: f64::NEG_INFINITY, d2d_power_cap_dbm: f64::NEG_INFINITY, ..cfg };
        let d = random_baseline(&zero, &ch, &graph, &occ, &mut ChaCha8Rng::seed_from_u64(1), 10).unwrap();
        assert!(!d.feasible);
        assert!(d.allocation.cellular.iter().flatten().all(|&p| p == 0.0) && d.allocation.d2d.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn registry_round_trip() {
        let cfg = ScenarioConfig { d2d_pairs: 2, ..ScenarioConfig::default() };
        let graph = cfg.factor_graph().unwrap();
        let reg = VariableRegistry::new(&graph, 2);
        let x: Vec<f64> = (0..reg.len()).map(|i| i as f64 + 1.0).collect();
        assert_eq!(reg.to_point(&reg.to_allocation(&x)), x);
        assert_eq!(reg.names()[0], "p_j0_k0");
        assert_eq!(reg.names()[13], "pd_1");
    }
}
