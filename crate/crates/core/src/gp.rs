//! Barrier interior-point solver for geometric programs in convex (log) form.
//!
//! Minimizes `f_0(y)` subject to `f_i(y) <= 0` and affine equalities, where
//! every `f` is a log-sum-exp of affine functions. Equalities are removed by
//! eliminating pivot variables; the inequalities are handled with a
//! logarithmic barrier, damped Newton centering and Armijo backtracking. The
//! certified duality gap after each centering is `m / t`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::posy::{dot, AffineEquality, ConvexFormProblem, LogSumExp};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Multiplicative barrier update, > 1.
    pub barrier_mu: f64,
    pub initial_t: f64,
    /// Centering stops once the Newton decrement (gradient norm in the local
    /// Hessian metric) falls below this.
    pub newton_tol: f64,
    /// Newton step cap for a single centering.
    pub max_newton: usize,
    pub duality_gap_tol: f64,
    /// Step shrink factor in (0, 1).
    pub line_search_backtrack: f64,
    /// Armijo constant in (0, 0.5).
    pub line_search_slope: f64,
    /// Record one [`OuterIterate`] per centering.
    pub trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            barrier_mu: 10.0,
            initial_t: 1.0,
            newton_tol: 1e-9,
            max_newton: 200,
            duality_gap_tol: 1e-8,
            line_search_backtrack: 0.5,
            line_search_slope: 0.01,
            trace: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("solver settings: {m}")));
        if !(self.barrier_mu > 1.0) {
            return bad("barrier_mu must exceed 1");
        }
        if !(self.initial_t > 0.0) {
            return bad("initial_t must be positive");
        }
        if !(self.newton_tol > 0.0) || !(self.duality_gap_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.line_search_backtrack > 0.0 && self.line_search_backtrack < 1.0) {
            return bad("line_search_backtrack must lie in (0, 1)");
        }
        if !(self.line_search_slope > 0.0 && self.line_search_slope < 0.5) {
            return bad("line_search_slope must lie in (0, 0.5)");
        }
        if self.max_newton == 0 {
            return bad("max_newton must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterIterate {
    pub iteration: usize,
    pub t: f64,
    /// `f_0(y)` in log space.
    pub objective: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    /// `exp(f_0(y))`, the objective on the original posynomial scale.
    pub objective_value: f64,
    pub status: SolveStatus,
    pub newton_steps_used: usize,
    pub certified_gap: f64,
    /// Largest constraint value `max_i f_i(y)`; negative means strictly feasible.
    pub max_constraint: f64,
    pub trace: Vec<OuterIterate>,
}

impl SolverResult {
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["outer_iteration", "t", "objective", "gap"])?;
        for it in &self.trace {
            w.write_record([it.iteration.to_string(), it.t.to_string(), it.objective.to_string(), it.gap.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Value, gradient and Hessian of one log-sum-exp function.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

/// Softmax-weighted gradient `A^T w` and Hessian `A^T diag(w) A - g g^T`.
pub fn lse_derivatives(f: &LogSumExp, y: &[f64]) -> Derivatives {
    let n = y.len();
    let z: Vec<f64> = f.exponents.iter().zip(&f.offsets).map(|(a, b)| dot(a, y) + b).collect();
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
    let total: f64 = e.iter().sum();
    let w: Vec<f64> = e.iter().map(|v| v / total).collect();
    let value = zmax + total.ln();

    let mut gradient = vec![0.0; n];
    for (a, &wm) in f.exponents.iter().zip(&w) {
        for (g, &ai) in gradient.iter_mut().zip(a) {
            *g += wm * ai;
        }
    }
    let mut hessian = vec![vec![0.0; n]; n];
    for (a, &wm) in f.exponents.iter().zip(&w) {
        for i in 0..n {
            if a[i] == 0.0 {
                continue;
            }
            let wa = wm * a[i];
            for j in 0..n {
                hessian[i][j] += wa * a[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            hessian[i][j] -= gradient[i] * gradient[j];
        }
    }
    Derivatives { value, gradient, hessian }
}

/// Objective value, gradient and Hessian at `y`.
pub fn objective_gradient_hessian(p: &ConvexFormProblem, y: &[f64]) -> Derivatives {
    lse_derivatives(&p.objective, y)
}

// ---------------------------------------------------------------------------
// equality elimination

/// `y = particular + basis * z` parametrizes the affine equality set.
struct Elimination {
    particular: Vec<f64>,
    /// n x r, column-major by free variable.
    basis: Vec<Vec<f64>>,
}

impl Elimination {
    fn identity(n: usize) -> Self {
        let basis = (0..n).map(|c| (0..n).map(|r| if r == c { 1.0 } else { 0.0 }).collect()).collect();
        Self { particular: vec![0.0; n], basis }
    }

    fn lift(&self, z: &[f64]) -> Vec<f64> {
        let mut y = self.particular.clone();
        for (col, &zc) in self.basis.iter().zip(z) {
            for (yi, ci) in y.iter_mut().zip(col) {
                *yi += ci * zc;
            }
        }
        y
    }

    /// Least-squares projection of `y` onto the free coordinates (exact for points on the affine set).
    fn project(&self, y: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = y.iter().zip(&self.particular).map(|(a, b)| a - b).collect();
        let r = self.basis.len();
        let gram: Vec<Vec<f64>> = (0..r).map(|i| (0..r).map(|j| dot(&self.basis[i], &self.basis[j])).collect()).collect();
        let rhs: Vec<f64> = self.basis.iter().map(|c| dot(c, &d)).collect();
        solve_spd(&gram, &rhs)
    }

    fn reduce_lse(&self, f: &LogSumExp) -> LogSumExp {
        LogSumExp {
            exponents: f.exponents.iter().map(|a| self.basis.iter().map(|c| dot(a, c)).collect()).collect(),
            offsets: f.exponents.iter().zip(&f.offsets).map(|(a, b)| b + dot(a, &self.particular)).collect(),
        }
    }
}

fn eliminate(n: usize, equalities: &[AffineEquality]) -> Result<Option<Elimination>> {
    if equalities.is_empty() {
        return Ok(Some(Elimination::identity(n)));
    }
    // rows [a | -b], reduced row echelon form
    let mut rows: Vec<Vec<f64>> = equalities
        .iter()
        .map(|e| {
            let mut r = e.exponents.clone();
            r.push(-e.offset);
            r
        })
        .collect();
    if rows.iter().any(|r| r.len() != n + 1) {
        return Err(Error::Dimension("equality exponent length does not match the variable count".into()));
    }
    let scale = rows.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == rows.len() {
            break;
        }
        let best = (row..rows.len()).max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs())).unwrap();
        if rows[best][col].abs() <= tol {
            continue;
        }
        rows.swap(row, best);
        let piv = rows[row][col];
        for v in rows[row].iter_mut() {
            *v /= piv;
        }
        for r in 0..rows.len() {
            if r != row && rows[r][col] != 0.0 {
                let factor = rows[r][col];
                for c in 0..=n {
                    rows[r][c] -= factor * rows[row][c];
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    if rows[row..].iter().any(|r| r[n].abs() > tol) {
        return Ok(None);
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let mut particular = vec![0.0; n];
    for (r, &pc) in pivots.iter().enumerate() {
        particular[pc] = rows[r][n];
    }
    let basis = free
        .iter()
        .map(|&f| {
            let mut col = vec![0.0; n];
            col[f] = 1.0;
            for (r, &pc) in pivots.iter().enumerate() {
                col[pc] = -rows[r][f];
            }
            col
        })
        .collect();
    Ok(Some(Elimination { particular, basis }))
}

// ---------------------------------------------------------------------------
// dense linear algebra

fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut z = vec![0.0; n];
    for i in 0..n {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (z[i] - ((i + 1)..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

/// Solves `A x = b` for symmetric PSD `A`, adding `1e-12 * trace` (growing
/// tenfold) to the diagonal until the factorization succeeds.
fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    if n == 0 {
        return Vec::new();
    }
    let trace: f64 = (0..n).map(|i| a[i][i].abs()).sum::<f64>().max(1e-300);
    let mut reg = 0.0;
    let mut bump = 1e-12 * trace;
    loop {
        let mut m = a.to_vec();
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += reg;
        }
        if let Some(l) = cholesky(&m) {
            return cholesky_solve(&l, b);
        }
        reg = bump;
        bump *= 10.0;
    }
}

// ---------------------------------------------------------------------------
// barrier method

/// Predicate on the current iterate that ends the barrier method early.
type EarlyStop<'a> = &'a dyn Fn(&[f64]) -> bool;

struct Barrier<'a> {
    objective: &'a LogSumExp,
    constraints: &'a [LogSumExp],
}

impl Barrier<'_> {
    /// `t f_0 - sum log(-f_i)`, or `None` outside the strict interior.
    fn value(&self, t: f64, y: &[f64]) -> Option<f64> {
        let mut v = t * self.objective.value(y);
        for c in self.constraints {
            let f = c.value(y);
            if !(f < 0.0) {
                return None;
            }
            v -= (-f).ln();
        }
        v.is_finite().then_some(v)
    }

    fn gradient_hessian(&self, t: f64, y: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = y.len();
        let d0 = lse_derivatives(self.objective, y);
        let mut g: Vec<f64> = d0.gradient.iter().map(|v| t * v).collect();
        let mut h: Vec<Vec<f64>> = d0.hessian.iter().map(|r| r.iter().map(|v| t * v).collect()).collect();
        for c in self.constraints {
            let d = lse_derivatives(c, y);
            let s = -d.value;
            for i in 0..n {
                g[i] += d.gradient[i] / s;
                for j in 0..n {
                    h[i][j] += d.hessian[i][j] / s + d.gradient[i] * d.gradient[j] / (s * s);
                }
            }
        }
        (g, h)
    }
}

enum Centering {
    Converged,
    EarlyStop,
    MaxIterations,
}

fn center(
    barrier: &Barrier<'_>,
    t: f64,
    y: &mut Vec<f64>,
    s: &SolverSettings,
    steps: &mut usize,
    early_stop: Option<EarlyStop>,
) -> Centering {
    let mut phi = barrier.value(t, y).expect("centering starts strictly feasible");
    for _ in 0..s.max_newton {
        let (g, h) = barrier.gradient_hessian(t, y);
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let dir = solve_spd(&h, &neg_g);
        let slope = dot(&g, &dir);
        let decrement_sq = -slope;
        if !(decrement_sq > s.newton_tol * s.newton_tol) {
            return Centering::Converged;
        }
        *steps += 1;
        let mut step = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = y.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            if let Some(v) = barrier.value(t, &trial) {
                if v <= phi + s.line_search_slope * step * slope {
                    break Some((trial, v));
                }
            }
            step *= s.line_search_backtrack;
            if step < 1e-16 {
                break None;
            }
        };
        match accepted {
            // below the decrement floor set by rounding
            Some((_, v)) if v >= phi => return Centering::Converged,
            Some((trial, v)) => {
                *y = trial;
                phi = v;
            }
            // no progress possible at working precision
            None => return Centering::Converged,
        }
        if early_stop.is_some_and(|f| f(y)) {
            return Centering::EarlyStop;
        }
    }
    Centering::MaxIterations
}

struct BarrierRun {
    y: Vec<f64>,
    status: SolveStatus,
    steps: usize,
    gap: f64,
    early_stopped: bool,
    trace: Vec<OuterIterate>,
}

fn barrier_method(
    objective: &LogSumExp,
    constraints: &[LogSumExp],
    y0: Vec<f64>,
    s: &SolverSettings,
    early_stop: Option<EarlyStop>,
) -> BarrierRun {
    let barrier = Barrier { objective, constraints };
    let m = constraints.len() as f64;
    let mut y = y0;
    let mut t = s.initial_t;
    let mut steps = 0;
    let mut trace = Vec::new();
    for outer in 1.. {
        let outcome = center(&barrier, t, &mut y, s, &mut steps, early_stop);
        let gap = if constraints.is_empty() { 0.0 } else { m / t };
        if s.trace {
            trace.push(OuterIterate { iteration: outer, t, objective: objective.value(&y), gap });
        }
        match outcome {
            Centering::EarlyStop => {
                return BarrierRun { y, status: SolveStatus::Optimal, steps, gap, early_stopped: true, trace };
            }
            Centering::MaxIterations => {
                return BarrierRun { y, status: SolveStatus::MaxIterations, steps, gap, early_stopped: false, trace };
            }
            Centering::Converged => {}
        }
        if gap <= s.duality_gap_tol {
            return BarrierRun { y, status: SolveStatus::Optimal, steps, gap, early_stopped: false, trace };
        }
        t *= s.barrier_mu;
    }
    unreachable!()
}

fn max_constraint(constraints: &[LogSumExp], y: &[f64]) -> f64 {
    constraints.iter().map(|c| c.value(y)).fold(f64::NEG_INFINITY, f64::max)
}

/// Phase-1 outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// A strictly feasible point.
    Feasible(Vec<f64>),
    /// No strictly feasible point; `slack` is the smallest achievable `max_i f_i`.
    Infeasible { slack: f64 },
}

/// Target margin at which phase 1 stops early.
const PHASE1_MARGIN: f64 = 1e-3;
/// Half-width of the box (in log units) phase 1 searches around its start.
const PHASE1_BOX: f64 = 50.0;

/// Phase 1 on an equality-free problem, starting from `z0`.
fn phase_one(constraints: &[LogSumExp], z0: &[f64], s: &SolverSettings) -> (Feasibility, usize) {
    let r = z0.len();
    let start = max_constraint(constraints, z0);
    if constraints.is_empty() || start <= -PHASE1_MARGIN {
        return (Feasibility::Feasible(z0.to_vec()), 0);
    }
    // variables (z, slack); minimize slack s.t. f_i(z) - slack <= 0, slack >= -1, |z - z0| <= box
    let lift = |a: &[f64], tail: f64| {
        let mut v = a.to_vec();
        v.push(tail);
        v
    };
    let unit = |i: usize, sign: f64| {
        let mut v = vec![0.0; r + 1];
        v[i] = sign;
        v
    };
    let objective = LogSumExp { exponents: vec![unit(r, 1.0)], offsets: vec![0.0] };
    let mut cons: Vec<LogSumExp> = constraints
        .iter()
        .map(|c| LogSumExp { exponents: c.exponents.iter().map(|a| lift(a, -1.0)).collect(), offsets: c.offsets.clone() })
        .collect();
    cons.push(LogSumExp { exponents: vec![unit(r, -1.0)], offsets: vec![-1.0] });
    for i in 0..r {
        cons.push(LogSumExp { exponents: vec![unit(i, 1.0)], offsets: vec![-z0[i] - PHASE1_BOX] });
        cons.push(LogSumExp { exponents: vec![unit(i, -1.0)], offsets: vec![z0[i] - PHASE1_BOX] });
    }
    let mut w0 = z0.to_vec();
    w0.push(start.max(-0.5) + 1.0);
    let stop = |w: &[f64]| w[r] <= -PHASE1_MARGIN;
    let run = barrier_method(&objective, &cons, w0, s, Some(&stop));
    let z = run.y[..r].to_vec();
    let achieved = max_constraint(constraints, &z);
    if achieved < 0.0 {
        (Feasibility::Feasible(z), run.steps)
    } else {
        (Feasibility::Infeasible { slack: achieved }, run.steps)
    }
}

fn check_problem(p: &ConvexFormProblem) -> Result<()> {
    let n = p.nvars;
    let bad = |f: &LogSumExp| f.is_empty() || f.exponents.iter().any(|a| a.len() != n) || f.offsets.len() != f.exponents.len();
    if bad(&p.objective) || p.inequalities.iter().any(bad) {
        return Err(Error::Dimension(format!("every log-sum-exp term must have {n} exponents")));
    }
    Ok(())
}

/// Finds a strictly feasible point for the inequalities (and equalities) of `p`,
/// starting the search at the origin.
pub fn find_feasible(p: &ConvexFormProblem, s: &SolverSettings) -> Result<Feasibility> {
    find_feasible_from(p, &vec![0.0; p.nvars], s)
}

pub fn find_feasible_from(p: &ConvexFormProblem, y0: &[f64], s: &SolverSettings) -> Result<Feasibility> {
    check_problem(p)?;
    s.validate()?;
    let Some(elim) = eliminate(p.nvars, &p.equalities)? else {
        return Ok(Feasibility::Infeasible { slack: f64::INFINITY });
    };
    let cons: Vec<LogSumExp> = p.inequalities.iter().map(|c| elim.reduce_lse(c)).collect();
    let (f, _) = phase_one(&cons, &elim.project(y0), s);
    Ok(match f {
        Feasibility::Feasible(z) => Feasibility::Feasible(elim.lift(&z)),
        other => other,
    })
}

/// Solves the convex-form GP from `y0`. When `y0` is not strictly feasible a
/// phase-1 search from `y0` runs first; an empty feasible set yields
/// [`SolveStatus::Infeasible`].
pub fn solve(p: &ConvexFormProblem, y0: &[f64], s: &SolverSettings) -> Result<SolverResult> {
    check_problem(p)?;
    s.validate()?;
    if y0.len() != p.nvars {
        return Err(Error::Dimension(format!("start point has {} entries, problem has {}", y0.len(), p.nvars)));
    }
    let infeasible = |slack: f64, steps: usize| SolverResult {
        y: y0.to_vec(),
        x: y0.iter().map(|v| v.exp()).collect(),
        objective_value: f64::NAN,
        status: SolveStatus::Infeasible,
        newton_steps_used: steps,
        certified_gap: f64::INFINITY,
        max_constraint: slack,
        trace: Vec::new(),
    };
    let Some(elim) = eliminate(p.nvars, &p.equalities)? else {
        return Ok(infeasible(f64::INFINITY, 0));
    };
    let objective = elim.reduce_lse(&p.objective);
    let cons: Vec<LogSumExp> = p.inequalities.iter().map(|c| elim.reduce_lse(c)).collect();
    let mut z = elim.project(y0);
    let mut steps = 0;
    if !(max_constraint(&cons, &z) < 0.0) {
        let (f, used) = phase_one(&cons, &z, s);
        steps += used;
        match f {
            Feasibility::Feasible(start) => z = start,
            Feasibility::Infeasible { slack } => return Ok(infeasible(slack, steps)),
        }
    }
    let run = barrier_method(&objective, &cons, z, s, None);
    let y = elim.lift(&run.y);
    let value = p.objective.value(&y);
    debug_assert!(!run.early_stopped);
    Ok(SolverResult {
        x: y.iter().map(|v| v.exp()).collect(),
        objective_value: value.exp(),
        status: run.status,
        newton_steps_used: steps + run.steps,
        certified_gap: run.gap,
        max_constraint: max_constraint(&p.inequalities, &y),
        trace: run.trace,
        y,
    })
}
