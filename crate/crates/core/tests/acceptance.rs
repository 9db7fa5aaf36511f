//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Run with `cargo test -p scma-d2d-core --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scma_d2d_core::allocator::{allocate, allocator_solver_settings, IterationTrace};
use scma_d2d_core::capacity::{closed_form_cellular_capacity, diagonal_covariances, equivalent_noise, exact_cellular_capacity_general};
use scma_d2d_core::experiments::{pair_count_effect, run_bound_validation, run_sweep, ExperimentKind, ExperimentSpec, SweepResult, Trend};
use scma_d2d_core::gp::{lse_derivatives, solve, SolveStatus, SolverSettings};
use scma_d2d_core::posy::{to_convex_form, LogSumExp, Monomial, Posynomial};
use scma_d2d_core::{draw_realization, Error, Occupancy, PowerAllocation, ScenarioConfig};

const SEEDS: usize = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Final traces for `seeds` seeds starting at 1; infeasible draws are `None`.
fn traces(jd: usize, seeds: usize, t_max: usize) -> Vec<Option<IterationTrace>> {
    let cfg = ScenarioConfig { d2d_pairs: jd, ..ScenarioConfig::default() };
    let graph = cfg.factor_graph().unwrap();
    let occ = Occupancy::diagonal(cfg.subcarriers, jd).unwrap();
    (1..=seeds as u64)
        .map(|seed| {
            let (_, ch) = draw_realization(&cfg, seed).unwrap();
            match allocate(&cfg, &ch, &graph, &occ, t_max, &allocator_solver_settings()) {
                Ok(t) => Some(t),
                Err(Error::Infeasible { .. }) => None,
                Err(e) => panic!("seed {seed}: {e}"),
            }
        })
        .collect()
}

fn convergence_speed(runs: &[(usize, Vec<Option<IterationTrace>>)]) -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (jd, traces) in runs {
        let feasible: Vec<&IterationTrace> = traces.iter().flatten().collect();
        let fast = feasible
            .iter()
            .filter(|t| {
                let fin = t.final_sum_rate();
                let at5 = t.records.get(5).map_or(fin, |r| r.sum_rate_bits);
                (fin - at5).abs() <= 1e-3 * fin.abs()
            })
            .count();
        let share = fast as f64 / feasible.len() as f64;
        pass &= share >= 0.9;
        details.push(format!("J_D={jd}: {fast}/{} feasible seeds within 0.1% by iteration 5 ({} infeasible)", feasible.len(), traces.len() - feasible.len()));
    }
    outcome(pass, details.join("; "))
}

fn monotone_ascent(runs: &[(usize, Vec<Option<IterationTrace>>)]) -> Outcome {
    let mut worst = 0.0f64;
    let mut steps = 0;
    for (_, traces) in runs {
        for t in traces.iter().flatten() {
            for w in t.records.windows(2) {
                worst = worst.max(w[0].sum_rate_bits - w[1].sum_rate_bits);
                steps += 1;
            }
        }
    }
    outcome(worst <= 1e-8, format!("largest decrease {worst:.3e} bits over {steps} iterations"))
}

/// Miniature instance with three variables; floors relaxed to -30 dB.
fn oracle_equivalence() -> Outcome {
    let cfg = ScenarioConfig {
        users: 2,
        subcarriers: 2,
        nonzero_dims: 1,
        d2d_pairs: 1,
        cellular_sinr_floor_db: -30.0,
        d2d_sinr_floor_db: -30.0,
        ..ScenarioConfig::default()
    };
    let graph = cfg.factor_graph().unwrap();
    let occ = Occupancy::diagonal(2, 1).unwrap();
    let cap_c = cfg.cellular_power_cap_w() / graph.d_f() as f64;
    let cap_d = cfg.d2d_power_cap_w();
    let grid = |cap: f64| -> Vec<f64> { (0..40).map(|i| cap * 10f64.powf(-6.0 * (39 - i) as f64 / 39.0)).collect() };
    let (gc, gd) = (grid(cap_c), grid(cap_d));
    let mut worst = 0.0f64;
    let mut used = 0;
    for seed in 1..=10u64 {
        let (_, ch) = draw_realization(&cfg, seed).unwrap();
        let trace = match allocate(&cfg, &ch, &graph, &occ, 50, &allocator_solver_settings()) {
            Ok(t) => t,
            Err(Error::Infeasible { .. }) => continue,
            Err(e) => return outcome(false, format!("seed {seed}: {e}")),
        };
        let p2 = scma_d2d_core::build_p2(&cfg, &ch, &graph, &occ).unwrap();
        let mut best = f64::NEG_INFINITY;
        for &a in &gc {
            for &b in &gc {
                for &d in &gd {
                    let x = [a, b, d];
                    if p2.max_violation(&x) > 0.0 {
                        continue;
                    }
                    best = best.max(p2.sum_rate_ratio(&x).unwrap());
                }
            }
        }
        let got = trace.final_sum_rate();
        worst = worst.max((got - best).abs() / best);
        used += 1;
    }
    outcome(used == 10 && worst <= 1e-2, format!("{used}/10 seeds feasible, worst relative gap to the 40^3 grid {worst:.2e}"))
}

fn sweep(kind: ExperimentKind, jd: usize) -> SweepResult {
    let spec = ExperimentSpec {
        num_seeds: SEEDS,
        ..ExperimentSpec::new(kind, ScenarioConfig { d2d_pairs: jd, ..ScenarioConfig::default() })
    };
    run_sweep(&spec).unwrap()
}

fn baseline_dominance(sweeps: &[(&str, &SweepResult)]) -> Outcome {
    let mut pass = true;
    let mut smallest = f64::INFINITY;
    let mut points = 0;
    for (_, s) in sweeps {
        for r in &s.rows {
            let gap = r.mean_sum_rate_proposed - r.mean_sum_rate_random;
            pass &= gap > 0.0;
            smallest = smallest.min(gap);
            points += 1;
        }
    }
    let names: Vec<&str> = sweeps.iter().map(|(n, _)| *n).collect();
    outcome(pass, format!("{points} sweep points ({}), smallest mean gap {smallest:.3} bits/s/Hz", names.join(", ")))
}

fn trend_check(cell: &SweepResult, d2d: &SweepResult) -> Outcome {
    let up = cell.trend_test(Trend::NonDecreasing);
    let down = d2d.trend_test(Trend::NonIncreasing);
    let means = |s: &SweepResult| s.rows.iter().map(|r| format!("{:.3}", r.mean_sum_rate_proposed)).collect::<Vec<_>>().join(" ");
    outcome(
        up.consistent(0.05) && down.consistent(0.05),
        format!(
            "P_0: +{} -{} ={} p={:.3} means [{}]; P'_0: +{} -{} ={} p={:.3} means [{}]",
            up.increases,
            up.decreases,
            up.ties,
            up.p_value,
            means(cell),
            down.increases,
            down.decreases,
            down.ties,
            down.p_value,
            means(d2d)
        ),
    )
}

fn bound_sandwich() -> Outcome {
    let spec = ExperimentSpec { num_seeds: 100, ..ExperimentSpec::new(ExperimentKind::BoundValidation, ScenarioConfig::default()) };
    let r = run_bound_validation(&spec).unwrap();
    let (e, c) = (r.eigen_violations(), r.capacity_violations());
    outcome(e == 0 && c == 0, format!("{} eigenvalue rows, {e} eigenvalue violations, {c} capacity violations", r.rows.len()))
}

fn diagonal_collapse() -> Outcome {
    let cfg = ScenarioConfig::default();
    let graph = cfg.factor_graph().unwrap();
    let occ = Occupancy::diagonal(4, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let (_, ch) = draw_realization(&cfg, seed).unwrap();
        let mut alloc = PowerAllocation::zeros(6, 4, 1);
        for j in 0..6 {
            for k in 0..4 {
                if graph.entry(k, j) {
                    alloc.cellular[j][k] = rng.random_range(0.0..0.5);
                }
            }
        }
        alloc.d2d[0] = rng.random_range(0.0..1.0);
        let noise = equivalent_noise(&ch, &alloc, &occ);
        let exact = exact_cellular_capacity_general(&ch, &diagonal_covariances(&alloc), &noise).unwrap();
        let closed = closed_form_cellular_capacity(&ch, &alloc, &noise, &graph);
        worst = worst.max((exact - closed).abs() / closed.abs());
    }
    outcome(worst <= 1e-10, format!("worst relative difference {worst:.2e} over 100 instances"))
}

fn random_posynomial(rng: &mut impl Rng, n: usize) -> Posynomial {
    let terms = rng.random_range(2..6);
    let monos = (0..terms)
        .map(|_| Monomial::new(rng.random_range(0.1..10.0), (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap())
        .collect();
    Posynomial::new(monos).unwrap()
}

fn am_gm_condensation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(48);
    let n = 3;
    let (mut above, mut worst_tight, mut worst_grad) = (0usize, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let g = random_posynomial(&mut rng, n);
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..5.0)).collect();
        let m = g.condense(&x0).unwrap();
        let g0 = g.eval(&x0).unwrap();
        worst_tight = worst_tight.max((m.eval(&x0).unwrap() / g0 - 1.0).abs());
        // monomial gradient a_i m(x) / x_i against central differences of g
        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        for i in 0..n {
            let h = 1e-6 * x0[i];
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (g.eval(&xp).unwrap() - g.eval(&xm).unwrap()) / (2.0 * h);
            let analytic = m.exponents()[i] * m.eval(&x0).unwrap() / x0[i];
            diff2 += (fd - analytic).powi(2);
            norm2 += fd * fd;
        }
        worst_grad = worst_grad.max(diff2.sqrt() / norm2.sqrt().max(1e-300));
        for _ in 0..50 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..20.0)).collect();
            if m.eval(&x).unwrap() > g.eval(&x).unwrap() * (1.0 + 1e-12) {
                above += 1;
            }
        }
    }
    outcome(
        above == 0 && worst_tight <= 1e-10 && worst_grad <= 1e-4,
        format!("{above} points above g, tightness error {worst_tight:.2e}, gradient error {worst_grad:.2e}"),
    )
}

fn gp_correctness() -> Outcome {
    let mono = |c: f64, a: &[f64]| Monomial::new(c, a.to_vec()).unwrap();
    let s = SolverSettings::default();
    let mut errs = Vec::new();
    let mut ok = true;

    let p = to_convex_form(&mono(1.0, &[1.0]).into(), &[mono(1.0, &[-1.0]).into()], &[]).unwrap();
    let r = solve(&p, &[1.0], &s).unwrap();
    let e1 = (r.x[0] - 1.0).abs().max((r.objective_value - 1.0).abs());
    ok &= r.status == SolveStatus::Optimal;
    errs.push(e1);

    let obj = Posynomial::new(vec![mono(1.0, &[1.0]), mono(1.0, &[-1.0])]).unwrap();
    let r = solve(&to_convex_form(&obj, &[], &[]).unwrap(), &[0.7], &s).unwrap();
    let e2 = (r.x[0] - 1.0).abs().max((r.objective_value / 2.0 - 1.0).abs());
    ok &= r.status == SolveStatus::Optimal;
    errs.push(e2);

    let cons = [mono(0.5, &[1.0, 0.0]).into(), mono(1.0 / 3.0, &[0.0, 1.0]).into()];
    let r = solve(&to_convex_form(&mono(1.0, &[-1.0, -1.0]).into(), &cons, &[]).unwrap(), &[0.0, 0.0], &s).unwrap();
    let e3 = (r.x[0] / 2.0 - 1.0).abs().max((r.x[1] / 3.0 - 1.0).abs()).max((r.objective_value * 6.0 - 1.0).abs());
    ok &= r.status == SolveStatus::Optimal;
    errs.push(e3);
    let worst_example = errs.iter().copied().fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst_fd = 0.0f64;
    for _ in 0..20 {
        let n = 3;
        let f = LogSumExp {
            exponents: (0..4).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
            offsets: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = lse_derivatives(&f, &y);
        let h = 1e-5;
        for i in 0..n {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += h;
            ym[i] -= h;
            let fd = (f.value(&yp) - f.value(&ym)) / (2.0 * h);
            worst_fd = worst_fd.max((fd - d.gradient[i]).abs() / d.gradient[i].abs().max(1.0));
            let (gp, gm) = (lse_derivatives(&f, &yp).gradient, lse_derivatives(&f, &ym).gradient);
            for j in 0..n {
                let fd = (gp[j] - gm[j]) / (2.0 * h);
                worst_fd = worst_fd.max((fd - d.hessian[j][i]).abs() / d.hessian[j][i].abs().max(1.0));
            }
        }
    }
    outcome(
        ok && worst_example <= 1e-6 && worst_fd <= 1e-5,
        format!("analytic examples worst relative error {worst_example:.2e}; derivative error {worst_fd:.2e} on 20 instances"),
    )
}

fn pair_effect() -> Outcome {
    let seeds: Vec<u64> = (1..=100).collect();
    let rows = pair_count_effect(&ScenarioConfig::default(), &seeds, 10).unwrap();
    let n = rows.len() as f64;
    let one = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let two = rows.iter().map(|r| r.2).sum::<f64>() / n;
    outcome(
        two > one,
        format!("{} seeds feasible for both; mean J_D=1 {one:.3}, J_D=2 {two:.3} bits/s/Hz ({:+.2}%)", rows.len(), 100.0 * (two / one - 1.0)),
    )
}

fn report(name: &str, started: Instant, o: Outcome, failures: &mut usize) {
    if !o.pass {
        *failures += 1;
    }
    println!("{} {name}: {} [{:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, started.elapsed().as_secs_f64());
}

fn main() -> ExitCode {
    let mut failures = 0;

    let t = Instant::now();
    let runs: Vec<(usize, Vec<Option<IterationTrace>>)> = [1, 2].into_iter().map(|jd| (jd, traces(jd, SEEDS, 20))).collect();
    report("convergence speed", t, convergence_speed(&runs), &mut failures);
    report("monotone ascent", t, monotone_ascent(&runs), &mut failures);

    let t = Instant::now();
    report("oracle equivalence", t, oracle_equivalence(), &mut failures);

    let t = Instant::now();
    let cell1 = sweep(ExperimentKind::SweepCellularCap, 1);
    let d2d1 = sweep(ExperimentKind::SweepD2dCap, 1);
    let cell2 = sweep(ExperimentKind::SweepCellularCap, 2);
    let d2d2 = sweep(ExperimentKind::SweepD2dCap, 2);
    report(
        "baseline dominance",
        t,
        baseline_dominance(&[("P_0 J_D=1", &cell1), ("P'_0 J_D=1", &d2d1), ("P_0 J_D=2", &cell2), ("P'_0 J_D=2", &d2d2)]),
        &mut failures,
    );
    report("trend check", t, trend_check(&cell1, &d2d1), &mut failures);

    let t = Instant::now();
    report("bound sandwich", t, bound_sandwich(), &mut failures);
    let t = Instant::now();
    report("diagonal collapse", t, diagonal_collapse(), &mut failures);
    let t = Instant::now();
    report("AM-GM condensation", t, am_gm_condensation(), &mut failures);
    let t = Instant::now();
    report("GP solver correctness", t, gp_correctness(), &mut failures);
    let t = Instant::now();
    report("J_D effect", t, pair_effect(), &mut failures);

    println!("{} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
