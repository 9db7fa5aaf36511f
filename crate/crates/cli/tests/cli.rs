use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scma-d2d"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

#[test]
fn convergence_writes_trace_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conv.csv");
    let o = run(&["convergence", "--seeds", "2", "--tmax", "3", "--trace", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let h = header(&out);
    assert!(h.starts_with("seed,iteration,sum_rate,solver_status,"), "{h}");
    assert!(h.contains("p_j0_k0_w") && h.contains("pd_0_dbm"), "{h}");
    let rows = fs::read_to_string(&out).unwrap();
    assert!(rows.lines().any(|l| l.starts_with("2,0,")), "seed 2 iteration 0 present");
    assert_eq!(header(&dir.path().join("conv_solver_trace.csv")), "seed,iteration,outer_iteration,t,objective,gap");
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = run(&["compare", "--seeds", "3", "--tmax", "3", "--out", p.to_str().unwrap()]);
        assert!(o.status.success());
    }
    let (a, b) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn compare_to_stdout() {
    let o = run(&["compare", "--seeds", "2", "--tmax", "2"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("seed,sum_rate_proposed,sum_rate_random,status"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn sweep_writes_summary_and_per_seed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, "sweepValuesDbm = [24, 30]\n").unwrap();
    let out = dir.path().join("sweep.csv");
    let o = run(&["sweep-cell", "--config", cfg.to_str().unwrap(), "--seeds", "2", "--tmax", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "sweep_value_dbm,mean_sum_rate_proposed,mean_sum_rate_random,num_infeasible_draws,num_random_infeasible,num_seeds,seed_first,seed_last"
    );
    assert_eq!(text.lines().count(), 3);
    let seeds = fs::read_to_string(dir.path().join("sweep_seeds.csv")).unwrap();
    assert_eq!(seeds.lines().next().unwrap(), "sweep_value_dbm,seed,sum_rate_proposed,sum_rate_random");
    assert_eq!(seeds.lines().count(), 5);
}

#[test]
fn bounds_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    let o = run(&["bounds", "--seeds", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(header(&out), "seed,k,lower,exact,upper");
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1 + 3 * 4);
    assert_eq!(header(&dir.path().join("b_capacity.csv")), "seed,lower,exact,upper");
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    for text in ["K = 0\n", "J = = 4\n", "noSuchKey = 1\n", "cellularSinrFloorDb = \"x\"\n"] {
        fs::write(&cfg, text).unwrap();
        let o = run(&["compare", "--config", cfg.to_str().unwrap(), "--seeds", "1"]);
        assert_eq!(o.status.code(), Some(2), "{text:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run(&["compare", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn trace_needs_out() {
    let o = run(&["convergence", "--seeds", "1", "--trace"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_seeds_is_rejected() {
    let o = run(&["compare", "--seeds", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
