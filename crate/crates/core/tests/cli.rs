mod common;

use std::fs;
use std::path::Path;

use pdmp_lp::cli::{main_from, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK};
use pdmp_lp::io::{load_instance, tabulated_json, LoadedInstance};
use pdmp_lp::lp::{read_mps, simplex_solve};
use pdmp_lp::occupation::assemble_problem_p;
use pdmp_lp::operators::QuadratureConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use common::{fixture, random_instance};

fn pdmp(dir: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["pdmp".to_string(), "--out-dir".into(), dir.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    main_from(argv)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn fx(name: &str) -> String {
    fixture(name).display().to_string()
}

#[test]
fn solve_cycle_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pdmp(dir.path(), &["--n-traj", "0", "solve", &fx("two_state_cycle.json")]), EXIT_OK);
    let r = json(&dir.path().join("report.json"));
    assert!((r["lp"]["objective"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(r["instance"]["kind"], "constant_rate");
    assert!(r["monte_carlo"].is_null());
    for f in ["policy.json", "measure.csv", "timings.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("measure.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn binding_budget_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pdmp(dir.path(), &["--n-traj", "0", "solve", &fx("capacity_small.json")]), EXIT_OK);
    let r = json(&dir.path().join("report.json"));
    let c = &r["constraints"][0];
    assert_eq!(c["binding"], true);
    assert!((c["value"].as_f64().unwrap() - c["limit"].as_f64().unwrap()).abs() <= 1e-7);
    // The extracted policy reproduces the LP exactly.
    let exact = r["policy"]["exact_costs"].as_array().unwrap();
    assert!((exact[0].as_f64().unwrap() - r["lp"]["objective"].as_f64().unwrap()).abs() < 1e-7);
}

#[test]
fn malformed_and_missing_inputs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"kind\": \"tabulated\", \"alpha\": ").unwrap();
    assert_eq!(pdmp(dir.path(), &["solve", bad.to_str().unwrap()]), EXIT_ERROR);
    assert_eq!(pdmp(dir.path(), &["solve", "/nonexistent/instance.json"]), EXIT_ERROR);
    assert_eq!(pdmp(dir.path(), &["frobnicate"]), EXIT_ERROR);
}

#[test]
fn infeasible_limits_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut inst = random_instance(&mut ChaCha8Rng::seed_from_u64(5), 3, 2, 1);
    // Every row carries a strictly positive constraint cost, so a zero limit admits no measure.
    inst.limits[0] = 0.0;
    let path = dir.path().join("infeasible.json");
    fs::write(&path, tabulated_json(&inst).unwrap()).unwrap();
    assert_eq!(pdmp(dir.path(), &["solve", path.to_str().unwrap()]), EXIT_INFEASIBLE);
    let r = json(&dir.path().join("report.json"));
    assert_eq!(r["lp"]["status"], "Infeasible");
    assert!(r["lp"]["objective"].is_null());
}

#[test]
fn solve_then_simulate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(pdmp(d, &["--n-traj", "0", "solve", &fx("two_state_cycle.json")]), EXIT_OK);
    let policy = d.join("policy.json");
    let code = pdmp(
        d,
        &[
            "--n-traj",
            "20000",
            "--seed",
            "3",
            "simulate",
            &fx("two_state_cycle.json"),
            policy.to_str().unwrap(),
            "--dump",
            "4",
        ],
    );
    assert_eq!(code, EXIT_OK);
    let r = json(&d.join("simulate_report.json"));
    assert_eq!(r["seed"], 3);
    let lines = r["monte_carlo"]["lines"].as_array().unwrap();
    assert!(lines.iter().all(|l| l["z"].as_f64().unwrap().abs() <= 4.0));
    let traj = fs::read_to_string(d.join("trajectories.csv")).unwrap();
    assert!(traj.starts_with("traj_id,k,T_k,Z_k,theta_k,theta_partial_k,boundary_hit"));
    let ids: std::collections::BTreeSet<&str> = traj.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.len(), 4);

    // A policy from a different instance is rejected.
    assert_eq!(
        pdmp(d, &["--n-traj", "100", "simulate", &fx("capacity_small.json"), policy.to_str().unwrap()]),
        EXIT_ERROR
    );
}

#[test]
fn check_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(pdmp(d, &["check", &fx("capacity.json"), &fx("certificate_rho07.json")]), EXIT_OK);
    let r = json(&d.join("check_report.json"));
    assert_eq!(r["pass"], true);
    assert!(r["mass_bound"]["pass"].as_bool().unwrap());

    assert_eq!(pdmp(d, &["check", &fx("capacity.json"), &fx("certificate_rho05.json")]), EXIT_ERROR);
    let r = json(&d.join("check_report.json"));
    assert_eq!(r["growth"]["pass"], false);
    let worst = r["growth"]["inequalities"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|i| i["min_margin"].as_f64())
        .fold(f64::INFINITY, f64::min);
    assert!((worst + 0.25).abs() < 1e-9, "{worst}");

    // Certificate kind must match the instance kind.
    assert_eq!(pdmp(d, &["check", &fx("two_state_cycle.json"), &fx("certificate_rho07.json")]), EXIT_ERROR);
}

#[test]
fn gen_capacity_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = pdmp(
        d,
        &[
            "gen-capacity",
            "--demand-cap",
            "3",
            "--depth",
            "1",
            "--sa-grid",
            "3",
            "--budget",
            "0.5",
            "--output",
            "gen.json",
        ],
    );
    assert_eq!(code, EXIT_OK);
    let LoadedInstance::Capacity(m) = load_instance(&d.join("gen.json")).unwrap() else { panic!() };
    assert_eq!(m.params().demand_cap, 3);
    assert_eq!(m.params().limits, vec![0.5]);
    assert!(pdmp(d, &["gen-capacity", "--tau", "-1"]) == EXIT_ERROR);
}

#[test]
fn export_lp_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let inst = load_instance(&fixture("capacity_small.json")).unwrap().tabulate(&QuadratureConfig::default()).unwrap();
    let direct = simplex_solve(&assemble_problem_p(&inst).unwrap()).unwrap().objective;

    assert_eq!(pdmp(d, &["export-lp", &fx("capacity_small.json")]), EXIT_OK);
    let lp = read_mps(&fs::read_to_string(d.join("problem.mps")).unwrap()).unwrap();
    assert!(lp.var_names.iter().all(|v| v.starts_with("mu_")));
    assert!((simplex_solve(&lp).unwrap().objective - direct).abs() < 1e-9);

    assert_eq!(pdmp(d, &["export-lp", "--augmented", &fx("capacity_small.json")]), EXIT_OK);
    let aug = read_mps(&fs::read_to_string(d.join("augmented.mps")).unwrap()).unwrap();
    assert!((simplex_solve(&aug).unwrap().objective - direct).abs() < 1e-7);
}
