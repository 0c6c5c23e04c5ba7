//! End-to-end acceptance checks. Runs without the default harness so every
//! check prints exactly one PASS/FAIL line; exits nonzero if any fails.

mod common;

use std::time::Instant;

use pdmp_lp::assumptions::{mass_bound, ProbeSet, DEFAULT_PROBES};
use pdmp_lp::capacity::{growth_quadratic, CapacityModel, CapacityPoint};
use pdmp_lp::cli::{cmd_solve, GlobalOpts};
use pdmp_lp::io::{load_instance, LoadedInstance};
use pdmp_lp::mdp::{augment_delta, solve_total_cost_lp};
use pdmp_lp::model::{ActionId, FeasibleSet, FiniteInstance, Jump, PdmpModel, StateId};
use pdmp_lp::occupation::solve_constrained_pdmp;
use pdmp_lp::operators::{evaluate_row, QuadratureConfig};
use pdmp_lp::policy::{disintegrate, evaluate_policy_exact};
use pdmp_lp::simulator::{ks_critical, ks_statistic, simulate, trajectory_rng, InterjumpSampler, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{all_deterministic, fixture, oracle_policy_costs, random_instance};

struct Outcome {
    pass: bool,
    detail: String,
}

fn capacity(name: &str) -> CapacityModel {
    match load_instance(&fixture(name)).unwrap() {
        LoadedInstance::Capacity(m) => m,
        _ => panic!("{name} is not a capacity instance"),
    }
}

fn operator_identities() -> Outcome {
    let m = capacity("capacity.json");
    let quad = QuadratureConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut e1, mut e2): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let j = StateId(rng.gen_range(0..m.states().len()));
        let set = m.feasible(j);
        let k = set.interior[rng.gen_range(0..set.interior.len())];
        let i = set.boundary[rng.gen_range(0..set.boundary.len())];
        let r = evaluate_row(&m, &m.states()[j.0], &m.actions()[k.0], &m.actions()[i.0], &quad).unwrap();
        e1 = e1.max((r.g_mass() + m.alpha() * r.cal_l - 1.0).abs());
        e2 = e2.max((r.diagnostics.l_lambda_alpha + r.cal_h - 1.0).abs());
    }
    Outcome {
        pass: e1 <= 1e-8 && e2 <= 1e-8,
        detail: format!(
            "200 rows, max |G(E) + alpha calL - 1| = {e1:.2e}, max |L(lam + alpha) + calH - 1| = {e2:.2e} (tol 1e-8)"
        ),
    }
}

fn closed_form_rows() -> Outcome {
    let m = capacity("capacity.json");
    let quad = QuadratureConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let j = StateId(rng.gen_range(0..m.states().len()));
        let set = m.feasible(j);
        let k = set.interior[rng.gen_range(0..set.interior.len())];
        let i = set.boundary[rng.gen_range(0..set.boundary.len())];
        let q = evaluate_row(&m, &m.states()[j.0], &m.actions()[k.0], &m.actions()[i.0], &quad).unwrap();
        let c = m.closed_form_row(j, k, i);
        let mut dense = vec![0.0; m.states().len()];
        for &(s, p) in &q.g {
            dense[s.0] += p;
        }
        for &(s, p) in &c.g {
            dense[s.0] -= p;
        }
        let g = dense.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let scalars = [q.cal_l - c.cal_l, q.cal_h - c.cal_h, q.lf[0] - c.lf[0], q.hr[0] - c.hr[0]];
        worst = worst.max(g).max(scalars.iter().fold(0.0, |a, v| a.max(v.abs())));
    }
    Outcome { pass: worst <= 1e-9, detail: format!("100 rows, max entrywise discrepancy {worst:.2e} (tol 1e-9)") }
}

fn cycle_anchor() -> Outcome {
    let inst = load_instance(&fixture("two_state_cycle.json")).unwrap().tabulate(&QuadratureConfig::default()).unwrap();
    let sol = solve_constrained_pdmp(&inst).unwrap();
    // Geometric series with beta = lam / (lam + alpha) = 1/2 from z1.
    let beta: f64 = 0.5;
    let mu = [1.0 / (1.0 - beta * beta), beta / (1.0 - beta * beta)];
    let dv = (sol.objective - 1.0).abs();
    let dm = (sol.measure.marginal[0] - mu[0]).abs().max((sol.measure.marginal[1] - mu[1]).abs());
    Outcome {
        pass: dv <= 1e-9 && dm <= 1e-9,
        detail: format!(
            "value {:.12} (|err| {dv:.1e}), masses ({:.12}, {:.12}) (|err| {dm:.1e})",
            sol.objective, sol.measure.marginal[0], sol.measure.marginal[1]
        ),
    }
}

fn random_instances(seed: u64, count: usize, max_states: usize, max_pairs: usize) -> Vec<FiniteInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(0..=2);
            random_instance(&mut rng, max_states, max_pairs, n)
        })
        .collect()
}

fn equivalence_round_trip() -> Outcome {
    let mut gap: f64 = 0.0;
    let mut excess = f64::NEG_INFINITY;
    for inst in random_instances(21, 20, 6, 4) {
        let sol = solve_constrained_pdmp(&inst).unwrap();
        let phi = disintegrate(&sol.measure, &inst);
        let ev = evaluate_policy_exact(&phi, &inst).unwrap();
        gap = gap.max((ev.costs[0] - sol.objective).abs());
        for (c, d) in ev.costs[1..].iter().zip(&inst.limits) {
            excess = excess.max(c - d);
        }
    }
    Outcome {
        pass: gap <= 1e-7 && excess <= 1e-7,
        detail: format!("20 instances, max |LP - policy value| {gap:.2e}, max D_i - d_i {excess:.2e} (tol 1e-7)"),
    }
}

fn augmentation_equivalence() -> Outcome {
    let mut gap: f64 = 0.0;
    for inst in random_instances(21, 20, 6, 4) {
        let direct = solve_constrained_pdmp(&inst).unwrap().objective;
        let aug = solve_total_cost_lp(&augment_delta(&inst).unwrap()).unwrap().value;
        gap = gap.max((direct - aug).abs());
    }
    Outcome { pass: gap <= 1e-7, detail: format!("20 instances, max |direct - augmented| {gap:.2e} (tol 1e-7)") }
}

fn brute_force_oracle() -> Outcome {
    let mut ok = true;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_eq: f64 = 0.0;
    for inst in random_instances(31, 10, 3, 3) {
        let lp = solve_constrained_pdmp(&inst).unwrap().objective;
        let best = all_deterministic(&inst)
            .into_iter()
            .map(|c| oracle_policy_costs(&inst, &c))
            .filter(|c| c[1..].iter().zip(&inst.limits).all(|(v, d)| *v <= d + 1e-12))
            .map(|c| c[0])
            .fold(f64::INFINITY, f64::min);
        worst_gap = worst_gap.max(lp - best);
        ok &= lp <= best + 1e-9;
        if inst.limits.is_empty() {
            worst_eq = worst_eq.max((lp - best).abs());
            ok &= (lp - best).abs() <= 1e-9;
        }
    }
    Outcome {
        pass: ok,
        detail: format!(
            "10 instances, max LP - best deterministic {worst_gap:.2e}, unconstrained |gap| {worst_eq:.2e} (tol 1e-9)"
        ),
    }
}

fn mc_consistency() -> Outcome {
    let cfg = SimConfig { n_traj: 100_000, seed: 0, ..Default::default() };
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["two_state_cycle.json", "capacity_small.json"] {
        let loaded = load_instance(&fixture(name)).unwrap();
        let inst = loaded.tabulate(&cfg.quad).unwrap();
        let sol = solve_constrained_pdmp(&inst).unwrap();
        let phi = disintegrate(&sol.measure, &inst);
        let sim = match &loaded {
            LoadedInstance::Capacity(m) => simulate(m, &inst, &phi, &cfg),
            LoadedInstance::ConstantRate(m) => simulate(m, &inst, &phi, &cfg),
            LoadedInstance::Tabulated(_) => unreachable!(),
        }
        .unwrap();
        let mut refs = vec![(sol.objective, sim.costs[0])];
        refs.extend(sol.constraint_values.iter().zip(&sim.costs[1..]).map(|(v, e)| (*v, *e)));
        refs.push((sol.measure.total_mass(), sim.mass));
        refs.extend(sim.balance_residuals.iter().map(|e| (0.0, *e)));
        let z = refs.iter().map(|(r, e)| e.z_score(*r).abs()).fold(0.0, f64::max);
        ok &= z <= 3.0;
        lines.push(format!("{name}: {} quantities, max |z| {z:.2}", refs.len()));
    }
    Outcome { pass: ok, detail: format!("{} (limit 3)", lines.join("; ")) }
}

/// Unit-speed flow on `[0, 2)` with rate `c (1 + y^2)`; `c` switches from 1 to 3 at a chosen time.
struct Ramp;

#[derive(Debug, Clone)]
enum RampAction {
    Steady,
    SwitchAt(f64),
}

fn ramp_integral(a: f64, b: f64) -> f64 {
    (b - a) + (b * b * b - a * a * a) / 3.0
}

impl PdmpModel for Ramp {
    type Point = f64;
    type Action = RampAction;
    type Control = f64;
    fn alpha(&self) -> f64 {
        1.0
    }
    fn states(&self) -> &[f64] {
        &[0.0, 0.2]
    }
    fn actions(&self) -> &[RampAction] {
        &[]
    }
    fn feasible(&self, _j: StateId) -> FeasibleSet {
        FeasibleSet { interior: vec![ActionId(0)], boundary: vec![ActionId(0)] }
    }
    fn flow(&self, x: &f64, t: f64) -> f64 {
        x + t
    }
    fn t_star(&self, x: &f64) -> f64 {
        2.0 - x
    }
    fn rate(&self, y: &f64, c: &f64) -> f64 {
        c * (1.0 + y * y)
    }
    fn control(&self, _x: &f64, a: &RampAction, t: f64) -> f64 {
        match a {
            RampAction::SwitchAt(ts) if t >= *ts => 3.0,
            _ => 1.0,
        }
    }
    fn ell_breakpoints(&self, _x: &f64, a: &RampAction) -> Vec<f64> {
        match a {
            RampAction::SwitchAt(ts) => vec![*ts],
            RampAction::Steady => Vec::new(),
        }
    }
    fn jump(&self, _p: &f64, _j: Jump<'_, f64, RampAction>) -> Vec<(StateId, f64)> {
        vec![(StateId(0), 1.0)]
    }
    fn num_costs(&self) -> usize {
        1
    }
    fn running_cost(&self, _i: usize, _y: &f64, _a: &RampAction) -> f64 {
        0.0
    }
    fn boundary_cost(&self, _i: usize, _z: &f64, _a: &RampAction) -> f64 {
        0.0
    }
    fn initial(&self) -> Vec<f64> {
        vec![1.0, 0.0]
    }
    fn limits(&self) -> Vec<f64> {
        Vec::new()
    }
}

fn survival_law() -> Outcome {
    let quad = QuadratureConfig::default();
    let n = 100_000;
    let crit = ks_critical(n, 0.01);
    let mut stats = Vec::new();
    let mut run = |sampler: InterjumpSampler, big_lambda: &dyn Fn(f64) -> f64, t_star: f64, stream: u64| {
        let mut rng = trajectory_rng(8, stream);
        let mut xs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng).0).collect();
        let left = |t: f64| 1.0 - (-big_lambda(t.min(t_star))).exp();
        let cdf = |t: f64| if t >= t_star { 1.0 } else { left(t) };
        stats.push(ks_statistic(&mut xs, cdf, left));
    };

    let cycle = match load_instance(&fixture("two_state_cycle.json")).unwrap() {
        LoadedInstance::ConstantRate(m) => m,
        _ => unreachable!(),
    };
    run(InterjumpSampler::new(&cycle, &0, &0, &quad).unwrap(), &|t| t, f64::INFINITY, 0);

    let cap = capacity("capacity.json");
    for (x, stream) in [(CapacityPoint { s: 0.0, m: 1, j: 1 }, 1), (CapacityPoint { s: 0.5, m: 2, j: 2 }, 2)] {
        let j = cap.lookup(&x).unwrap();
        let a = &cap.actions()[cap.feasible(j).interior[0].0];
        let lam = cap.params().lambda;
        let t_star = cap.t_star(&x);
        run(InterjumpSampler::new(&cap, &x, a, &quad).unwrap(), &|t| lam * t, t_star, stream);
    }

    run(InterjumpSampler::new(&Ramp, &0.0, &RampAction::Steady, &quad).unwrap(), &|t| ramp_integral(0.0, t), 2.0, 3);
    let (x, ts) = (0.2, 0.5);
    let switched = |t: f64| {
        if t <= ts {
            ramp_integral(x, x + t)
        } else {
            ramp_integral(x, x + ts) + 3.0 * ramp_integral(x + ts, x + t)
        }
    };
    run(InterjumpSampler::new(&Ramp, &x, &RampAction::SwitchAt(ts), &quad).unwrap(), &switched, 1.8, 4);

    let worst = stats.iter().copied().fold(0.0, f64::max);
    let list: Vec<String> = stats.iter().map(|d| format!("{d:.4}")).collect();
    Outcome {
        pass: worst < crit,
        detail: format!("5 pairs x {n} draws, KS D = [{}], critical {crit:.4}", list.join(", ")),
    }
}

fn growth_certificate() -> Outcome {
    let m = capacity("capacity.json");
    let probes = ProbeSet::build(&m, DEFAULT_PROBES);
    let ok = m.check_certificate(0.7, &probes);
    let bad = m.check_certificate(0.5, &probes);
    let margin = bad.min_margin().unwrap();
    let expected = growth_quadratic(m.params().alpha_prime(), 0.5);
    let inst = load_instance(&fixture("capacity.json")).unwrap().tabulate(&QuadratureConfig::default()).unwrap();
    let sol = solve_constrained_pdmp(&inst).unwrap();
    let mb = mass_bound(&m, &m.growth_certificate(0.7), &inst, &sol.measure);
    Outcome {
        pass: ok.pass && !bad.pass && (margin - expected).abs() <= 1e-9 && (margin + 0.25).abs() <= 1e-9 && mb.pass,
        detail: format!(
            "rho 0.7 {} (min margin {:.3e}), rho 0.5 {} (min margin {margin:.6}, g(1/2) = {expected:.6}), LP mass {:.6} <= bound {:.6}",
            if ok.pass { "passes" } else { "FAILS" },
            ok.min_margin().unwrap(),
            if bad.pass { "PASSES" } else { "fails" },
            mb.total_mass,
            mb.bound
        ),
    }
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let reports: Vec<Vec<u8>> = dirs
        .iter()
        .map(|d| {
            let g = GlobalOpts {
                seed: 0,
                n_traj: 100_000,
                eps_disc: 1e-8,
                quad_tol: 1e-10,
                out_dir: d.path().to_path_buf(),
                threads: None,
            };
            cmd_solve(&fixture("capacity_small.json"), &g).unwrap();
            std::fs::read(d.path().join("report.json")).unwrap()
        })
        .collect();
    Outcome {
        pass: reports[0] == reports[1],
        detail: format!(
            "two solve runs, report.json {} bytes, identical: {}",
            reports[0].len(),
            reports[0] == reports[1]
        ),
    }
}

fn main() {
    type Check = fn() -> Outcome;
    let checks: [(&str, Check, f64); 10] = [
        ("operator identities", operator_identities, 10.0),
        ("closed-form rows vs quadrature", closed_form_rows, 10.0),
        ("two-state cycle analytic value", cycle_anchor, 1.0),
        ("LP value equals extracted policy value", equivalence_round_trip, 30.0),
        ("cemetery-augmented MDP equals direct LP", augmentation_equivalence, 30.0),
        ("brute-force deterministic policy oracle", brute_force_oracle, 10.0),
        ("Monte Carlo consistency", mc_consistency, 120.0),
        ("survival law KS test", survival_law, 60.0),
        ("growth certificate and mass bound", growth_certificate, 10.0),
        ("deterministic report", determinism, 240.0),
    ];
    let mut failed = 0;
    for (k, (name, check, limit)) in checks.iter().enumerate() {
        let start = Instant::now();
        let out =
            std::panic::catch_unwind(check).unwrap_or_else(|_| Outcome { pass: false, detail: "panicked".into() });
        let secs = start.elapsed().as_secs_f64();
        let pass = out.pass && secs <= *limit;
        if !pass {
            failed += 1;
        }
        println!(
            "[{:>2}/10] {}: {name}: {} [{secs:.2} s, limit {limit} s]",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    println!("acceptance: {} of 10 passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
