//! The `pdmp` command line: solve, simulate, check, gen-capacity, export-lp.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::assumptions::{
    check_growth, check_rate_bounds, check_w_positivity, mass_bound, AssumptionReport, InequalityReport,
    MassBoundReport, ProbeSet, RateBoundsReport, DEFAULT_PROBES,
};
use crate::capacity::{CapacityCost, CapacityModel, CapacityParams};
use crate::error::{Error, Result};
use crate::io::{
    load_instance, parse_certificate, tabulated_certificate, CertificateFile, InstanceFile, LoadedInstance,
};
use crate::lp::{simplex_solve, write_mps, LpStatus, Residuals};
use crate::mdp::{augment_delta, total_cost_lp};
use crate::model::{FiniteInstance, PdmpModel};
use crate::occupation::{assemble_problem_p, OccupationMeasure};
use crate::operators::QuadratureConfig;
use crate::policy::{disintegrate, evaluate_policy_exact, Provenance, StationaryPolicy};
use crate::simulator::{
    sample_trajectories, simulate, write_trajectories_csv, McEstimate, SimConfig, SimulationReport,
};

pub const REPORT_SCHEMA: u32 = 1;
/// Attainment within this of the limit counts as binding.
pub const BINDING_TOL: f64 = 1e-7;

#[derive(Debug, Parser)]
#[command(name = "pdmp", version, about = "Constrained discounted PDMP control via occupation-measure LPs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo trajectories; 0 skips simulation in `solve`.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub n_traj: usize,
    /// Discount cutoff for simulated trajectories.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub eps_disc: f64,
    /// Absolute and relative quadrature tolerance.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub quad_tol: f64,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, env = "PDMP_LP_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the occupation-measure LP and extract a stationary policy.
    Solve { instance: PathBuf },
    /// Estimate the costs of a policy by simulation.
    Simulate {
        instance: PathBuf,
        policy: PathBuf,
        /// Also write the first N trajectories to trajectories.csv.
        #[arg(long, default_value_t = 0)]
        dump: usize,
    },
    /// Check the rate bounds and a growth certificate.
    Check {
        instance: PathBuf,
        certificate: PathBuf,
        /// Chebyshev probes per flow segment.
        #[arg(long, default_value_t = DEFAULT_PROBES)]
        probes: usize,
    },
    /// Write a capacity-expansion instance file.
    GenCapacity(GenCapacity),
    /// Write the LP in MPS format.
    ExportLp {
        instance: PathBuf,
        /// Export the equivalent MDP with the cemetery state instead.
        #[arg(long)]
        augmented: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct GenCapacity {
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0])]
    pub gamma: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5)]
    pub demand_cap: usize,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 5)]
    pub sa_grid: usize,
    /// Backlog cost per unit of outstanding demand.
    #[arg(long, default_value_t = 1.0)]
    pub backlog_cost: f64,
    /// Limit on discounted investment spending; spending rate in mode j is gamma_j.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "capacity.json")]
    pub output: String,
}

impl GenCapacity {
    pub fn params(&self) -> CapacityParams {
        let mut costs = vec![CapacityCost { demand: self.backlog_cost, ..Default::default() }];
        let mut limits = Vec::new();
        if let Some(d) = self.budget {
            costs.push(CapacityCost {
                rate: std::iter::once(0.0).chain(self.gamma.iter().copied()).collect(),
                ..Default::default()
            });
            limits.push(d);
        }
        CapacityParams {
            lambda: self.lambda,
            tau: self.tau,
            gamma: self.gamma.clone(),
            demand_cap: self.demand_cap,
            alpha: self.alpha,
            costs,
            limits,
            depth: self.depth,
            sa_grid: self.sa_grid,
            initial: None,
            max_snap: None,
        }
    }
}

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_UNBOUNDED: i32 = 3;

#[derive(Debug, Clone, Serialize)]
pub struct InstanceSummary {
    pub file: String,
    pub kind: String,
    pub sha256: String,
    pub states: usize,
    pub actions: usize,
    pub rows: usize,
    pub costs: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadratureSummary {
    pub tolerance: f64,
    pub max_error_estimate: f64,
    /// Largest `|G(E) + alpha calL - 1|` over rows.
    pub max_identity_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LpSummary {
    pub status: LpStatus,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub kkt: Option<Residuals>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintLine {
    pub index: usize,
    pub value: f64,
    pub limit: f64,
    pub binding: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicySummary {
    pub states: usize,
    pub randomized_states: usize,
    pub default_fill_states: usize,
    /// Costs of the extracted policy by exact evaluation.
    pub exact_costs: Vec<f64>,
}

/// One line of a Monte Carlo comparison.
#[derive(Debug, Clone, Serialize)]
pub struct McLine {
    pub quantity: String,
    pub reference: f64,
    pub mean: f64,
    pub std_error: f64,
    pub z: f64,
    pub bias_bound: Option<f64>,
    pub pass: bool,
}

impl McLine {
    pub fn new(quantity: impl Into<String>, reference: f64, est: &McEstimate) -> Self {
        McLine {
            quantity: quantity.into(),
            reference,
            mean: est.mean,
            std_error: est.std_error,
            z: est.z_score(reference),
            bias_bound: est.bias_bound,
            pass: est.consistent_with(reference),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McTable {
    pub n_traj: usize,
    pub eps_disc: f64,
    pub mean_jumps: f64,
    pub lines: Vec<McLine>,
    pub max_abs_z: f64,
    pub pass: bool,
}

/// Compares simulated costs, mass and balance residuals with reference values.
pub fn mc_table(sim: &SimulationReport, costs: &[f64], mass: f64, inst: &FiniteInstance) -> McTable {
    let mut lines: Vec<McLine> =
        sim.costs.iter().zip(costs).enumerate().map(|(i, (e, &r))| McLine::new(format!("cost_{i}"), r, e)).collect();
    lines.push(McLine::new("mass", mass, &sim.mass));
    lines.extend(
        sim.balance_residuals
            .iter()
            .enumerate()
            .map(|(j, e)| McLine::new(format!("balance {}", inst.states[j]), 0.0, e)),
    );
    McTable {
        n_traj: sim.n_traj,
        eps_disc: sim.eps_disc,
        mean_jumps: sim.jumps.mean,
        max_abs_z: lines.iter().map(|l| l.z.abs()).fold(0.0, f64::max),
        pass: lines.iter().all(|l| l.pass),
        lines,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionSummary {
    pub rate_bounds: Option<RateBoundsReport>,
    pub w_positivity: InequalityReport,
}

/// Contents of `report.json`; everything here is deterministic for fixed inputs and seed.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub tool_version: String,
    pub seed: u64,
    pub instance: InstanceSummary,
    pub quadrature: QuadratureSummary,
    pub lp: LpSummary,
    pub constraints: Vec<ConstraintLine>,
    pub policy: Option<PolicySummary>,
    pub monte_carlo: Option<McTable>,
    pub assumptions: AssumptionSummary,
}

#[derive(Debug, Clone, Serialize)]
struct Timings {
    tabulate_s: f64,
    solve_s: f64,
    simulate_s: f64,
    total_s: f64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn quad_config(g: &GlobalOpts) -> Result<QuadratureConfig> {
    let q = QuadratureConfig::with_tol(g.quad_tol);
    q.validate()?;
    Ok(q)
}

fn sim_config(g: &GlobalOpts) -> SimConfig {
    SimConfig {
        n_traj: g.n_traj,
        eps_disc: g.eps_disc,
        seed: g.seed,
        quad: QuadratureConfig::with_tol(g.quad_tol),
        ..Default::default()
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn model_notes(loaded: &LoadedInstance) -> Vec<String> {
    match loaded {
        LoadedInstance::Capacity(m) => {
            let snap = m.snap_report();
            vec![
                format!("demand capped at {}: arrivals at the cap leave demand unchanged", m.params().demand_cap),
                "projects are never active at zero demand; completing the last unit of demand goes idle".into(),
                format!(
                    "investment grid of {} points; arrivals snapped by at most {}",
                    snap.grid.len(),
                    snap.max_snap_distance
                ),
            ]
        }
        _ => Vec::new(),
    }
}

/// Runs `f` against the model behind `loaded`, if it has one.
macro_rules! with_model {
    ($loaded:expr, $m:ident => $body:expr, $none:expr) => {
        match $loaded {
            LoadedInstance::Capacity($m) => $body,
            LoadedInstance::ConstantRate($m) => $body,
            LoadedInstance::Tabulated(_) => $none,
        }
    };
}

fn simulate_loaded(
    loaded: &LoadedInstance,
    inst: &FiniteInstance,
    phi: &StationaryPolicy,
    cfg: &SimConfig,
) -> Result<SimulationReport> {
    with_model!(loaded, m => simulate(m, inst, phi, cfg), Err(no_dynamics()))
}

fn no_dynamics() -> Error {
    Error::Incompatible("tabulated instances carry no dynamics to simulate or probe".into())
}

fn summarize_instance(path: &Path, bytes: &[u8], loaded: &LoadedInstance, inst: &FiniteInstance) -> InstanceSummary {
    InstanceSummary {
        file: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        kind: loaded.kind().into(),
        sha256: sha256_hex(bytes),
        states: inst.num_states(),
        actions: inst.num_actions(),
        rows: inst.rows.len(),
        costs: inst.num_costs(),
        notes: model_notes(loaded),
    }
}

fn quadrature_summary(inst: &FiniteInstance, tol: f64) -> QuadratureSummary {
    let mut err: f64 = 0.0;
    let mut ident: f64 = 0.0;
    for r in &inst.rows {
        if let Some(d) = &r.diagnostics {
            err = err.max(d.error_estimate);
        }
        ident = ident.max((r.g_mass() + inst.alpha * r.cal_l - 1.0).abs());
    }
    QuadratureSummary { tolerance: tol, max_error_estimate: err, max_identity_residual: ident }
}

fn write_measure_csv(path: &Path, inst: &FiniteInstance, mu: &OccupationMeasure) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["state", "interior_action", "boundary_action", "mu"])?;
    for (r, &m) in inst.rows.iter().zip(&mu.weights) {
        w.write_record([
            inst.states[r.state.0].as_str(),
            inst.actions[r.interior.0].as_str(),
            inst.actions[r.boundary.0].as_str(),
            &format!("{m:.17e}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `solve`: tabulate, solve the LP, extract and evaluate the policy, cross-check by simulation.
pub fn cmd_solve(path: &Path, g: &GlobalOpts) -> Result<(RunReport, i32)> {
    let start = Instant::now();
    let bytes = fs::read(path)?;
    let loaded = load_instance(path)?;
    let quad = quad_config(g)?;
    let inst = loaded.tabulate(&quad)?;
    let t_tab = start.elapsed().as_secs_f64();

    let lp = assemble_problem_p(&inst)?;
    let sol = simplex_solve(&lp)?;
    let t_solve = start.elapsed().as_secs_f64() - t_tab;

    let probes = with_model!(&loaded, m => Some(ProbeSet::build(m, DEFAULT_PROBES)), None);
    let rate_bounds = match &probes {
        Some(p) => with_model!(&loaded, m => Some(check_rate_bounds(m, p, &quad)?), None),
        None => None,
    };
    let assumptions = AssumptionSummary { rate_bounds, w_positivity: check_w_positivity(&inst, 1e-3) };

    let mut report = RunReport {
        schema: REPORT_SCHEMA,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed: g.seed,
        instance: summarize_instance(path, &bytes, &loaded, &inst),
        quadrature: quadrature_summary(&inst, g.quad_tol),
        lp: LpSummary { status: sol.status, objective: None, iterations: sol.iterations, kkt: None },
        constraints: Vec::new(),
        policy: None,
        monte_carlo: None,
        assumptions,
    };
    let code = match sol.status {
        LpStatus::Infeasible => EXIT_INFEASIBLE,
        LpStatus::Unbounded => EXIT_UNBOUNDED,
        LpStatus::Optimal => EXIT_OK,
    };
    let mut t_sim = 0.0;
    if sol.status == LpStatus::Optimal {
        let weights: Vec<f64> = sol.x.iter().map(|&v| v.max(0.0)).collect();
        let mu = OccupationMeasure::from_weights(&inst, weights);
        let values = mu.cost_values(&inst);
        report.lp.objective = Some(sol.objective);
        report.lp.kkt = Some(sol.residuals(&lp));
        report.constraints = inst
            .limits
            .iter()
            .enumerate()
            .map(|(i, &d)| ConstraintLine {
                index: i + 1,
                value: values[i + 1],
                limit: d,
                binding: (values[i + 1] - d).abs() <= BINDING_TOL,
            })
            .collect();
        let phi = disintegrate(&mu, &inst);
        let exact = evaluate_policy_exact(&phi, &inst)?;
        report.policy = Some(PolicySummary {
            states: phi.states.len(),
            randomized_states: phi.states.iter().filter(|s| s.actions.len() > 1).count(),
            default_fill_states: phi.states.iter().filter(|s| s.provenance == Provenance::DefaultFill).count(),
            exact_costs: exact.costs.clone(),
        });
        if g.n_traj > 0 && !matches!(loaded, LoadedInstance::Tabulated(_)) {
            let t0 = Instant::now();
            let sim = simulate_loaded(&loaded, &inst, &phi, &sim_config(g))?;
            report.monte_carlo = Some(mc_table(&sim, &values, mu.total_mass(), &inst));
            t_sim = t0.elapsed().as_secs_f64();
        }
        fs::write(g.out_dir.join("policy.json"), phi.to_json()? + "\n")?;
        write_measure_csv(&g.out_dir.join("measure.csv"), &inst, &mu)?;
    }
    write_json(&g.out_dir.join("report.json"), &report)?;
    let timings =
        Timings { tabulate_s: t_tab, solve_s: t_solve, simulate_s: t_sim, total_s: start.elapsed().as_secs_f64() };
    write_json(&g.out_dir.join("timings.json"), &timings)?;
    Ok((report, code))
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub schema: u32,
    pub tool_version: String,
    pub seed: u64,
    pub instance_sha256: String,
    pub policy_sha256: String,
    pub monte_carlo: McTable,
}

/// `simulate`: compares simulated costs of a policy with its exact evaluation.
pub fn cmd_simulate(instance: &Path, policy: &Path, dump: usize, g: &GlobalOpts) -> Result<(SimulateReport, i32)> {
    let bytes = fs::read(instance)?;
    let loaded = load_instance(instance)?;
    let inst = loaded.tabulate(&quad_config(g)?)?;
    let policy_bytes = fs::read(policy)?;
    let phi =
        StationaryPolicy::from_json(std::str::from_utf8(&policy_bytes).map_err(|e| Error::Parse(e.to_string()))?)?;
    phi.check_compatible(&inst)?;
    let exact = evaluate_policy_exact(&phi, &inst)?;
    let cfg = sim_config(g);
    let sim = simulate_loaded(&loaded, &inst, &phi, &cfg)?;
    let table = mc_table(&sim, &exact.costs, exact.measure.total_mass(), &inst);
    if dump > 0 {
        let paths = with_model!(&loaded, m => sample_trajectories(m, &inst, &phi, &cfg, dump)?, unreachable!());
        write_trajectories_csv(fs::File::create(g.out_dir.join("trajectories.csv"))?, &inst, &paths)?;
    }
    let code = if table.pass { EXIT_OK } else { EXIT_ERROR };
    let report = SimulateReport {
        schema: REPORT_SCHEMA,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed: g.seed,
        instance_sha256: sha256_hex(&bytes),
        policy_sha256: sha256_hex(&policy_bytes),
        monte_carlo: table,
    };
    write_json(&g.out_dir.join("simulate_report.json"), &report)?;
    Ok((report, code))
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub schema: u32,
    pub certificate: CertificateFile,
    pub rate_bounds: RateBoundsReport,
    pub growth: AssumptionReport,
    pub mass_bound: Option<MassBoundReport>,
    pub w_positivity: InequalityReport,
    pub pass: bool,
}

fn capacity_check(
    m: &CapacityModel,
    cert: &CertificateFile,
    probes: &ProbeSet,
    inst: &FiniteInstance,
    mu: Option<&OccupationMeasure>,
) -> Result<(AssumptionReport, Option<MassBoundReport>)> {
    let CertificateFile::CapacityExponential { rho } = *cert else {
        return Err(Error::Incompatible("capacity instances take a capacity_exponential certificate".into()));
    };
    let growth = m.check_certificate(rho, probes);
    Ok((growth, mu.map(|mu| mass_bound(m, &m.growth_certificate(rho), inst, mu))))
}

/// `check`: rate bounds, the growth certificate, and the mass bound on the LP measure.
pub fn cmd_check(instance: &Path, certificate: &Path, n_probes: usize, g: &GlobalOpts) -> Result<(CheckReport, i32)> {
    let loaded = load_instance(instance)?;
    let cert = parse_certificate(&fs::read_to_string(certificate)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", certificate.display())))?;
    let quad = quad_config(g)?;
    let inst = loaded.tabulate(&quad)?;
    let sol = simplex_solve(&assemble_problem_p(&inst)?)?;
    let mu = (sol.status == LpStatus::Optimal)
        .then(|| OccupationMeasure::from_weights(&inst, sol.x.iter().map(|&v| v.max(0.0)).collect()));
    let (rate_bounds, growth, mass) = match &loaded {
        LoadedInstance::Tabulated(_) => return Err(no_dynamics()),
        LoadedInstance::Capacity(m) => {
            let probes = ProbeSet::build(m, n_probes);
            let (growth, mass) = capacity_check(m, &cert, &probes, &inst, mu.as_ref())?;
            (check_rate_bounds(m, &probes, &quad)?, growth, mass)
        }
        LoadedInstance::ConstantRate(m) => {
            let CertificateFile::Tabulated { v, b, c } = cert.clone() else {
                return Err(Error::Incompatible("constant-rate instances take a tabulated certificate".into()));
            };
            let gc = tabulated_certificate(v, b, c, m.states().len())?;
            let probes = ProbeSet::build(m, n_probes);
            let mass = mu.as_ref().map(|mu| mass_bound(m, &gc, &inst, mu));
            (check_rate_bounds(m, &probes, &quad)?, check_growth(m, &gc, &probes), mass)
        }
    };
    let w = check_w_positivity(&inst, 1e-3);
    let pass = rate_bounds.pass && growth.pass && mass.as_ref().is_none_or(|r| r.pass) && w.pass;
    let report = CheckReport {
        schema: REPORT_SCHEMA,
        certificate: cert,
        rate_bounds,
        growth,
        mass_bound: mass,
        w_positivity: w,
        pass,
    };
    write_json(&g.out_dir.join("check_report.json"), &report)?;
    Ok((report, if pass { EXIT_OK } else { EXIT_ERROR }))
}

/// `gen-capacity`: writes a `capacity_expansion` instance file.
pub fn cmd_gen_capacity(opts: &GenCapacity, g: &GlobalOpts) -> Result<PathBuf> {
    let params = opts.params();
    crate::capacity::build_capacity_model(params.clone())?;
    let path = g.out_dir.join(&opts.output);
    write_json(&path, &InstanceFile::CapacityExpansion(params))?;
    Ok(path)
}

/// `export-lp`: Problem P, or the cemetery-augmented MDP program, as MPS.
pub fn cmd_export_lp(instance: &Path, augmented: bool, g: &GlobalOpts) -> Result<PathBuf> {
    let inst = load_instance(instance)?.tabulate(&quad_config(g)?)?;
    let (lp, name, file) = if augmented {
        (total_cost_lp(&augment_delta(&inst)?)?, "AUGMENTED", "augmented.mps")
    } else {
        (assemble_problem_p(&inst)?, "PROBLEMP", "problem.mps")
    };
    let path = g.out_dir.join(file);
    fs::write(&path, write_mps(&lp, name))?;
    Ok(path)
}

fn status_line(name: &str, pass: bool) -> String {
    format!("{name}: {}", if pass { "PASS (verified on probes)" } else { "FAIL" })
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    fs::create_dir_all(&g.out_dir)?;
    match &cli.command {
        Command::Solve { instance } => {
            let (r, code) = cmd_solve(instance, g)?;
            match r.lp.objective {
                Some(v) => println!("status optimal, value {v:.12}"),
                None => println!("status {:?}", r.lp.status),
            }
            for c in &r.constraints {
                println!(
                    "constraint {}: {:.12} <= {}{}",
                    c.index,
                    c.value,
                    c.limit,
                    if c.binding { " (binding)" } else { "" }
                );
            }
            if let Some(mc) = &r.monte_carlo {
                println!(
                    "monte carlo: {} trajectories, max |z| {:.3}, {}",
                    mc.n_traj,
                    mc.max_abs_z,
                    if mc.pass { "consistent" } else { "INCONSISTENT" }
                );
            }
            Ok(code)
        }
        Command::Simulate { instance, policy, dump } => {
            let (r, code) = cmd_simulate(instance, policy, *dump, g)?;
            for l in &r.monte_carlo.lines {
                println!(
                    "{:<24} ref {:>14.8} mc {:>14.8} se {:.2e} z {:>7.3}",
                    l.quantity, l.reference, l.mean, l.std_error, l.z
                );
            }
            Ok(code)
        }
        Command::Check { instance, certificate, probes } => {
            let (r, code) = cmd_check(instance, certificate, *probes, g)?;
            println!("{}", status_line("rate bounds", r.rate_bounds.pass));
            for i in &r.growth.inequalities {
                println!("{} (min margin {:?})", status_line(&i.name, i.pass), i.min_margin);
            }
            if let Some(m) = &r.mass_bound {
                println!("mass bound: {:.6} <= {:.6} {}", m.total_mass, m.bound, if m.pass { "PASS" } else { "FAIL" });
            }
            Ok(code)
        }
        Command::GenCapacity(opts) => {
            println!("{}", cmd_gen_capacity(opts, g)?.display());
            Ok(EXIT_OK)
        }
        Command::ExportLp { instance, augmented } => {
            println!("{}", cmd_export_lp(instance, *augmented, g)?.display());
            Ok(EXIT_OK)
        }
    }
}

/// Entry point of the `pdmp` binary.
pub fn main() -> i32 {
    main_from(std::env::args_os())
}

pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
