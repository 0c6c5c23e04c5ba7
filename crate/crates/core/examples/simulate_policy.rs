//! Simulates the optimal policy on the small capacity model and compares with the LP.

use std::path::PathBuf;

use pdmp_lp::io::{load_instance, LoadedInstance};
use pdmp_lp::occupation::solve_constrained_pdmp;
use pdmp_lp::policy::disintegrate;
use pdmp_lp::simulator::{simulate, SimConfig};

fn main() -> pdmp_lp::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/capacity_small.json");
    let LoadedInstance::Capacity(model) = load_instance(&path)? else { unreachable!() };
    let cfg = SimConfig { n_traj: 20_000, ..Default::default() };
    let inst = pdmp_lp::model::tabulate(&model, &cfg.quad)?;
    let sol = solve_constrained_pdmp(&inst)?;
    let phi = disintegrate(&sol.measure, &inst);
    let sim = simulate(&model, &inst, &phi, &cfg)?;
    let lp = std::iter::once(sol.objective).chain(sol.constraint_values.iter().copied());
    for (i, (v, est)) in lp.zip(&sim.costs).enumerate() {
        println!("cost {i}: lp {v:.6} mc {:.6} +- {:.6} (z {:.2})", est.mean, est.std_error, est.z_score(v));
    }
    println!("mass: lp {:.6} mc {:.6}", sol.measure.total_mass(), sim.mass.mean);
    println!("{:.3} jumps and {:.3} boundary hits per trajectory", sim.jumps.mean, sim.boundary_hits.mean);
    Ok(())
}
