//! Capacity expansion with a budget on discounted investment spending.

use std::path::PathBuf;

use pdmp_lp::io::load_instance;
use pdmp_lp::occupation::solve_constrained_pdmp;
use pdmp_lp::operators::QuadratureConfig;
use pdmp_lp::policy::{disintegrate, evaluate_policy_exact};

fn main() -> pdmp_lp::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/capacity_budget.json");
    let inst = load_instance(&path)?.tabulate(&QuadratureConfig::default())?;
    let sol = solve_constrained_pdmp(&inst)?;
    println!("backlog cost {:.12}", sol.objective);
    for (v, d) in sol.constraint_values.iter().zip(&inst.limits) {
        println!("spending {v:.12} (limit {d})");
    }
    let phi = disintegrate(&sol.measure, &inst);
    let randomized = phi.states.iter().filter(|s| s.actions.len() > 1).count();
    println!("policy randomizes in {randomized} of {} states", phi.states.len());
    let exact = evaluate_policy_exact(&phi, &inst)?;
    println!("exact policy costs {:?}", exact.costs);
    Ok(())
}
