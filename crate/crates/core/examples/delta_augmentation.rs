//! The cemetery-augmented total-cost MDP has the same value as the direct LP.

use pdmp_lp::constant_rate::two_state_cycle;
use pdmp_lp::mdp::{augment_delta, solve_total_cost_lp};
use pdmp_lp::model::tabulate;
use pdmp_lp::occupation::solve_constrained_pdmp;
use pdmp_lp::operators::QuadratureConfig;

fn main() -> pdmp_lp::Result<()> {
    let inst = tabulate(&two_state_cycle(), &QuadratureConfig::default())?;
    let direct = solve_constrained_pdmp(&inst)?;
    let aug = solve_total_cost_lp(&augment_delta(&inst)?)?;
    println!("direct {:.12}", direct.objective);
    println!("augmented {:.12}", aug.value);
    println!("inflow to the cemetery {:.12}", aug.cemetery_inflow);
    Ok(())
}
