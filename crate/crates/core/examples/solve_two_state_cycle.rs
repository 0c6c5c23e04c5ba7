//! Solves the two-state cycle, whose value is 1 with masses 4/3 and 2/3.

use pdmp_lp::constant_rate::two_state_cycle;
use pdmp_lp::model::tabulate;
use pdmp_lp::occupation::solve_constrained_pdmp;
use pdmp_lp::operators::QuadratureConfig;
use pdmp_lp::policy::disintegrate;

fn main() -> pdmp_lp::Result<()> {
    let model = two_state_cycle();
    let inst = tabulate(&model, &QuadratureConfig::default())?;
    let sol = solve_constrained_pdmp(&inst)?;
    println!("value {:.12}", sol.objective);
    for (name, m) in inst.states.iter().zip(&sol.measure.marginal) {
        println!("  mass at {name}: {m:.12}");
    }
    println!("{}", disintegrate(&sol.measure, &inst).to_json()?);
    Ok(())
}
