//! Builds the capacity-expansion model and compares quadrature rows with the closed form.

use pdmp_lp::capacity::{build_capacity_model, CapacityCost, CapacityParams};
use pdmp_lp::model::{tabulate, PdmpModel};
use pdmp_lp::operators::QuadratureConfig;

fn main() -> pdmp_lp::Result<()> {
    let params = CapacityParams {
        lambda: 1.0,
        tau: 1.0,
        gamma: vec![1.0, 2.0],
        demand_cap: 5,
        alpha: 1.0,
        costs: vec![CapacityCost { demand: 1.0, ..Default::default() }],
        limits: Vec::new(),
        depth: 2,
        sa_grid: 5,
        initial: None,
        max_snap: None,
    };
    let model = build_capacity_model(params)?;
    println!("grid {:?}", model.snap_report().grid);
    println!("max snap distance {:.4}", model.snap_report().max_snap_distance);

    let quad = QuadratureConfig::default();
    let inst = tabulate(&model, &quad)?;
    let exact = model.closed_form_instance();
    let worst = inst
        .rows
        .iter()
        .zip(&exact.rows)
        .map(|(q, c)| (q.cal_l - c.cal_l).abs().max((q.cal_h - c.cal_h).abs()))
        .fold(0.0, f64::max);
    println!("{} states, {} actions, {} rows", model.states().len(), model.actions().len(), inst.rows.len());
    println!("max |quadrature - closed form| on calL, calH: {worst:.2e}");
    Ok(())
}
