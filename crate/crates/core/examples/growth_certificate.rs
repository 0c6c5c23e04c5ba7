//! Checks the exponential growth certificate for several values of rho.

use std::path::PathBuf;

use pdmp_lp::assumptions::{ProbeSet, DEFAULT_PROBES};
use pdmp_lp::capacity::{growth_quadratic, growth_threshold};
use pdmp_lp::io::{load_instance, LoadedInstance};

fn main() -> pdmp_lp::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/capacity.json");
    let LoadedInstance::Capacity(model) = load_instance(&path)? else { unreachable!() };
    let ap = model.params().alpha_prime();
    println!("threshold rho {:.6}", growth_threshold(ap));
    let probes = ProbeSet::build(&model, DEFAULT_PROBES);
    for rho in [0.5, 0.6, 0.7, 0.9] {
        let report = model.check_certificate(rho, &probes);
        println!(
            "rho {rho}: g = {:+.4}, {} (min margin {:.3e})",
            growth_quadratic(ap, rho),
            if report.pass { "pass" } else { "fail" },
            report.min_margin().unwrap_or(f64::NAN)
        );
        for ineq in report.inequalities.iter().filter(|i| !i.pass) {
            println!("  violated: {} at {:?}", ineq.name, ineq.argmin);
        }
    }
    Ok(())
}
