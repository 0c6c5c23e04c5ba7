//! Writes Problem P for the small capacity model as MPS and solves the re-read copy.

use std::path::PathBuf;

use pdmp_lp::io::load_instance;
use pdmp_lp::lp::{read_mps, simplex_solve, write_mps};
use pdmp_lp::occupation::assemble_problem_p;
use pdmp_lp::operators::QuadratureConfig;

fn main() -> pdmp_lp::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/capacity_small.json");
    let inst = load_instance(&path)?.tabulate(&QuadratureConfig::default())?;
    let lp = assemble_problem_p(&inst)?;
    let text = write_mps(&lp, "PROBLEMP");
    println!(
        "{} variables, {} equalities, {} inequalities, {} bytes of MPS",
        lp.num_vars(),
        lp.equalities.len(),
        lp.inequalities.len(),
        text.len()
    );
    let back = read_mps(&text)?;
    println!("original {:.12}", simplex_solve(&lp)?.objective);
    println!("re-read  {:.12}", simplex_solve(&back)?.objective);
    Ok(())
}
