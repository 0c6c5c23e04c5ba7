fn main() {
    std::process::exit(pdmp_lp::cli::main());
}
