fn main() {
    std::process::exit(dp_chisq::harness::cli::cli_main(std::env::args()));
}
