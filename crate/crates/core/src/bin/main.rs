fn main() {
    std::process::exit(bec_transport::cli::run_from_args());
}
