fn main() {
    std::process::exit(flowdet::cli::run());
}
