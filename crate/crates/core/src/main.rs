fn main() {
    std::process::exit(specpred::cli::run(std::env::args_os()));
}
