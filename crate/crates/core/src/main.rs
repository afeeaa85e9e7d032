fn main() {
    std::process::exit(sigmaflow::cli::run(std::env::args_os()));
}
