fn main() {
    std::process::exit(manifold_walk::cli::run_cli(std::env::args_os()));
}
