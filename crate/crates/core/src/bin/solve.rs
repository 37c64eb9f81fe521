fn main() {
    std::process::exit(solman::cli::run(std::env::args_os()));
}
