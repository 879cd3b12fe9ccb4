fn main() {
    std::process::exit(riskmap::cli::run(std::env::args_os()));
}
