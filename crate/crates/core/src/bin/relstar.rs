fn main() {
    std::process::exit(relstar::cli::run(std::env::args_os()));
}
