fn main() {
    std::process::exit(dedpo::cli::run(std::env::args_os()));
}
