fn main() {
    std::process::exit(recp::cli::run(std::env::args_os()));
}
