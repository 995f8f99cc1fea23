fn main() {
    std::process::exit(invharm::cli::run(std::env::args_os()));
}
