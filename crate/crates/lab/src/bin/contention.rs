fn main() {
    std::process::exit(contention_lab::cli::run(std::env::args_os()));
}
