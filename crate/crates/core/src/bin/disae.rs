fn main() {
    std::process::exit(disae::cli::run(std::env::args_os()));
}
