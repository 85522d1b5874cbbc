fn main() {
    std::process::exit(rmcle::cli::run(std::env::args_os()));
}
