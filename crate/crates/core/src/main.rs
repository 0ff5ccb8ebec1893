fn main() {
    std::process::exit(udgc::cli::run(std::env::args_os()));
}
