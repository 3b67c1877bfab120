fn main() {
    std::process::exit(plekit::cli::run(std::env::args_os()));
}
