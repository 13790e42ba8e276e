fn main() {
    std::process::exit(fixation::cli::run_from(std::env::args_os()));
}
