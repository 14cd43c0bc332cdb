fn main() {
    std::process::exit(lm_core::cli::run(std::env::args_os()));
}
