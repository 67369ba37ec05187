fn main() {
    std::process::exit(gds_core::cli::run(std::env::args_os()));
}
