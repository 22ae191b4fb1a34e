fn main() {
    std::process::exit(flmicro::cli::run(std::env::args_os()));
}
