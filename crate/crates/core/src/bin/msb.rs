fn main() {
    std::process::exit(msb::cli::run(std::env::args_os()));
}
