fn main() {
    std::process::exit(subband::cli::run(std::env::args_os()));
}
