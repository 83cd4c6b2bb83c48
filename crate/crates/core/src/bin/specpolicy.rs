fn main() {
    std::process::exit(specpolicy::cli::run(std::env::args_os()));
}
