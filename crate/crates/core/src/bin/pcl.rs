fn main() {
    std::process::exit(proper_composite::cli::run(std::env::args_os()));
}
