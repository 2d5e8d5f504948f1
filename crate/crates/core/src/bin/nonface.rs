fn main() {
    std::process::exit(nonface::cli::main_from_env());
}
