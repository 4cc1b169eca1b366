fn main() {
    std::process::exit(rve_scope::cli::main_with_args(std::env::args_os()));
}
