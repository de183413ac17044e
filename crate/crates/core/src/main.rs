fn main() {
    std::process::exit(bugsgraph::cli::main_with_args(std::env::args_os()));
}
