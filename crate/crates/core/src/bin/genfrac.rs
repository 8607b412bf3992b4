fn main() {
    std::process::exit(genfrac::cli::main_with_args(std::env::args_os()));
}
