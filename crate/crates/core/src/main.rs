fn main() {
    std::process::exit(envrepair::cli::main_with_args(std::env::args_os()));
}
