fn main() {
    std::process::exit(scale_core::cli::main_with_args(std::env::args_os()));
}
