fn main() {
    std::process::exit(timebin_core::cli::main_with_args(std::env::args_os()));
}
