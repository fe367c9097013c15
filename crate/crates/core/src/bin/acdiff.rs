fn main() {
    std::process::exit(acdiff::cli::main_with_args(std::env::args_os()));
}
