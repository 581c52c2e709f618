fn main() {
    std::process::exit(derevkit::cli::main_with_args(std::env::args_os()));
}
