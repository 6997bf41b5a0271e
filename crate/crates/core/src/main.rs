fn main() {
    std::process::exit(tshap::cli::main_with_args(std::env::args_os()));
}
