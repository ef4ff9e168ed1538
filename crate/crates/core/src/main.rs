fn main() {
    std::process::exit(cfent::cli::main_with_args(std::env::args_os()));
}
