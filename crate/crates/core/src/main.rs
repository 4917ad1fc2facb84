fn main() {
    std::process::exit(contvoc::cli::main_with_args(std::env::args_os()));
}
