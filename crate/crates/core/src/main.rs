fn main() {
    std::process::exit(bell_lab::cli::main_with_args(std::env::args_os()));
}
