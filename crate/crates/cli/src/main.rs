fn main() {
    std::process::exit(crossing_cli::main_with(std::env::args_os()));
}
