fn main() {
    std::process::exit(gausscause_cli::main_with_args(std::env::args_os()));
}
