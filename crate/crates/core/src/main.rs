fn main() {
    std::process::exit(curlbound::cli::main_with_args(std::env::args_os()));
}
