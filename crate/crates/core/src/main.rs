fn main() {
    std::process::exit(gsm_minimax::cli::main_with_args(std::env::args_os()));
}
