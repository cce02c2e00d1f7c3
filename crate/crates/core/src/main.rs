fn main() {
    std::process::exit(dynwalk::cli::main_with_args(std::env::args_os()));
}
