fn main() {
    std::process::exit(gfn_core::cli::main_with_args(std::env::args_os()));
}
