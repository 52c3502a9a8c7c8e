fn main() {
    std::process::exit(dualcond::cli::main_with_args(std::env::args_os()));
}
