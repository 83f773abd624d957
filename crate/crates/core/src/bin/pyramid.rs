fn main() {
    std::process::exit(pyramid_core::cli::main_with(std::env::args_os()));
}
