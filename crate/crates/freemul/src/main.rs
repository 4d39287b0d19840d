fn main() {
    std::process::exit(freemul::cli::main_with(std::env::args_os()));
}
