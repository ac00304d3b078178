fn main() {
    std::process::exit(romcim::cli::main_with(std::env::args_os()));
}
