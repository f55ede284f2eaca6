fn main() {
    std::process::exit(cartmech_cli::run(std::env::args_os()));
}
