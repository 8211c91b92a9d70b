fn main() {
    std::process::exit(fhd_cli::main_with(std::env::args_os()));
}
