fn main() {
    std::process::exit(idgap_cli::main_with(std::env::args_os()));
}
