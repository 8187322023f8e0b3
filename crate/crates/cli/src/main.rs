fn main() {
    std::process::exit(spde_lab_cli::main_with(std::env::args_os()));
}
