fn main() {
    std::process::exit(dml_core::cli::main_with(std::env::args_os()));
}
