fn main() {
    std::process::exit(dc_microlocal::cli::main_with(std::env::args_os()));
}
