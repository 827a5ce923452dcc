fn main() {
    std::process::exit(cool_core::cli::run(std::env::args_os()));
}
