fn main() {
    std::process::exit(regulab::cli::run(std::env::args_os()));
}
