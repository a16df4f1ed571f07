fn main() {
    std::process::exit(signtopic_cli::run(std::env::args_os()));
}
